use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const MAX_RANK: usize = 4;

/// Dense row-major tensor of 32-bit reals with rank 1 to 4.
///
/// On disk: `"TNSR" | u32 rank | rank x u32 dims | f32 data`, all little-endian.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::RankOutOfRange(dims.len()));
        }
        let len = checked_len(&dims);
        if dims.contains(&0) || len != Some(data.len()) {
            return Err(Error::InvalidDims {
                dims,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = checked_len(&dims).unwrap_or(0);
        Self::new(dims, vec![0.0; len])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.dims, self.data)
    }

    /// Serialize to the little-endian binary layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cursor.take(4)?.try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let rank = cursor.u32()? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::RankOutOfRange(rank));
        }
        let dims = (0..rank)
            .map(|_| cursor.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = match checked_len(&dims) {
            Some(len) if !dims.contains(&0) => len,
            _ => return Err(Error::InvalidDims { dims, len: 0 }),
        };
        let payload = len.checked_mul(4).ok_or_else(|| Error::InvalidDims {
            dims: dims.clone(),
            len,
        })?;
        let raw = cursor.take(payload)?;
        let rest = bytes.len() - cursor.pos;
        if rest != 0 {
            return Err(Error::TrailingBytes(rest));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::new(dims, data)
    }
}

fn checked_len(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.saturating_add(n);
        if end > self.bytes.len() {
            return Err(Error::TruncatedPayload {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    Tensor::from_bytes(&fs::read(path)?)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, t.to_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dims: &[u32]) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b
    }

    #[test]
    fn identity_2x2_decodes() {
        let mut bytes = header(&[2, 2]);
        for v in [1.0f32, 0.0, 0.0, 1.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let t = Tensor::from_bytes(&bytes).unwrap();
        assert_eq!(t.dims(), &[2, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_payload_is_16_bytes_after_header() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 4 + 4 + 2 * 4 + 16);
    }

    #[test]
    fn half_has_known_bit_pattern() {
        let t = Tensor::new(vec![1], vec![0.5]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[12..], &0x3F00_0000u32.to_le_bytes());
        assert_eq!(&bytes[12..], &[0x00, 0x00, 0x00, 0x3F]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = b"XXXX".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn rejects_rank_zero_and_five() {
        assert!(matches!(
            Tensor::from_bytes(&header(&[])),
            Err(Error::RankOutOfRange(0))
        ));
        assert!(matches!(
            Tensor::from_bytes(&header(&[1, 1, 1, 1, 1])),
            Err(Error::RankOutOfRange(5))
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = header(&[3]);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(Error::TruncatedPayload { .. })
        ));
        assert!(matches!(
            Tensor::from_bytes(b"TN"),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let mut bytes = header(&[2]);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(Error::NonFiniteValue(1))
        ));
        assert!(matches!(
            Tensor::new(vec![1], vec![f32::INFINITY]),
            Err(Error::NonFiniteValue(0))
        ));
    }

    #[test]
    fn rejects_zero_dim_and_trailing_bytes() {
        assert!(matches!(
            Tensor::from_bytes(&header(&[2, 0])),
            Err(Error::InvalidDims { .. })
        ));
        let mut bytes = Tensor::new(vec![1], vec![2.0]).unwrap().to_bytes();
        bytes.push(0);
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(Error::TrailingBytes(1))
        ));
    }

    #[test]
    fn new_checks_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }
}
