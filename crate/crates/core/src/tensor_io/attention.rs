use crate::error::{Error, Result};

use super::Tensor;

/// Row-sum tolerance for raw or pre-averaged attention rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Attention matrices of all transformer blocks for one image, shallowest first.
///
/// Each layer is either raw `(heads, T, T)` or pre-averaged `(T, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    layers: Vec<Tensor>,
    token_count: usize,
    target_index: usize,
}

/// An attention row whose sum strays from 1 by more than [`ROW_SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct RowSumWarning {
    pub layer: usize,
    pub head: Option<usize>,
    pub row: usize,
    pub sum: f64,
}

impl std::fmt::Display for RowSumWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.head {
            Some(h) => write!(
                f,
                "layer {} head {} row {} sums to {:.6}",
                self.layer, h, self.row, self.sum
            ),
            None => write!(
                f,
                "layer {} row {} sums to {:.6}",
                self.layer, self.row, self.sum
            ),
        }
    }
}

impl AttentionStack {
    pub fn new(layers: Vec<Tensor>, target_index: usize) -> Result<Self> {
        let first = layers.first().ok_or(Error::EmptyStack)?;
        let token_count = *first.dims().last().expect("rank >= 1");
        for (l, layer) in layers.iter().enumerate() {
            let dims = layer.dims();
            let square = match dims {
                [a, b] | [_, a, b] => *a == token_count && *b == token_count,
                _ => false,
            };
            if !square {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} has shape {dims:?}, expected ({token_count}, {token_count}) or (heads, {token_count}, {token_count})"
                )));
            }
            let row_len = token_count;
            if let Some((i, &v)) = layer.data().iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::NegativeAttention {
                    layer: l,
                    row: (i / row_len) % token_count,
                    value: v,
                });
            }
        }
        if target_index >= token_count {
            return Err(Error::TargetOutOfRange {
                index: target_index,
                tokens: token_count,
            });
        }
        Ok(Self {
            layers,
            token_count,
            target_index,
        })
    }

    /// Split a stacked tensor into layers: rank 2 is one pre-averaged layer,
    /// rank 3 is `(L, T, T)` pre-averaged, rank 4 is `(L, heads, T, T)` raw.
    pub fn from_tensor(t: Tensor, target_index: usize) -> Result<Self> {
        let dims = t.dims().to_vec();
        let (layer_count, layer_dims) = match dims.as_slice() {
            [a, b] => (1, vec![*a, *b]),
            [l, a, b] => (*l, vec![*a, *b]),
            [l, h, a, b] => (*l, vec![*h, *a, *b]),
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "attention tensor of shape {dims:?} is not a layer stack"
                )))
            }
        };
        let per_layer: usize = layer_dims.iter().product();
        let (_, data) = t.into_parts();
        let layers = data
            .chunks_exact(per_layer)
            .take(layer_count)
            .map(|chunk| Tensor::new(layer_dims.clone(), chunk.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, target_index)
    }

    pub fn layers(&self) -> &[Tensor] {
        &self.layers
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn row_sum_warnings(&self) -> Vec<RowSumWarning> {
        let t = self.token_count;
        let mut warnings = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let raw = layer.rank() == 3;
            for (r, row) in layer.data().chunks_exact(t).enumerate() {
                let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    warnings.push(RowSumWarning {
                        layer: l,
                        head: raw.then_some(r / t),
                        row: r % t,
                        sum,
                    });
                }
            }
        }
        warnings
    }
}

/// Final-layer activations and class-score gradients, both `(K, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCamInput {
    activations: Tensor,
    gradients: Tensor,
    class_id: usize,
}

impl GradCamInput {
    pub fn new(activations: Tensor, gradients: Tensor, class_id: usize) -> Result<Self> {
        if activations.rank() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "activations must be (K, H, W), got {:?}",
                activations.dims()
            )));
        }
        if activations.dims() != gradients.dims() {
            return Err(Error::ShapeMismatch(format!(
                "activations {:?} vs gradients {:?}",
                activations.dims(),
                gradients.dims()
            )));
        }
        Ok(Self {
            activations,
            gradients,
            class_id,
        })
    }

    pub fn activations(&self) -> &Tensor {
        &self.activations
    }

    pub fn gradients(&self) -> &Tensor {
        &self.gradients
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    /// `(K, H, W)`
    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.activations.dims();
        (d[0], d[1], d[2])
    }
}
