//! Attention rollout and Grad-CAM relevance maps.
//!
//! Both methods end the same way: the raw map is resampled to the image size
//! with corner-aligned bilinear interpolation and min-max normalized to [0, 1].

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{
    load_annotations, read_tensor, AttentionStack, CaseManifest, GradCamInput, RowSumWarning,
    Tensor,
};

/// Weight of the identity term in each rollout factor.
pub const DEFAULT_RESIDUAL_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SaliencyMethod {
    Rollout,
    GradCam,
}

impl SaliencyMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SaliencyMethod::Rollout => "rollout",
            SaliencyMethod::GradCam => "gradcam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rollout" => Some(SaliencyMethod::Rollout),
            "gradcam" => Some(SaliencyMethod::GradCam),
            _ => None,
        }
    }
}

impl fmt::Display for SaliencyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unnormalized row-major 2-D field.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl RawMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} map",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    fn from_array(a: Array2<f64>) -> Self {
        let (height, width) = a.dim();
        Self {
            height,
            width,
            values: a.into_iter().collect(),
        }
    }
}

/// Normalized relevance field at image resolution.
///
/// Values are stored as `f32` so that a map written to disk and read back
/// binarizes identically to the in-memory map.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub method: SaliencyMethod,
    pub architecture: String,
}

impl SaliencyMap {
    pub fn from_normalized(
        map: &RawMap,
        method: SaliencyMethod,
        architecture: impl Into<String>,
    ) -> Self {
        Self {
            width: map.width,
            height: map.height,
            values: map.values.iter().map(|&v| v as f32).collect(),
            method,
            architecture: architecture.into(),
        }
    }

    /// `(height, width)` tensor of the map values.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width], self.values.clone()).expect("valid map")
    }

    pub fn from_tensor(
        t: &Tensor,
        method: SaliencyMethod,
        architecture: impl Into<String>,
    ) -> Result<Self> {
        let [height, width] = t.dims() else {
            return Err(Error::ShapeMismatch(format!(
                "saliency map tensor must be (height, width), got {:?}",
                t.dims()
            )));
        };
        if let Some(i) = t.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ShapeMismatch(format!(
                "saliency value {} at index {i} outside [0, 1]",
                t.data()[i]
            )));
        }
        Ok(Self {
            width: *width,
            height: *height,
            values: t.data().to_vec(),
            method,
            architecture: architecture.into(),
        })
    }

    /// Binary portable graymap (P5), values quantized as `round(v * 255)`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.values
                .iter()
                .map(|&v| (f64::from(v) * 255.0).round().clamp(0.0, 255.0) as u8),
        );
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_pgm())?;
        Ok(())
    }
}

fn square_view(t: &Tensor) -> Result<ArrayView2<'_, f32>> {
    match t.dims() {
        [a, b] if a == b => Ok(ArrayView2::from_shape((*a, *b), t.data()).expect("dims checked")),
        dims => Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {dims:?}"
        ))),
    }
}

/// Mean over the head axis of a raw `(heads, T, T)` attention layer.
pub fn head_average(raw_layer: &Tensor) -> Result<Tensor> {
    let [heads, t, t2] = raw_layer.dims() else {
        return Err(Error::ShapeMismatch(format!(
            "raw attention layer must be (heads, T, T), got {:?}",
            raw_layer.dims()
        )));
    };
    if t != t2 {
        return Err(Error::ShapeMismatch(format!(
            "non-square attention {t}x{t2}"
        )));
    }
    let mean = head_mean(raw_layer.data(), *heads, *t);
    Tensor::new(vec![*t, *t], mean.into_iter().map(|v| v as f32).collect())
}

fn head_mean(data: &[f32], heads: usize, t: usize) -> Array2<f64> {
    let raw = Array3::from_shape_vec((heads, t, t), data.iter().map(|&v| f64::from(v)).collect())
        .expect("dims checked");
    raw.mean_axis(Axis(0)).expect("at least one head")
}

/// Head-averaged `(T, T)` matrix of every layer, in f64.
pub fn averaged_layers(stack: &AttentionStack) -> Vec<Array2<f64>> {
    let t = stack.token_count();
    stack
        .layers()
        .iter()
        .map(|layer| match layer.dims() {
            [heads, _, _] => head_mean(layer.data(), *heads, t),
            _ => square_view(layer).expect("validated").mapv(f64::from),
        })
        .collect()
}

/// `residual_weight * I + (1 - residual_weight) * averaged`
pub fn rollout_factor(averaged: &Array2<f64>, residual_weight: f64) -> Array2<f64> {
    let mut m = averaged * (1.0 - residual_weight);
    m.diag_mut().mapv_inplace(|v| v + residual_weight);
    m
}

/// Compose the per-layer factors as `M_L * ... * M_2 * M_1`: the deeper layer
/// is always the left operand.
pub fn attention_rollout(stack: &AttentionStack, residual_weight: f64) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&residual_weight) {
        return Err(Error::ResidualWeightOutOfRange(residual_weight));
    }
    let mut factors = averaged_layers(stack)
        .into_iter()
        .map(|a| rollout_factor(&a, residual_weight));
    let first = factors.next().ok_or(Error::EmptyStack)?;
    Ok(factors.fold(first, |acc, m| m.dot(&acc)))
}

/// Resolve the patch grid for `tokens` tokens.
///
/// With an explicit `hint` the grid must hold either all tokens or all but one
/// (the class token). Without a hint, `T - 1` square means a class token plus a
/// square grid, and `T` square means a square grid with no class token.
pub fn infer_grid(tokens: usize, hint: Option<(usize, usize)>) -> Result<(usize, usize)> {
    if let Some((h, w)) = hint {
        let cells = h * w;
        return if h > 0 && w > 0 && (cells == tokens || cells + 1 == tokens) {
            Ok((h, w))
        } else {
            Err(Error::GridMismatch {
                tokens,
                grid_h: h,
                grid_w: w,
            })
        };
    }
    let isqrt = |n: usize| {
        let r = (n as f64).sqrt().round() as usize;
        (r > 0 && r * r == n).then_some(r)
    };
    tokens
        .checked_sub(1)
        .and_then(isqrt)
        .or_else(|| isqrt(tokens))
        .map(|s| (s, s))
        .ok_or(Error::GridMismatch {
            tokens,
            grid_h: 0,
            grid_w: 0,
        })
}

/// Take row `target_index` of the rollout matrix as a `(grid_h, grid_w)` map.
///
/// When `T = grid_h * grid_w + 1` the target is a class token and its own
/// column is dropped; when `T = grid_h * grid_w` the full row is kept.
pub fn rollout_to_map(
    roll: &Array2<f64>,
    target_index: usize,
    grid_h: usize,
    grid_w: usize,
) -> Result<RawMap> {
    let (t, t2) = roll.dim();
    if t != t2 {
        return Err(Error::ShapeMismatch(format!("rollout matrix is {t}x{t2}")));
    }
    let cells = grid_h * grid_w;
    let class_token = match t.checked_sub(cells) {
        Some(0) => false,
        Some(1) => true,
        _ => {
            return Err(Error::GridMismatch {
                tokens: t,
                grid_h,
                grid_w,
            })
        }
    };
    if target_index >= t {
        return Err(Error::TargetOutOfRange {
            index: target_index,
            tokens: t,
        });
    }
    let row = roll.row(target_index);
    let values = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| !(class_token && j == target_index))
        .map(|(_, &v)| v)
        .collect();
    RawMap::new(grid_h, grid_w, values)
}

/// `ReLU(sum_k alpha_k * A^k)` with `alpha_k` the spatial mean of channel k's gradients.
pub fn gradcam(input: &GradCamInput) -> RawMap {
    let (k, h, w) = input.shape();
    let to_array = |t: &Tensor| {
        Array3::from_shape_vec((k, h, w), t.data().iter().map(|&v| f64::from(v)).collect())
            .expect("shape validated")
    };
    let activations = to_array(input.activations());
    let gradients = to_array(input.gradients());
    let z = (h * w) as f64;
    let alpha = gradients.sum_axis(Axis(2)).sum_axis(Axis(1)) / z;
    let mut cam = Array2::<f64>::zeros((h, w));
    for (a_k, &alpha_k) in activations.outer_iter().zip(alpha.iter()) {
        cam.scaled_add(alpha_k, &a_k);
    }
    cam.mapv_inplace(|v| v.max(0.0));
    RawMap::from_array(cam)
}

fn source_coord(out_coord: usize, in_len: usize, out_len: usize) -> f64 {
    if in_len == 1 {
        0.0
    } else if out_len == 1 {
        (in_len - 1) as f64 / 2.0
    } else {
        out_coord as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
    }
}

/// Corner-aligned bilinear resampling: output corners land exactly on input corners.
pub fn upsample_bilinear(map: &RawMap, out_h: usize, out_w: usize) -> Result<RawMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::ShapeMismatch(format!(
            "output size {out_h}x{out_w} must be positive"
        )));
    }
    if (out_h, out_w) == (map.height, map.width) {
        return Ok(map.clone());
    }
    let axis = |len_in: usize, len_out: usize| -> Vec<(usize, usize, f64)> {
        (0..len_out)
            .map(|o| {
                let s = source_coord(o, len_in, len_out);
                let i0 = (s.floor() as usize).min(len_in - 1);
                let i1 = (i0 + 1).min(len_in - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let rows = axis(map.height, out_h);
    let cols = axis(map.width, out_w);
    let mut values = Vec::with_capacity(out_h * out_w);
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            let top = map.get(r0, c0) * (1.0 - fx) + map.get(r0, c1) * fx;
            let bottom = map.get(r1, c0) * (1.0 - fx) + map.get(r1, c1) * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    RawMap::new(out_h, out_w, values)
}

/// `(v - min) / (max - min)`; a constant map becomes all zeros.
pub fn normalize_minmax(map: &RawMap) -> Result<RawMap> {
    if let Some(i) = map.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(i));
    }
    let (min, max) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max - min;
    let values = if range > 0.0 {
        map.values
            .iter()
            .map(|&v| ((v - min) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; map.values.len()]
    };
    RawMap::new(map.height, map.width, values)
}

/// A normalized map plus any non-fatal input diagnostics.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub map: SaliencyMap,
    pub warnings: Vec<RowSumWarning>,
}

/// Run the method matching the case's inputs.
///
/// An attention stack selects rollout; otherwise activations plus gradients
/// select Grad-CAM. The map is resampled to the annotation image size when an
/// annotation file is given, else left at its native grid.
pub fn saliency_pipeline(case: &CaseManifest) -> Result<PipelineOutput> {
    let architecture = case.architecture.clone().unwrap_or_default();
    let (raw, method, warnings) = if let Some(path) = &case.attention_path {
        let stack =
            AttentionStack::from_tensor(read_tensor(path)?, case.target_index.unwrap_or(0))?;
        let warnings = stack.row_sum_warnings();
        let roll = attention_rollout(&stack, DEFAULT_RESIDUAL_WEIGHT)?;
        let hint = case.grid_h.zip(case.grid_w);
        let (gh, gw) = infer_grid(stack.token_count(), hint)?;
        (
            rollout_to_map(&roll, stack.target_index(), gh, gw)?,
            SaliencyMethod::Rollout,
            warnings,
        )
    } else if let (Some(a), Some(g)) = (&case.activations_path, &case.gradients_path) {
        let input =
            GradCamInput::new(read_tensor(a)?, read_tensor(g)?, case.class_id.unwrap_or(0))?;
        (gradcam(&input), SaliencyMethod::GradCam, Vec::new())
    } else {
        return Err(Error::MissingInput(case.case_id.clone()));
    };
    let (out_h, out_w) = match &case.annotation_path {
        Some(p) => {
            let ann = load_annotations(p)?;
            (ann.height as usize, ann.width as usize)
        }
        None => (raw.height, raw.width),
    };
    let resized = upsample_bilinear(&raw, out_h, out_w)?;
    let normalized = normalize_minmax(&resized)?;
    Ok(PipelineOutput {
        map: SaliencyMap::from_normalized(&normalized, method, architecture),
        warnings,
    })
}
