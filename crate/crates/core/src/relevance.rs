//! Agreement between thresholded saliency and expert annotation boxes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;
use crate::tensor_io::AnnotationSet;

pub const DEFAULT_TAU: f64 = 0.5;
/// IoU strictly above this is `Focused`.
pub const FOCUSED_ABOVE: f64 = 0.5;
/// IoU at or above this (and not focused) is `Partial`.
pub const PARTIAL_FROM: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.bits[y * self.width + x] = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelevanceBand {
    Focused,
    Partial,
    Irrelevant,
    /// Both masks empty: the map carries no localization signal.
    Undefined,
}

impl RelevanceBand {
    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceBand::Focused => "focused",
            RelevanceBand::Partial => "partial",
            RelevanceBand::Irrelevant => "irrelevant",
            RelevanceBand::Undefined => "undefined",
        }
    }

    /// Partial maps go to visual review; irrelevant and undefined ones raise the manual-review flag.
    pub fn needs_manual_review(self) -> bool {
        matches!(self, RelevanceBand::Irrelevant | RelevanceBand::Undefined)
    }
}

impl fmt::Display for RelevanceBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelevanceResult {
    /// `None` when the union is empty.
    pub iou: Option<f64>,
    pub band: RelevanceBand,
    pub model_area: u64,
    pub expert_area: u64,
    pub intersection_area: u64,
}

impl RelevanceResult {
    pub fn union_area(&self) -> u64 {
        self.model_area + self.expert_area - self.intersection_area
    }

    pub fn needs_manual_review(&self) -> bool {
        self.band.needs_manual_review()
    }
}

/// Pixel set iff its value strictly exceeds `tau`.
pub fn binarize(map: &SaliencyMap, tau: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::TauOutOfRange(tau));
    }
    Ok(BinaryMask {
        width: map.width,
        height: map.height,
        bits: map.values.iter().map(|&v| f64::from(v) > tau).collect(),
    })
}

/// Union of all annotation boxes, half-open.
pub fn rasterize_annotations(ann: &AnnotationSet) -> BinaryMask {
    let mut mask = BinaryMask::empty(ann.width as usize, ann.height as usize);
    for b in &ann.boxes {
        for y in b.y..b.y + b.h {
            let row = y as usize * mask.width;
            mask.bits[row + b.x as usize..row + (b.x + b.w) as usize].fill(true);
        }
    }
    mask
}

/// Intersection-over-union of two equally sized masks.
pub fn iou(model: &BinaryMask, expert: &BinaryMask) -> Result<RelevanceResult> {
    if (model.width, model.height) != (expert.width, expert.height) {
        return Err(Error::DimensionMismatch(
            model.width,
            model.height,
            expert.width,
            expert.height,
        ));
    }
    let (mut model_area, mut expert_area, mut intersection_area) = (0u64, 0u64, 0u64);
    for (&a, &b) in model.bits.iter().zip(&expert.bits) {
        model_area += u64::from(a);
        expert_area += u64::from(b);
        intersection_area += u64::from(a && b);
    }
    let union = model_area + expert_area - intersection_area;
    let iou = (union > 0).then(|| intersection_area as f64 / union as f64);
    Ok(RelevanceResult {
        iou,
        band: iou.map_or(RelevanceBand::Undefined, relevance_band),
        model_area,
        expert_area,
        intersection_area,
    })
}

pub fn relevance_band(iou_value: f64) -> RelevanceBand {
    if iou_value > FOCUSED_ABOVE {
        RelevanceBand::Focused
    } else if iou_value >= PARTIAL_FROM {
        RelevanceBand::Partial
    } else {
        RelevanceBand::Irrelevant
    }
}

/// Grouping key for IoU aggregation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassKey {
    Class(String),
    /// Per-architecture summary over all classes.
    Overall,
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassKey::Class(c) => f.write_str(c),
            ClassKey::Overall => f.write_str("Mean"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoUSummary {
    pub architecture: String,
    pub class: ClassKey,
    pub n: usize,
    /// For class rows, the arithmetic mean of the group. For the overall row,
    /// the unweighted mean of the architecture's class means.
    pub mean: f64,
    /// Sample standard deviation (n - 1); absent for n = 1. The overall row
    /// uses every result of the architecture.
    pub sd: Option<f64>,
    /// Mean over every result of the architecture (overall row only).
    pub pooled_mean: Option<f64>,
}

/// One scored case for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct IoURecord {
    pub architecture: String,
    pub class: String,
    pub iou: f64,
}

fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    (mean, sd)
}

/// Mean and sample SD per `(architecture, class)`, followed by each
/// architecture's overall row. Keys are in lexicographic order.
pub fn aggregate_iou(results: &[IoURecord]) -> Vec<IoUSummary> {
    let mut groups: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in results {
        groups
            .entry(&r.architecture)
            .or_default()
            .entry(&r.class)
            .or_default()
            .push(r.iou);
    }
    let mut out = Vec::new();
    for (arch, classes) in groups {
        let mut all = Vec::new();
        let mut class_means = Vec::new();
        for (class, values) in classes {
            let (mean, sd) = mean_sd(&values);
            class_means.push(mean);
            all.extend_from_slice(&values);
            out.push(IoUSummary {
                architecture: arch.to_owned(),
                class: ClassKey::Class(class.to_owned()),
                n: values.len(),
                mean,
                sd,
                pooled_mean: None,
            });
        }
        let (pooled, sd) = mean_sd(&all);
        out.push(IoUSummary {
            architecture: arch.to_owned(),
            class: ClassKey::Overall,
            n: all.len(),
            mean: class_means.iter().sum::<f64>() / class_means.len() as f64,
            sd,
            pooled_mean: Some(pooled),
        });
    }
    out
}
