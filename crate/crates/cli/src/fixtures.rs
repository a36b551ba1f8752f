//! Deterministic fixture generators.
//!
//! The validation cohort reproduces the target confusion matrix and zone
//! counts. The IoU cohort is synthetic: tensors are built so that each case
//! hits a chosen IoU exactly, with group means set to fixed targets.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use dermaudit::labels::{Diagnosis, Nosology, Stage2Class};
use dermaudit::stats::PairedAgreement;
use dermaudit::tensor_io::{
    write_tensor, AnnotationBox, AnnotationSet, CaseManifest, StructureLabel, Tensor,
};

use crate::report::ensure_dir;

/// Validation sessions: id, date, patients.
pub const SESSIONS: [(&str, &str, usize); 4] = [
    ("6", "2025-06-07", 40),
    ("7", "2025-10-17", 43),
    ("8", "2025-12-26", 50),
    ("9", "2026-04-24", 43),
];

fn p(ten_thousandths: u32) -> f64 {
    f64::from(ten_thousandths) / 10_000.0
}

struct Draft {
    session: Option<&'static str>,
    reference: Diagnosis,
    nosology: Nosology,
    probability: f64,
    stage2: Option<Stage2Class>,
}

fn draft(
    reference: Diagnosis,
    nosology: Nosology,
    probability: f64,
    stage2: Option<Stage2Class>,
) -> Draft {
    Draft {
        session: None,
        reference,
        nosology,
        probability,
        stage2,
    }
}

/// The 176-patient validation cohort.
pub fn validation_manifest() -> Vec<CaseManifest> {
    use Diagnosis::{Benign, Malignant};
    let mut fixed = Vec::new();
    // Histologically confirmed malignancies.
    for (s, n, prob, c) in [
        ("7", Nosology::Bcc, 6400, Stage2Class::Bcc),
        ("8", Nosology::Mel, 8600, Stage2Class::Mel),
        ("8", Nosology::Mel, 7800, Stage2Class::Mel),
        ("9", Nosology::Mel, 7100, Stage2Class::Mel),
        ("9", Nosology::Bcc, 5800, Stage2Class::Bcc),
    ] {
        fixed.push(Draft {
            session: Some(s),
            ..draft(Malignant, n, p(prob), Some(c))
        });
    }
    // Dysplastic naevi reported per session.
    for (s, count) in [("6", 4), ("7", 2)] {
        for i in 0..count {
            fixed.push(Draft {
                session: Some(s),
                ..draft(Benign, Nosology::Dn, p(2600 + 700 * i), None)
            });
        }
    }

    let mut pool = Vec::new();
    // Red-zone false positives: keratoses, atypical naevi, crusted haemangiomas.
    let fp_classes = [Stage2Class::Mel; 5]
        .into_iter()
        .chain([Stage2Class::Bcc; 4])
        .map(|c| (Nosology::Other, c))
        .chain([(Nosology::Dn, Stage2Class::Mel); 6])
        .chain(
            [
                Stage2Class::Mel,
                Stage2Class::Mel,
                Stage2Class::Mel,
                Stage2Class::Scc,
                Stage2Class::Scc,
            ]
            .map(|c| (Nosology::Other, c)),
        );
    for (i, (n, c)) in fp_classes.enumerate() {
        pool.push(draft(Benign, n, p(5000 + 150 * i as u32), Some(c)));
    }
    // Remaining yellow zone.
    for i in 0..24u32 {
        let n = if i % 3 == 0 {
            Nosology::Other
        } else {
            Nosology::Nv
        };
        pool.push(draft(
            Benign,
            n,
            p(if i == 0 { 1500 } else { 1500 + 140 * i }),
            None,
        ));
    }
    // Green zone.
    pool.push(draft(Benign, Nosology::Nv, p(1499), None));
    for i in 0..120u32 {
        let n = if i % 5 == 0 {
            Nosology::Other
        } else {
            Nosology::Nv
        };
        pool.push(draft(
            Benign,
            n,
            p(200 + 100 * (i % 13) + 7 * (i / 13)),
            None,
        ));
    }

    let mut remaining: Vec<usize> = SESSIONS
        .iter()
        .map(|&(id, _, total)| total - fixed.iter().filter(|d| d.session == Some(id)).count())
        .collect();
    let mut slot = 0;
    for d in &mut pool {
        while remaining[slot % SESSIONS.len()] == 0 {
            slot += 1;
        }
        let s = slot % SESSIONS.len();
        remaining[s] -= 1;
        d.session = Some(SESSIONS[s].0);
        slot += 1;
    }

    let mut out = Vec::new();
    for &(id, _, _) in &SESSIONS {
        let members = fixed.iter().chain(&pool).filter(|d| d.session == Some(id));
        for (i, d) in members.enumerate() {
            let mut c = CaseManifest::new(format!("S{id}-{:03}", i + 1), d.probability);
            c.reference_label = Some(d.reference);
            c.nosology_reference = Some(d.nosology);
            c.stage2_class = d.stage2;
            c.session = Some(id.to_owned());
            out.push(c);
        }
    }
    out
}

/// Synthetic paired assessments: 20 cases correct only with the system.
pub fn validation_paired() -> PairedAgreement {
    PairedAgreement {
        b: 20,
        c: 0,
        n_concordant: 156,
    }
}

pub fn validation_manifest_json() -> String {
    let mut s = serde_json::to_string_pretty(&validation_manifest()).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn validation_paired_json() -> String {
    let mut s = serde_json::to_string_pretty(&validation_paired()).expect("counts serialize");
    s.push('\n');
    s
}

/// Write the validation manifest and paired counts; returns the manifest path.
pub fn write_validation_fixture(dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let manifest = dir.join("manifest.json");
    fs::write(&manifest, validation_manifest_json())?;
    fs::write(dir.join("paired.json"), validation_paired_json())?;
    Ok(manifest)
}

/// IoU cohort per architecture.
pub const IOU_CLASSES: [(Nosology, usize); 4] = [
    (Nosology::Mel, 18),
    (Nosology::Bcc, 15),
    (Nosology::Dn, 16),
    (Nosology::Nv, 131),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureArch {
    VitB16,
    SwinT,
    ConvNextB,
    EfficientNetV2,
}

impl FixtureArch {
    pub const ALL: [FixtureArch; 4] = [
        FixtureArch::VitB16,
        FixtureArch::SwinT,
        FixtureArch::ConvNextB,
        FixtureArch::EfficientNetV2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureArch::VitB16 => "ViT-B/16",
            FixtureArch::SwinT => "Swin-T",
            FixtureArch::ConvNextB => "ConvNeXt-B",
            FixtureArch::EfficientNetV2 => "EfficientNetV2",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            FixtureArch::VitB16 => "vit",
            FixtureArch::SwinT => "swin",
            FixtureArch::ConvNextB => "convnext",
            FixtureArch::EfficientNetV2 => "effnet",
        }
    }

    /// Target class means and SDs in `IOU_CLASSES` order, then the overall mean.
    pub fn targets(self) -> ([(f64, f64); 4], f64) {
        match self {
            FixtureArch::VitB16 => (
                [(0.74, 0.09), (0.71, 0.11), (0.68, 0.12), (0.61, 0.14)],
                0.69,
            ),
            FixtureArch::SwinT => (
                [(0.69, 0.10), (0.67, 0.13), (0.63, 0.11), (0.58, 0.15)],
                0.64,
            ),
            FixtureArch::ConvNextB => (
                [(0.58, 0.13), (0.56, 0.14), (0.52, 0.13), (0.47, 0.16)],
                0.53,
            ),
            FixtureArch::EfficientNetV2 => (
                [(0.55, 0.12), (0.54, 0.15), (0.50, 0.14), (0.45, 0.17)],
                0.51,
            ),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.slug().eq_ignore_ascii_case(s) || a.name().eq_ignore_ascii_case(s))
    }
}

/// Image side; the expert box always covers half of the image.
pub const IOU_SIDE: usize = 8;
/// Pixels in the expert box, so IoU is `k / BOX_AREA`.
pub const BOX_AREA: usize = IOU_SIDE * IOU_SIDE / 2;
const SWIN_LAYERS: usize = 8;

/// Integer intersections `k` (IoU = k / 32) for one group: an even grid with
/// unit sample SD scaled to `sd`, then nudged so the group sum hits `mean`.
pub fn iou_counts(n: usize, mean: f64, sd: f64) -> Vec<u32> {
    let nf = n as f64;
    let spread = (nf * (nf + 1.0) / 12.0).sqrt();
    let area = BOX_AREA as f64;
    let mut k: Vec<u32> = (0..n)
        .map(|i| {
            let z = if n > 1 {
                (i as f64 - (nf - 1.0) / 2.0) / spread
            } else {
                0.0
            };
            ((mean + sd * z) * area).round().clamp(1.0, area) as u32
        })
        .collect();
    let target = (mean * area * nf).round() as i64;
    let mut sum: i64 = k.iter().map(|&v| i64::from(v)).sum();
    // Walk from the middle outwards so the spread is barely touched.
    let order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by_key(|&i| ((2 * i) as i64 - (n as i64 - 1)).abs());
        idx
    };
    let mut j = 0;
    while sum != target {
        let i = order[j % n];
        if sum < target && k[i] < BOX_AREA as u32 {
            k[i] += 1;
            sum += 1;
        } else if sum > target && k[i] > 1 {
            k[i] -= 1;
            sum -= 1;
        }
        j += 1;
    }
    k
}

/// Per-class target means shifted by a common offset so that the overall
/// (class-macro) mean lands inside its rounding interval while every class
/// mean still rounds to its target value.
pub fn shifted_means(arch: FixtureArch) -> [f64; 4] {
    let (classes, overall) = arch.targets();
    let raw = classes.iter().map(|c| c.0).sum::<f64>() / 4.0;
    let offset = (overall - raw).clamp(-0.003, 0.003);
    classes.map(|(m, _)| m + offset)
}

/// Pixel indices (row-major) of the expert box for image `i`.
fn expert_pixels(i: usize) -> Vec<usize> {
    let half = IOU_SIDE / 2;
    let mut px = Vec::with_capacity(BOX_AREA);
    for y in 0..IOU_SIDE {
        for x in 0..IOU_SIDE {
            let inside = if i.is_multiple_of(2) {
                x < half
            } else {
                y < half
            };
            if inside {
                px.push(y * IOU_SIDE + x);
            }
        }
    }
    px
}

fn annotation(i: usize, class: Nosology) -> AnnotationSet {
    let (w, h) = if i.is_multiple_of(2) {
        (IOU_SIDE / 2, IOU_SIDE)
    } else {
        (IOU_SIDE, IOU_SIDE / 2)
    };
    let label = match class {
        Nosology::Bcc => StructureLabel::Vascular,
        Nosology::Dn => StructureLabel::Globules,
        _ => StructureLabel::ReticularNetwork,
    };
    AnnotationSet {
        width: IOU_SIDE as u32,
        height: IOU_SIDE as u32,
        boxes: vec![AnnotationBox {
            x: 0,
            y: 0,
            w: w as u32,
            h: h as u32,
            label,
        }],
    }
}

fn identity_rows(t: usize) -> Vec<f32> {
    let mut d = vec![0.0; t * t];
    for i in 0..t {
        d[i * t + i] = 1.0;
    }
    d
}

/// Write the tensors for one case and point the manifest entry at them.
fn write_case_inputs(
    dir: &Path,
    stem: &str,
    arch: FixtureArch,
    image: usize,
    k: usize,
    case: &mut CaseManifest,
) -> Result<()> {
    let n_px = IOU_SIDE * IOU_SIDE;
    let expert = expert_pixels(image);
    let model = &expert[..k];
    match arch {
        FixtureArch::VitB16 => {
            // Class token at 0 attends uniformly to the model patches.
            let t = n_px + 1;
            let mut d = identity_rows(t);
            d[0] = 0.0;
            for &px in model {
                d[1 + px] = 1.0 / k as f32;
            }
            write_tensor(
                &Tensor::new(vec![1, t, t], d)?,
                dir.join(format!("{stem}.attn.tnsr")),
            )?;
            case.attention_path = Some(format!("{stem}.attn.tnsr").into());
        }
        FixtureArch::SwinT => {
            // No class token; a patch outside the box attends to the model patches.
            let t = n_px;
            let target = (0..n_px)
                .find(|px| !expert.contains(px))
                .expect("half the image is outside");
            let mut layer = identity_rows(t);
            layer[target * t + target] = 0.0;
            for &px in model {
                layer[target * t + px] = 1.0 / k as f32;
            }
            let d = layer.repeat(SWIN_LAYERS);
            write_tensor(
                &Tensor::new(vec![SWIN_LAYERS, t, t], d)?,
                dir.join(format!("{stem}.attn.tnsr")),
            )?;
            case.attention_path = Some(format!("{stem}.attn.tnsr").into());
            case.target_index = Some(target);
        }
        FixtureArch::ConvNextB | FixtureArch::EfficientNetV2 => {
            let background = if arch == FixtureArch::ConvNextB {
                0.4
            } else {
                0.3
            };
            let mut act = vec![0.0f32; 2 * n_px];
            let mut grad = vec![0.0f32; 2 * n_px];
            for &px in model {
                act[px] = 1.0;
            }
            for px in 0..n_px {
                grad[px] = 1.0;
                grad[n_px + px] = -0.5;
                if !expert.contains(&px) {
                    act[n_px + px] = background;
                }
            }
            let dims = vec![2, IOU_SIDE, IOU_SIDE];
            write_tensor(
                &Tensor::new(dims.clone(), act)?,
                dir.join(format!("{stem}.act.tnsr")),
            )?;
            write_tensor(
                &Tensor::new(dims, grad)?,
                dir.join(format!("{stem}.grad.tnsr")),
            )?;
            case.activations_path = Some(format!("{stem}.act.tnsr").into());
            case.gradients_path = Some(format!("{stem}.grad.tnsr").into());
        }
    }
    Ok(())
}

/// Write the synthetic IoU cohort for `archs` into `dir`; returns the manifest path.
pub fn write_iou_fixture(dir: &Path, archs: &[FixtureArch]) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let mut cases = Vec::new();
    for &arch in archs {
        let means = shifted_means(arch);
        let (targets, _) = arch.targets();
        for (ci, &(class, n)) in IOU_CLASSES.iter().enumerate() {
            let counts = iou_counts(n, means[ci], targets[ci].1);
            for (i, &k) in counts.iter().enumerate() {
                let stem = format!("{}-{}-{:03}", arch.slug(), class.as_str(), i + 1);
                let probability = match class {
                    Nosology::Mel | Nosology::Bcc => 0.8,
                    Nosology::Dn => 0.3,
                    _ => 0.05,
                };
                let mut case = CaseManifest::new(stem.clone(), probability);
                case.architecture = Some(arch.name().to_owned());
                case.nosology_reference = Some(class);
                case.reference_label = Some(match class {
                    Nosology::Mel | Nosology::Bcc => Diagnosis::Malignant,
                    _ => Diagnosis::Benign,
                });
                case.stage2_class = match class {
                    Nosology::Mel => Some(Stage2Class::Mel),
                    Nosology::Bcc => Some(Stage2Class::Bcc),
                    _ => None,
                };
                write_case_inputs(dir, &stem, arch, i, k as usize, &mut case)?;
                let ann = format!("{stem}.ann.json");
                fs::write(
                    dir.join(&ann),
                    serde_json::to_string(&annotation(i, class))?,
                )?;
                case.annotation_path = Some(ann.into());
                cases.push(case);
            }
        }
    }
    let manifest = dir.join("manifest.json");
    fs::write(&manifest, serde_json::to_string_pretty(&cases)? + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_cohort_shape() {
        let cases = validation_manifest();
        assert_eq!(cases.len(), 176);
        for &(id, _, total) in &SESSIONS {
            assert_eq!(
                cases
                    .iter()
                    .filter(|c| c.session.as_deref() == Some(id))
                    .count(),
                total
            );
        }
        for c in &cases {
            c.validate().unwrap();
        }
    }

    #[test]
    fn iou_counts_hit_target_sum() {
        for arch in FixtureArch::ALL {
            let means = shifted_means(arch);
            let (targets, _) = arch.targets();
            for (ci, &(_, n)) in IOU_CLASSES.iter().enumerate() {
                let k = iou_counts(n, means[ci], targets[ci].1);
                assert_eq!(k.len(), n);
                assert!(k.iter().all(|&v| (1..=BOX_AREA as u32).contains(&v)));
                let sum: u32 = k.iter().sum();
                assert_eq!(
                    i64::from(sum),
                    (means[ci] * BOX_AREA as f64 * n as f64).round() as i64
                );
            }
        }
    }
}
