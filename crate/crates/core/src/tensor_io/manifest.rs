use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, InvariantViolation, Result};
use crate::labels::{Diagnosis, Nosology, Stage2Class};

/// The second cascade stage only runs at or above this probability.
pub const STAGE2_MIN_PROBABILITY: f64 = 0.50;

/// One patient/lesion row of a case manifest.
///
/// Tensor and annotation paths are resolved relative to the manifest file.
/// `target_index`, `grid_h`, `grid_w` and `class_id` are optional hints for
/// the saliency stage; see [`crate::saliency::saliency_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseManifest {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_label: Option<Diagnosis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nosology_reference: Option<Nosology>,
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_class: Option<Stage2Class>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradients_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
}

impl CaseManifest {
    pub fn new(case_id: impl Into<String>, probability: f64) -> Self {
        Self {
            case_id: case_id.into(),
            reference_label: None,
            nosology_reference: None,
            probability,
            stage2_class: None,
            attention_path: None,
            activations_path: None,
            gradients_path: None,
            annotation_path: None,
            architecture: None,
            session: None,
            target_index: None,
            grid_h: None,
            grid_w: None,
            class_id: None,
        }
    }

    pub fn validate(&self) -> Result<(), InvariantViolation> {
        let violation = |field, reason: String| InvariantViolation {
            case_id: self.case_id.clone(),
            field,
            reason,
        };
        if self.case_id.is_empty() {
            return Err(violation("case_id", "empty case id".into()));
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(violation(
                "probability",
                format!("{} outside [0, 1]", self.probability),
            ));
        }
        if let Some(class) = self.stage2_class {
            if self.probability < STAGE2_MIN_PROBABILITY {
                return Err(violation(
                    "stage2_class",
                    format!(
                        "{class} present but probability {} < {STAGE2_MIN_PROBABILITY}",
                        self.probability
                    ),
                ));
            }
        }
        if self.grid_h.is_some() != self.grid_w.is_some() {
            return Err(violation(
                "grid_h",
                "grid_h and grid_w must be given together".into(),
            ));
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.attention_path,
            &mut self.activations_path,
            &mut self.gradients_path,
            &mut self.annotation_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Parse every row independently, keeping valid rows and per-case violations.
///
/// The outer document must still be a JSON array; otherwise the whole load fails.
pub fn load_manifest_lenient(
    path: impl AsRef<Path>,
) -> Result<Vec<Result<CaseManifest, InvariantViolation>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let id_hint = row
                .get("case_id")
                .and_then(|v| v.as_str())
                .map_or_else(|| format!("#{i}"), str::to_owned);
            let mut case: CaseManifest =
                serde_json::from_value(row).map_err(|e| InvariantViolation {
                    case_id: id_hint,
                    field: "record",
                    reason: e.to_string(),
                })?;
            case.validate()?;
            if !seen.insert(case.case_id.clone()) {
                return Err(InvariantViolation {
                    case_id: case.case_id,
                    field: "case_id",
                    reason: "duplicate case id".into(),
                });
            }
            case.resolve_paths(base);
            Ok(case)
        })
        .collect())
}

/// Strict load: any invalid row rejects the manifest, listing every violation.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CaseManifest>> {
    let rows = load_manifest_lenient(path)?;
    let (ok, bad): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.is_ok());
    if !bad.is_empty() {
        return Err(Error::Manifest(
            bad.into_iter().filter_map(|r| r.err()).collect(),
        ));
    }
    Ok(ok.into_iter().filter_map(|r| r.ok()).collect())
}
