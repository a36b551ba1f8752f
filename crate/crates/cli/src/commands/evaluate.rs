use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use dermaudit::labels::Nosology;
use dermaudit::relevance::{
    aggregate_iou, binarize, iou, rasterize_annotations, ClassKey, IoURecord, IoUSummary,
    RelevanceResult,
};
use dermaudit::render::fixed;
use dermaudit::saliency::{saliency_pipeline, SaliencyMap, SaliencyMethod};
use dermaudit::tensor_io::{load_annotations, read_tensor, CaseManifest};

use super::saliency::map_path;
use crate::config::RunConfig;
use crate::report::{
    ensure_dir, load_cases, markdown_table, par_map, write_csv, write_errors, CaseError,
    CommandReport,
};

pub const RELEVANCE_FILE: &str = "relevance.csv";
pub const SUMMARY_FILE: &str = "iou_summary.csv";
pub const TABLE_FILE: &str = "iou_table.md";

/// Class label for cases without a nosology reference.
pub const UNSPECIFIED_CLASS: &str = "unspecified";

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Output directory of an earlier `saliency` run. Without it maps are
    /// recomputed from the tensors.
    pub maps: Option<PathBuf>,
}

struct Scored {
    architecture: String,
    class: String,
    method: SaliencyMethod,
    result: RelevanceResult,
}

fn method_for(case: &CaseManifest) -> SaliencyMethod {
    if case.attention_path.is_some() {
        SaliencyMethod::Rollout
    } else {
        SaliencyMethod::GradCam
    }
}

fn load_map(case: &CaseManifest, maps: Option<&Path>) -> Result<SaliencyMap, String> {
    match maps {
        Some(dir) => {
            let t = read_tensor(map_path(dir, &case.case_id)).map_err(|e| e.to_string())?;
            SaliencyMap::from_tensor(
                &t,
                method_for(case),
                case.architecture.clone().unwrap_or_default(),
            )
            .map_err(|e| e.to_string())
        }
        None => saliency_pipeline(case)
            .map(|o| o.map)
            .map_err(|e| e.to_string()),
    }
}

fn score(
    case: &CaseManifest,
    maps: Option<&Path>,
    tau: f64,
) -> Result<Scored, (&'static str, String)> {
    let ann_path = case
        .annotation_path
        .as_ref()
        .ok_or(("annotation", "no annotation_path".to_owned()))?;
    let ann = load_annotations(ann_path).map_err(|e| ("annotation", e.to_string()))?;
    let map = load_map(case, maps).map_err(|e| ("saliency", e))?;
    let model = binarize(&map, tau).map_err(|e| ("relevance", e.to_string()))?;
    let expert = rasterize_annotations(&ann);
    let result = iou(&model, &expert).map_err(|e| ("relevance", e.to_string()))?;
    Ok(Scored {
        architecture: map.architecture,
        class: case
            .nosology_reference
            .map_or(UNSPECIFIED_CLASS.to_owned(), |n| n.as_str().to_owned()),
        method: map.method,
        result,
    })
}

fn opt_fixed(x: Option<f64>) -> String {
    x.map(|v| fixed(v, 2)).unwrap_or_default()
}

fn heading(class: &str) -> String {
    Nosology::parse(class).map_or_else(|| class.to_owned(), |n| n.heading().to_owned())
}

fn class_rank(class: &str) -> usize {
    Nosology::parse(class)
        .and_then(|n| Nosology::ALL.iter().position(|&m| m == n))
        .unwrap_or(Nosology::ALL.len())
}

fn cell(s: &IoUSummary) -> String {
    match s.sd {
        Some(sd) => format!("{} ± {}", fixed(s.mean, 2), fixed(sd, 2)),
        None => fixed(s.mean, 2),
    }
}

/// Architectures as rows in first-seen order, classes as columns in
/// nosology order, then the overall mean.
fn iou_table(summaries: &[IoUSummary], arch_order: &[(String, SaliencyMethod)]) -> String {
    let mut classes: Vec<&str> = summaries
        .iter()
        .filter_map(|s| match &s.class {
            ClassKey::Class(c) => Some(c.as_str()),
            ClassKey::Overall => None,
        })
        .collect();
    classes.sort_by(|a, b| class_rank(a).cmp(&class_rank(b)).then(a.cmp(b)));
    classes.dedup();

    let mut header = vec!["Architecture".to_owned()];
    header.extend(classes.iter().map(|c| heading(c)));
    header.push(ClassKey::Overall.to_string());

    let mut by_key: BTreeMap<(&str, &ClassKey), &IoUSummary> = BTreeMap::new();
    for s in summaries {
        by_key.insert((&s.architecture, &s.class), s);
    }
    let rows: Vec<Vec<String>> = arch_order
        .iter()
        .map(|(arch, method)| {
            let label = match method {
                SaliencyMethod::Rollout => "rollout",
                SaliencyMethod::GradCam => "Grad-CAM",
            };
            let mut row = vec![if arch.is_empty() {
                label.to_owned()
            } else {
                format!("{arch} ({label})")
            }];
            for c in &classes {
                let key = ClassKey::Class((*c).to_owned());
                row.push(
                    by_key
                        .get(&(arch.as_str(), &key))
                        .map_or_else(String::new, |s| cell(s)),
                );
            }
            row.push(
                by_key
                    .get(&(arch.as_str(), &ClassKey::Overall))
                    .map_or_else(String::new, |s| cell(s)),
            );
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    markdown_table(&header, &rows)
}

/// Score every case against its expert annotation and summarize by
/// architecture and class.
pub fn cmd_evaluate(config: &RunConfig, options: &EvaluateOptions) -> Result<CommandReport> {
    config.validate()?;
    ensure_dir(&config.out)?;
    let (cases, mut errors) = load_cases(&config.manifest)?;
    let maps = options.maps.as_deref();
    let results = par_map(config.jobs, &cases, |case| score(case, maps, config.tau))?;

    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut arch_order: Vec<(String, SaliencyMethod)> = Vec::new();
    for (case, scored) in cases.iter().zip(results) {
        match scored {
            Ok(s) => {
                let r = &s.result;
                rows.push(vec![
                    case.case_id.clone(),
                    s.architecture.clone(),
                    s.class.clone(),
                    opt_fixed(r.iou),
                    r.band.to_string(),
                    r.model_area.to_string(),
                    r.expert_area.to_string(),
                    r.intersection_area.to_string(),
                    r.needs_manual_review().to_string(),
                ]);
                if !arch_order.iter().any(|(a, _)| a == &s.architecture) {
                    arch_order.push((s.architecture.clone(), s.method));
                }
                if let Some(v) = r.iou {
                    records.push(IoURecord {
                        architecture: s.architecture,
                        class: s.class,
                        iou: v,
                    });
                }
            }
            Err((stage, message)) => {
                errors.push(CaseError::new(case.case_id.clone(), stage, message))
            }
        }
    }

    let summaries = aggregate_iou(&records);
    write_csv(
        &config.out.join(RELEVANCE_FILE),
        &[
            "case_id",
            "architecture",
            "class",
            "iou",
            "band",
            "model_area",
            "expert_area",
            "intersection_area",
            "manual_review",
        ],
        rows,
    )?;
    write_csv(
        &config.out.join(SUMMARY_FILE),
        &["architecture", "class", "n", "mean", "sd", "pooled_mean"],
        summaries.iter().map(|s| {
            vec![
                s.architecture.clone(),
                s.class.to_string(),
                s.n.to_string(),
                fixed(s.mean, 2),
                opt_fixed(s.sd),
                opt_fixed(s.pooled_mean),
            ]
        }),
    )?;
    std::fs::write(
        config.out.join(TABLE_FILE),
        iou_table(&summaries, &arch_order),
    )?;
    write_errors(&config.out, &errors)?;
    Ok(CommandReport {
        processed: cases.len(),
        errors,
    })
}
