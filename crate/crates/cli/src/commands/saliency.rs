use std::path::{Path, PathBuf};

use anyhow::Result;
use dermaudit::saliency::{saliency_pipeline, PipelineOutput};
use dermaudit::tensor_io::write_tensor;

use crate::config::RunConfig;
use crate::report::{
    ensure_dir, file_stem, load_cases, par_map, write_csv, write_errors, CaseError, CommandReport,
};

pub const INDEX_FILE: &str = "saliency_index.csv";
pub const WARNINGS_FILE: &str = "saliency_warnings.csv";
pub const MAPS_DIR: &str = "maps";

/// Where `cmd_saliency` stores the map tensor of a case under `out`.
pub fn map_path(out: &Path, case_id: &str) -> PathBuf {
    out.join(MAPS_DIR)
        .join(format!("{}.tnsr", file_stem(case_id)))
}

#[derive(Debug, Clone, Default)]
pub struct SaliencyOptions {
    /// Only these case ids; empty means all.
    pub cases: Vec<String>,
    /// Also write a P5 graymap next to each map tensor.
    pub pgm: bool,
}

/// Compute one normalized map per case and index them.
pub fn cmd_saliency(config: &RunConfig, options: &SaliencyOptions) -> Result<CommandReport> {
    config.validate()?;
    ensure_dir(&config.out.join(MAPS_DIR))?;
    let (mut cases, mut errors) = load_cases(&config.manifest)?;
    if !options.cases.is_empty() {
        for wanted in &options.cases {
            if !cases.iter().any(|c| &c.case_id == wanted) {
                errors.push(CaseError::new(
                    wanted.clone(),
                    "filter",
                    "case not in manifest",
                ));
            }
        }
        cases.retain(|c| options.cases.contains(&c.case_id));
    }

    let out = &config.out;
    let results = par_map(
        config.jobs,
        &cases,
        |case| -> Result<PipelineOutput, String> {
            let output = saliency_pipeline(case).map_err(|e| e.to_string())?;
            let path = map_path(out, &case.case_id);
            write_tensor(&output.map.to_tensor(), &path).map_err(|e| e.to_string())?;
            if options.pgm {
                output
                    .map
                    .write_pgm(path.with_extension("pgm"))
                    .map_err(|e| e.to_string())?;
            }
            Ok(output)
        },
    )?;

    let mut index = Vec::new();
    let mut warnings = Vec::new();
    for (case, result) in cases.iter().zip(results) {
        match result {
            Ok(output) => {
                let rel = Path::new(MAPS_DIR).join(format!("{}.tnsr", file_stem(&case.case_id)));
                index.push(vec![
                    case.case_id.clone(),
                    output.map.architecture.clone(),
                    output.map.method.to_string(),
                    output.map.width.to_string(),
                    output.map.height.to_string(),
                    rel.to_string_lossy().into_owned(),
                    output.warnings.len().to_string(),
                ]);
                for w in &output.warnings {
                    warnings.push(vec![
                        case.case_id.clone(),
                        w.layer.to_string(),
                        w.head.map(|h| h.to_string()).unwrap_or_default(),
                        w.row.to_string(),
                        format!("{:.6}", w.sum),
                    ]);
                }
            }
            Err(message) => errors.push(CaseError::new(case.case_id.clone(), "saliency", message)),
        }
    }

    write_csv(
        &out.join(INDEX_FILE),
        &[
            "case_id",
            "architecture",
            "method",
            "width",
            "height",
            "map_file",
            "row_sum_warnings",
        ],
        index,
    )?;
    write_csv(
        &out.join(WARNINGS_FILE),
        &["case_id", "layer", "head", "row", "sum"],
        warnings,
    )?;
    write_errors(out, &errors)?;
    Ok(CommandReport {
        processed: cases.len(),
        errors,
    })
}
