//! Shared batch plumbing: per-case error collection, ordered parallel
//! evaluation and byte-stable CSV/markdown output.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dermaudit::tensor_io::{load_manifest_lenient, CaseManifest};
use rayon::prelude::*;
use serde::Serialize;

pub const ERRORS_FILE: &str = "errors.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseError {
    pub case_id: String,
    pub stage: String,
    pub message: String,
}

impl CaseError {
    pub fn new(case_id: impl Into<String>, stage: &str, message: impl ToString) -> Self {
        Self {
            case_id: case_id.into(),
            stage: stage.to_owned(),
            message: message.to_string(),
        }
    }
}

/// Summary of one command run. The process exits non-zero iff `errors` is non-empty.
#[derive(Debug, Clone, Default)]
pub struct CommandReport {
    pub processed: usize,
    pub errors: Vec<CaseError>,
}

impl CommandReport {
    pub fn success(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Valid manifest rows plus one error per rejected row, in manifest order.
pub fn load_cases(manifest: &Path) -> Result<(Vec<CaseManifest>, Vec<CaseError>)> {
    let rows = load_manifest_lenient(manifest)
        .with_context(|| format!("loading manifest {}", manifest.display()))?;
    let mut cases = Vec::new();
    let mut errors = Vec::new();
    for row in rows {
        match row {
            Ok(case) => cases.push(case),
            Err(v) => errors.push(CaseError::new(v.case_id.clone(), "manifest", &v)),
        }
    }
    Ok((cases, errors))
}

/// Map `f` over `items` on `jobs` threads, keeping input order.
pub fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// File-system safe stem for a case id.
pub fn file_stem(case_id: &str) -> String {
    case_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Write a CSV with a header row and LF line endings.
pub fn write_csv<S: AsRef<str>>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<S>>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_errors(out: &Path, errors: &[CaseError]) -> Result<()> {
    write_csv(
        &out.join(ERRORS_FILE),
        &["case_id", "stage", "message"],
        errors
            .iter()
            .map(|e| vec![e.case_id.clone(), e.stage.clone(), e.message.clone()]),
    )
}

/// Pipe-table markdown.
pub fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    s.push_str(&format!("| {} |\n", header.join(" | ")));
    s.push_str(&format!(
        "|{}\n",
        header.iter().map(|_| "---|").collect::<String>()
    ));
    for row in rows {
        s.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    s
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
