use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dermaudit::labels::{Diagnosis, Nosology};
use dermaudit::render::{percent, Ratio};
use dermaudit::stats::{
    clopper_pearson, confusion, mcnemar_chi_square, mcnemar_exact, metrics, ppv_at_prevalence,
    ConfusionMatrix, PairedAgreement,
};
use dermaudit::tensor_io::CaseManifest;
use serde::Deserialize;

use crate::config::RunConfig;
use crate::report::{
    ensure_dir, load_cases, markdown_table, write_csv, write_errors, CaseError, CommandReport,
};

pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CONFUSION_TABLE: &str = "confusion.md";
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_TABLE: &str = "metrics.md";
pub const MCNEMAR_FILE: &str = "mcnemar.csv";

#[derive(Debug, Clone, Default)]
pub struct MetricsOptions {
    /// Paired assessments without/with the system, for McNemar's test.
    pub paired: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairedCase {
    #[allow(dead_code)]
    case_id: String,
    correct_without: bool,
    correct_with: bool,
}

/// Either pre-counted discordant pairs or one record per case.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PairedFile {
    Counts(PairedAgreement),
    Cases(Vec<PairedCase>),
}

pub fn load_paired(path: &Path) -> Result<PairedAgreement> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: PairedFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing paired assessments {}", path.display()))?;
    Ok(match parsed {
        PairedFile::Counts(pa) => pa,
        PairedFile::Cases(cases) => {
            PairedAgreement::from_pairs(cases.iter().map(|c| (c.correct_without, c.correct_with)))
        }
    })
}

/// Binary prediction: malignant iff the case reaches the red zone.
pub fn predicted_label(case: &CaseManifest, red_threshold: f64) -> Diagnosis {
    if case.probability >= red_threshold {
        Diagnosis::Malignant
    } else {
        Diagnosis::Benign
    }
}

struct MetricRow {
    name: String,
    ratio: Option<Ratio>,
    with_ci: bool,
}

fn confusion_rows(cm: &ConfusionMatrix) -> Vec<Vec<String>> {
    vec![
        vec![
            "System: malignant".into(),
            format!("TP = {}", cm.tp),
            format!("FP = {}", cm.fp),
            cm.predicted_positive().to_string(),
        ],
        vec![
            "System: benign".into(),
            format!("FN = {}", cm.fn_),
            format!("TN = {}", cm.tn),
            cm.predicted_negative().to_string(),
        ],
        vec![
            "Total".into(),
            cm.positives().to_string(),
            cm.negatives().to_string(),
            cm.total().to_string(),
        ],
    ]
}

/// Confusion matrix, derived metrics with exact intervals and, given paired
/// assessments, McNemar's test.
pub fn cmd_metrics(config: &RunConfig, options: &MetricsOptions) -> Result<CommandReport> {
    config.validate()?;
    ensure_dir(&config.out)?;
    let (cases, mut errors) = load_cases(&config.manifest)?;
    let red = config.thresholds.red();

    let mut labelled = Vec::new();
    for case in &cases {
        match case.reference_label {
            Some(reference) => labelled.push((case, predicted_label(case, red), reference)),
            None => errors.push(CaseError::new(
                case.case_id.clone(),
                "metrics",
                "missing reference label",
            )),
        }
    }
    let cm = confusion(
        labelled
            .iter()
            .map(|&(_, pred, reference)| (pred, reference)),
    );
    let m = metrics(&cm);

    let confusion_header = ["", "Expert: malignant", "Expert: benign", "Total"];
    let rows = confusion_rows(&cm);
    write_csv(
        &config.out.join(CONFUSION_FILE),
        &["", "expert_malignant", "expert_benign", "total"],
        [
            vec![
                "system_malignant".to_owned(),
                cm.tp.to_string(),
                cm.fp.to_string(),
                cm.predicted_positive().to_string(),
            ],
            vec![
                "system_benign".to_owned(),
                cm.fn_.to_string(),
                cm.tn.to_string(),
                cm.predicted_negative().to_string(),
            ],
            vec![
                "total".to_owned(),
                cm.positives().to_string(),
                cm.negatives().to_string(),
                cm.total().to_string(),
            ],
        ],
    )?;
    std::fs::write(
        config.out.join(CONFUSION_TABLE),
        markdown_table(&confusion_header, &rows),
    )?;

    let subgroup = |n: Nosology| {
        let group: Vec<_> = labelled
            .iter()
            .filter(|(c, _, r)| r.is_malignant() && c.nosology_reference == Some(n))
            .collect();
        let hits = group.iter().filter(|(_, p, _)| p.is_malignant()).count() as u64;
        Ratio::new(hits, group.len() as u64)
    };
    let mut table = vec![
        MetricRow {
            name: "sensitivity".into(),
            ratio: m.sensitivity,
            with_ci: true,
        },
        MetricRow {
            name: "specificity".into(),
            ratio: m.specificity,
            with_ci: true,
        },
        MetricRow {
            name: "ppv".into(),
            ratio: m.ppv,
            with_ci: true,
        },
        MetricRow {
            name: "npv".into(),
            ratio: m.npv,
            with_ci: true,
        },
        MetricRow {
            name: "accuracy".into(),
            ratio: m.accuracy,
            with_ci: true,
        },
    ];
    for n in [Nosology::Mel, Nosology::Bcc] {
        table.push(MetricRow {
            name: format!("sensitivity_{}", n.as_str()),
            ratio: subgroup(n),
            with_ci: true,
        });
    }
    table.push(MetricRow {
        name: "prevalence".into(),
        ratio: Ratio::new(cm.positives(), cm.total()),
        with_ci: false,
    });

    let mut csv_rows = Vec::new();
    for row in &table {
        let (num, den, pct) = match row.ratio {
            Some(r) => (r.num.to_string(), r.den.to_string(), r.percent_1dp()),
            None => Default::default(),
        };
        let (lo, hi) = match row.ratio.filter(|_| row.with_ci) {
            Some(r) => {
                let ci = clopper_pearson(r.num, r.den, config.confidence)?;
                (percent(ci.lower), percent(ci.upper))
            }
            None => Default::default(),
        };
        csv_rows.push(vec![row.name.clone(), num, den, pct, lo, hi]);
    }
    // Expected PPV at the observed prevalence from sensitivity and specificity alone.
    let bayes = match (
        m.sensitivity,
        m.specificity,
        Ratio::new(cm.positives(), cm.total()),
    ) {
        (Some(se), Some(sp), Some(prev)) => {
            ppv_at_prevalence(se.value(), sp.value(), prev.value()).ok()
        }
        _ => None,
    };
    csv_rows.push(vec![
        "ppv_bayes".into(),
        String::new(),
        String::new(),
        bayes.map(percent).unwrap_or_default(),
        String::new(),
        String::new(),
    ]);

    write_csv(
        &config.out.join(METRICS_FILE),
        &[
            "metric",
            "numerator",
            "denominator",
            "percent",
            "ci_lower",
            "ci_upper",
        ],
        csv_rows.clone(),
    )?;
    let conf_label = percent(config.confidence);
    let ci_header = format!("{conf_label} % CI");
    let md_rows: Vec<Vec<String>> = csv_rows
        .iter()
        .map(|r| {
            let value = if r[3].is_empty() {
                String::new()
            } else if r[1].is_empty() {
                format!("{} %", r[3])
            } else {
                format!("{} % ({}/{})", r[3], r[1], r[2])
            };
            let ci = if r[4].is_empty() {
                String::new()
            } else {
                format!("{}–{} %", r[4], r[5])
            };
            vec![r[0].clone(), value, ci]
        })
        .collect();
    std::fs::write(
        config.out.join(METRICS_TABLE),
        markdown_table(&["Metric", "Value", &ci_header], &md_rows),
    )?;

    if let Some(path) = &options.paired {
        let pa = load_paired(path)?;
        let row = match (mcnemar_exact(&pa), mcnemar_chi_square(&pa)) {
            (Ok(p), Ok(chi)) => vec![
                pa.b.to_string(),
                pa.c.to_string(),
                pa.n_concordant.to_string(),
                p.to_string(),
                chi.statistic.to_string(),
                chi.p_value.to_string(),
            ],
            (Err(e), _) | (_, Err(e)) => {
                errors.push(CaseError::new("", "mcnemar", e));
                vec![
                    pa.b.to_string(),
                    pa.c.to_string(),
                    pa.n_concordant.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]
            }
        };
        write_csv(
            &config.out.join(MCNEMAR_FILE),
            &[
                "b",
                "c",
                "n_concordant",
                "p_exact",
                "chi_square",
                "p_chi_square",
            ],
            [row],
        )?;
    }

    write_errors(&config.out, &errors)?;
    Ok(CommandReport {
        processed: cases.len(),
        errors,
    })
}
