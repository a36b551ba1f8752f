use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use dermaudit::labels::Nosology;
use dermaudit::triage::{
    decide, CascadeResult, Registry, RegistryEntry, RoutingDecision, Zone, ZoneDistribution,
};

use crate::config::RunConfig;
use crate::report::{
    ensure_dir, load_cases, markdown_table, par_map, write_csv, write_errors, CaseError,
    CommandReport,
};

pub const DECISIONS_FILE: &str = "triage.csv";
pub const DISTRIBUTION_FILE: &str = "zone_distribution.csv";
pub const DISTRIBUTION_TABLE: &str = "zone_distribution.md";
pub const SESSIONS_FILE: &str = "sessions.csv";
pub const REGISTRY_FILE: &str = "registry.jsonl";

#[derive(Debug, Clone)]
pub struct TriageOptions {
    /// Decision date recorded for registry entries.
    pub date: NaiveDate,
    /// Registry log; defaults to `registry.jsonl` in the output directory.
    pub registry: Option<PathBuf>,
}

fn zone_label(z: Zone) -> &'static str {
    match z {
        Zone::Green => "Green",
        Zone::Yellow => "Yellow",
        Zone::Red => "Red",
    }
}

/// Route every case, write the distribution and register yellow/red cases.
pub fn cmd_triage(config: &RunConfig, options: &TriageOptions) -> Result<CommandReport> {
    config.validate()?;
    ensure_dir(&config.out)?;
    let (cases, mut errors) = load_cases(&config.manifest)?;
    let thresholds = config.thresholds;
    let decisions = par_map(
        config.jobs,
        &cases,
        |case| -> dermaudit::Result<RoutingDecision> {
            decide(
                &CascadeResult::new(case.probability, case.stage2_class)?,
                &thresholds,
            )
        },
    )?;

    let registry_path = options
        .registry
        .clone()
        .unwrap_or_else(|| config.out.join(REGISTRY_FILE));
    let mut registry = Registry::open(&registry_path)
        .with_context(|| format!("opening registry {}", registry_path.display()))?;

    let mut dist = ZoneDistribution { counts: [0; 3] };
    let mut rows = Vec::new();
    // session -> (zone counts, nosology counts)
    let mut sessions: BTreeMap<String, ([u64; 3], BTreeMap<Nosology, u64>)> = BTreeMap::new();
    for (case, decision) in cases.iter().zip(decisions) {
        let d = match decision {
            Ok(d) => d,
            Err(e) => {
                errors.push(CaseError::new(case.case_id.clone(), "triage", e));
                continue;
            }
        };
        dist.counts[d.zone as usize] += 1;
        if let Some(s) = &case.session {
            let entry = sessions.entry(s.clone()).or_default();
            entry.0[d.zone as usize] += 1;
            if let Some(n) = case.nosology_reference {
                *entry.1.entry(n).or_default() += 1;
            }
        }
        if d.zone != Zone::Green {
            let entry = RegistryEntry::new(case.case_id.clone(), d.zone, options.date)
                .with_urgency(d.urgency);
            if let Err(e) = registry.register(entry) {
                errors.push(CaseError::new(case.case_id.clone(), "registry", e));
            }
        }
        rows.push(vec![
            case.case_id.clone(),
            case.probability.to_string(),
            d.zone.to_string(),
            case.stage2_class.map(|c| c.to_string()).unwrap_or_default(),
            d.urgency.map(|u| u.to_string()).unwrap_or_default(),
            d.actions
                .iter()
                .map(|a| a.code())
                .collect::<Vec<_>>()
                .join(";"),
            d.audit
                .iter()
                .map(|f| f.as_str())
                .collect::<Vec<_>>()
                .join(";"),
        ]);
    }

    write_csv(
        &config.out.join(DECISIONS_FILE),
        &[
            "case_id",
            "probability",
            "zone",
            "stage2_class",
            "urgency",
            "actions",
            "audit",
        ],
        rows,
    )?;

    let percentages = dist.percentages();
    let dist_rows: Vec<Vec<String>> = Zone::ALL
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            vec![
                z.to_string(),
                dist.count(z).to_string(),
                percentages
                    .as_ref()
                    .map(|p| p[i].clone())
                    .unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &config.out.join(DISTRIBUTION_FILE),
        &["zone", "count", "percent"],
        dist_rows.clone(),
    )?;
    let md_rows: Vec<Vec<String>> = Zone::ALL
        .iter()
        .zip(&dist_rows)
        .map(|(&z, r)| {
            let pct = if r[2].is_empty() {
                String::new()
            } else {
                format!("{} %", r[2])
            };
            vec![zone_label(z).to_owned(), r[1].clone(), pct]
        })
        .chain(std::iter::once(vec![
            "Total".to_owned(),
            dist.total().to_string(),
            String::new(),
        ]))
        .collect();
    std::fs::write(
        config.out.join(DISTRIBUTION_TABLE),
        markdown_table(&["Zone", "Patients", "Share"], &md_rows),
    )?;

    let mut header = vec!["session", "patients", "green", "yellow", "red"];
    header.extend(Nosology::ALL.iter().map(|n| n.as_str()));
    write_csv(
        &config.out.join(SESSIONS_FILE),
        &header,
        sessions.iter().map(|(s, (zones, noso))| {
            let mut row = vec![s.clone(), zones.iter().sum::<u64>().to_string()];
            row.extend(zones.iter().map(u64::to_string));
            row.extend(
                Nosology::ALL
                    .iter()
                    .map(|n| noso.get(n).copied().unwrap_or(0).to_string()),
            );
            row
        }),
    )?;

    write_errors(&config.out, &errors)?;
    Ok(CommandReport {
        processed: cases.len(),
        errors,
    })
}
