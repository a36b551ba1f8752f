use std::path::Path;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use dermaudit::triage::{followup_due, Registry};

use crate::report::{ensure_dir, write_csv};

pub const FOLLOWUP_FILE: &str = "followup.csv";

/// List registry cases past their control date without confirmed attendance.
pub fn cmd_followup(registry: &Path, today: NaiveDate, out: &Path) -> Result<usize> {
    ensure_dir(out)?;
    let registry = Registry::open(registry)
        .with_context(|| format!("opening registry {}", registry.display()))?;
    let due = followup_due(&registry, today);
    write_csv(
        &out.join(FOLLOWUP_FILE),
        &[
            "case_id",
            "zone",
            "decision_date",
            "control_date",
            "urgency",
            "recurrence",
        ],
        due.iter().map(|e| {
            vec![
                e.case_id.clone(),
                e.zone.to_string(),
                e.decision_date.to_string(),
                e.control_date().to_string(),
                e.urgency.map(|u| u.to_string()).unwrap_or_default(),
                e.recurrence.to_string(),
            ]
        }),
    )?;
    Ok(due.len())
}
