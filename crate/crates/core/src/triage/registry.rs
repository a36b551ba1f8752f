//! Referral registry for yellow- and red-zone cases.
//!
//! Persisted as an append-only JSON-lines event log; the live state is a
//! replay of that log. Writers need `&mut Registry`, so a single owner
//! serializes all writes.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{Urgency, Zone};
use crate::error::{Error, Result};

/// Attendance control point after a referral decision.
pub const CONTROL_INTERVAL_DAYS: u64 = 28;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub case_id: String,
    pub zone: Zone,
    pub decision_date: NaiveDate,
    pub referral_issued: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urgency: Option<Urgency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attendance_date: Option<NaiveDate>,
    /// Number of earlier registrations of the same case id.
    #[serde(default)]
    pub recurrence: u32,
    /// Free-text biopsy or histology outcome.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
}

impl RegistryEntry {
    pub fn new(case_id: impl Into<String>, zone: Zone, decision_date: NaiveDate) -> Self {
        Self {
            case_id: case_id.into(),
            zone,
            decision_date,
            referral_issued: true,
            urgency: None,
            attendance_date: None,
            recurrence: 0,
            result: None,
        }
    }

    pub fn with_urgency(mut self, urgency: Option<Urgency>) -> Self {
        self.urgency = urgency;
        self
    }

    /// Always the decision date plus [`CONTROL_INTERVAL_DAYS`].
    pub fn control_date(&self) -> NaiveDate {
        self.decision_date
            .checked_add_days(Days::new(CONTROL_INTERVAL_DAYS))
            .expect("date in range")
    }

    pub fn attendance_confirmed(&self) -> bool {
        self.attendance_date.is_some()
    }
}

/// One line of the registry log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RegistryEvent {
    Register {
        case_id: String,
        zone: Zone,
        decision_date: NaiveDate,
        referral_issued: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        urgency: Option<Urgency>,
    },
    ConfirmAttendance {
        case_id: String,
        date: NaiveDate,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        result: Option<String>,
    },
}

/// A live entry displaced by a re-registration of the same case id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub replaced: RegistryEntry,
    pub replaced_by_decision: NaiveDate,
}

#[derive(Debug, Default)]
pub struct Registry {
    live: BTreeMap<String, RegistryEntry>,
    audit: Vec<AuditRecord>,
    log: Option<PathBuf>,
}

impl Registry {
    /// In-memory registry with no backing log.
    pub fn new() -> Self {
        Self::default()
    }

    /// Replay `path` if it exists; later writes are appended to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut registry = Self::new();
        if path.exists() {
            let reader = BufReader::new(fs::File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: RegistryEvent =
                    serde_json::from_str(&line).map_err(|source| Error::RegistryLog {
                        line: i + 1,
                        source,
                    })?;
                registry.apply(&event)?;
            }
        }
        registry.log = Some(path.to_path_buf());
        Ok(registry)
    }

    pub fn get(&self, case_id: &str) -> Option<&RegistryEntry> {
        self.live.get(case_id)
    }

    /// Live entries in case-id order.
    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.live.values()
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn audit_trail(&self) -> &[AuditRecord] {
        &self.audit
    }

    /// Register a yellow or red case. A repeated case id replaces the live
    /// entry and records the old one in the audit trail.
    pub fn register(&mut self, entry: RegistryEntry) -> Result<()> {
        let event = RegistryEvent::Register {
            case_id: entry.case_id,
            zone: entry.zone,
            decision_date: entry.decision_date,
            referral_issued: entry.referral_issued,
            urgency: entry.urgency,
        };
        self.check(&event)?;
        self.persist(&event)?;
        self.apply(&event)
    }

    pub fn confirm_attendance(
        &mut self,
        case_id: &str,
        date: NaiveDate,
        result: Option<String>,
    ) -> Result<()> {
        let event = RegistryEvent::ConfirmAttendance {
            case_id: case_id.to_owned(),
            date,
            result,
        };
        self.check(&event)?;
        self.persist(&event)?;
        self.apply(&event)
    }

    fn check(&self, event: &RegistryEvent) -> Result<()> {
        match event {
            RegistryEvent::Register {
                case_id,
                zone: Zone::Green,
                ..
            } => Err(Error::GreenZoneNotRegistrable(case_id.clone())),
            RegistryEvent::ConfirmAttendance { case_id, .. }
                if !self.live.contains_key(case_id) =>
            {
                Err(Error::UnknownCase(case_id.clone()))
            }
            _ => Ok(()),
        }
    }

    fn persist(&self, event: &RegistryEvent) -> Result<()> {
        if let Some(path) = &self.log {
            let mut line = serde_json::to_string(event).expect("event serializes");
            line.push('\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    fn apply(&mut self, event: &RegistryEvent) -> Result<()> {
        self.check(event)?;
        match event {
            RegistryEvent::Register {
                case_id,
                zone,
                decision_date,
                referral_issued,
                urgency,
            } => {
                let mut entry = RegistryEntry::new(case_id.clone(), *zone, *decision_date)
                    .with_urgency(*urgency);
                entry.referral_issued = *referral_issued;
                if let Some(prev) = self.live.remove(case_id) {
                    entry.recurrence = prev.recurrence + 1;
                    self.audit.push(AuditRecord {
                        replaced: prev,
                        replaced_by_decision: *decision_date,
                    });
                }
                self.live.insert(case_id.clone(), entry);
            }
            RegistryEvent::ConfirmAttendance {
                case_id,
                date,
                result,
            } => {
                let entry = self.live.get_mut(case_id).expect("checked");
                entry.attendance_date = Some(*date);
                if result.is_some() {
                    entry.result = result.clone();
                }
            }
        }
        Ok(())
    }
}

/// Unconfirmed entries whose control date is on or before `today`, oldest first.
pub fn followup_due(registry: &Registry, today: NaiveDate) -> Vec<RegistryEntry> {
    let mut due: Vec<_> = registry
        .entries()
        .filter(|e| !e.attendance_confirmed() && e.control_date() <= today)
        .cloned()
        .collect();
    due.sort_by(|a, b| {
        a.control_date()
            .cmp(&b.control_date())
            .then_with(|| a.case_id.cmp(&b.case_id))
    });
    due
}
