//! Three-zone routing of cascade malignancy probabilities.

mod registry;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Stage2Class;
use crate::render::Ratio;
use crate::tensor_io::STAGE2_MIN_PROBABILITY;

pub use registry::{
    followup_due, AuditRecord, Registry, RegistryEntry, RegistryEvent, CONTROL_INTERVAL_DAYS,
};

pub const DEFAULT_GREEN_THRESHOLD: f64 = 0.15;
pub const DEFAULT_RED_THRESHOLD: f64 = 0.50;

/// Ordered by severity: `Green < Yellow < Red`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Green,
    Yellow,
    Red,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::Green, Zone::Yellow, Zone::Red];

    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Green => "green",
            Zone::Yellow => "yellow",
            Zone::Red => "red",
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Zone boundaries: Green below `green`, Red at or above `red`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    green: f64,
    red: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            green: DEFAULT_GREEN_THRESHOLD,
            red: DEFAULT_RED_THRESHOLD,
        }
    }
}

impl Thresholds {
    pub fn new(green: f64, red: f64) -> Result<Self> {
        if !(0.0 <= green && green < red && red <= 1.0) {
            return Err(Error::InvalidThresholds { green, red });
        }
        Ok(Self { green, red })
    }

    pub fn green(&self) -> f64 {
        self.green
    }

    pub fn red(&self) -> f64 {
        self.red
    }

    pub fn route(&self, p: f64) -> Result<Zone> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        Ok(if p < self.green {
            Zone::Green
        } else if p < self.red {
            Zone::Yellow
        } else {
            Zone::Red
        })
    }
}

/// Route with the default 0.15 / 0.50 boundaries.
pub fn route(p: f64) -> Result<Zone> {
    Thresholds::default().route(p)
}

/// Output of the cascade for one lesion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    probability: f64,
    stage2_class: Option<Stage2Class>,
}

impl CascadeResult {
    pub fn new(probability: f64, stage2_class: Option<Stage2Class>) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::ProbabilityOutOfRange(probability));
        }
        if stage2_class.is_some() && probability < STAGE2_MIN_PROBABILITY {
            return Err(Error::CascadeContract(format!(
                "stage-2 class present with probability {probability} < {STAGE2_MIN_PROBABILITY}"
            )));
        }
        Ok(Self {
            probability,
            stage2_class,
        })
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn stage2_class(&self) -> Option<Stage2Class> {
        self.stage2_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    RecordInMedicalRecord,
    InformPatient,
    /// Repeat examination within the given month window.
    Reexamine {
        min_months: u32,
        max_months: u32,
    },
    DermatologistReferral,
    RepeatDermoscopy,
    /// Biopsy if the patient lands in the yellow zone again.
    BiopsyOnRepeat,
    UrgentReferral,
    PriorityAppointment,
    BiopsyOrExcision,
}

impl Action {
    pub fn code(&self) -> String {
        match self {
            Action::RecordInMedicalRecord => "record".into(),
            Action::InformPatient => "inform_patient".into(),
            Action::Reexamine {
                min_months,
                max_months,
            } => format!("reexamine_{min_months}-{max_months}m"),
            Action::DermatologistReferral => "dermatologist_referral".into(),
            Action::RepeatDermoscopy => "repeat_dermoscopy".into(),
            Action::BiopsyOnRepeat => "biopsy_on_repeat".into(),
            Action::UrgentReferral => "urgent_referral".into(),
            Action::PriorityAppointment => "priority_appointment".into(),
            Action::BiopsyOrExcision => "biopsy_or_excision".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Urgency {
    /// Oncologist referral, recommended within 3 working days.
    UrgentOncologist3d,
    OncoDermatologist,
    /// Scheduled dermatologist consultation followed by biopsy.
    ScheduledDermatologist,
}

impl Urgency {
    pub fn for_class(class: Stage2Class) -> Self {
        match class {
            Stage2Class::Mel => Urgency::UrgentOncologist3d,
            Stage2Class::Scc => Urgency::OncoDermatologist,
            Stage2Class::Bcc => Urgency::ScheduledDermatologist,
        }
    }

    /// Recommended referral window; kept as metadata, not checked against a calendar.
    pub fn recommended_working_days(self) -> Option<u32> {
        match self {
            Urgency::UrgentOncologist3d => Some(3),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Urgency::UrgentOncologist3d => "urgent_oncologist_3d",
            Urgency::OncoDermatologist => "onco_dermatologist",
            Urgency::ScheduledDermatologist => "scheduled_dermatologist",
        }
    }
}

impl fmt::Display for Urgency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditFlag {
    /// Red zone reached without a stage-2 class; referral issued without urgency.
    MissingStage2ForRed,
}

impl AuditFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditFlag::MissingStage2ForRed => "missing_stage2_for_red",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub zone: Zone,
    pub actions: Vec<Action>,
    pub urgency: Option<Urgency>,
    pub audit: Vec<AuditFlag>,
}

/// Staff actions for a zone; red-zone urgency comes from the stage-2 class.
pub fn zone_action(zone: Zone, stage2_class: Option<Stage2Class>) -> Result<RoutingDecision> {
    let decision = match zone {
        Zone::Green | Zone::Yellow if stage2_class.is_some() => {
            return Err(Error::CascadeContract(format!(
                "stage-2 class {} given for a {zone} zone decision",
                stage2_class.expect("checked")
            )))
        }
        Zone::Green => RoutingDecision {
            zone,
            actions: vec![
                Action::RecordInMedicalRecord,
                Action::InformPatient,
                Action::Reexamine {
                    min_months: 6,
                    max_months: 12,
                },
            ],
            urgency: None,
            audit: Vec::new(),
        },
        Zone::Yellow => RoutingDecision {
            zone,
            actions: vec![
                Action::DermatologistReferral,
                Action::RepeatDermoscopy,
                Action::BiopsyOnRepeat,
            ],
            urgency: None,
            audit: Vec::new(),
        },
        Zone::Red => RoutingDecision {
            zone,
            actions: vec![
                Action::UrgentReferral,
                Action::PriorityAppointment,
                Action::BiopsyOrExcision,
            ],
            urgency: stage2_class.map(Urgency::for_class),
            audit: if stage2_class.is_none() {
                vec![AuditFlag::MissingStage2ForRed]
            } else {
                Vec::new()
            },
        },
    };
    Ok(decision)
}

/// Route a cascade result and attach the zone's actions.
pub fn decide(result: &CascadeResult, thresholds: &Thresholds) -> Result<RoutingDecision> {
    let zone = thresholds.route(result.probability())?;
    // With a custom red threshold above 0.50 a stage-2 class can precede the red zone; it only
    // matters once the case is red.
    let class = if zone == Zone::Red {
        result.stage2_class()
    } else {
        None
    };
    zone_action(zone, class)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneDistribution {
    /// Green, Yellow, Red.
    pub counts: [u64; 3],
}

impl ZoneDistribution {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, zone: Zone) -> u64 {
        self.counts[zone as usize]
    }

    /// Exact share of a zone; `None` for an empty distribution.
    pub fn share(&self, zone: Zone) -> Option<Ratio> {
        Ratio::new(self.count(zone), self.total())
    }

    /// One-decimal percentages, half up; `None` for an empty distribution.
    pub fn percentages(&self) -> Option<[String; 3]> {
        (self.total() > 0)
            .then(|| Zone::ALL.map(|z| self.share(z).expect("non-empty").percent_1dp()))
    }
}

pub fn zone_distribution(
    cases: &[CascadeResult],
    thresholds: &Thresholds,
) -> Result<ZoneDistribution> {
    let mut counts = [0u64; 3];
    for c in cases {
        counts[thresholds.route(c.probability())? as usize] += 1;
    }
    Ok(ZoneDistribution { counts })
}
