//! Diagnostic label vocabularies shared by the manifest, triage and statistics.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Binary reference or predicted label. Malignant is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnosis {
    Malignant,
    Benign,
}

impl Diagnosis {
    pub fn is_malignant(self) -> bool {
        self == Diagnosis::Malignant
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::Malignant => "malignant",
            Diagnosis::Benign => "benign",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nosological reference class of a lesion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Nosology {
    #[serde(rename = "MEL")]
    Mel,
    #[serde(rename = "BCC")]
    Bcc,
    #[serde(rename = "SCC")]
    Scc,
    #[serde(rename = "DN")]
    Dn,
    #[serde(rename = "NV")]
    Nv,
    #[serde(rename = "other")]
    Other,
}

impl Nosology {
    pub const ALL: [Nosology; 6] = [
        Nosology::Mel,
        Nosology::Bcc,
        Nosology::Scc,
        Nosology::Dn,
        Nosology::Nv,
        Nosology::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Nosology::Mel => "MEL",
            Nosology::Bcc => "BCC",
            Nosology::Scc => "SCC",
            Nosology::Dn => "DN",
            Nosology::Nv => "NV",
            Nosology::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }

    /// Long column heading used in the IoU table.
    pub fn heading(self) -> &'static str {
        match self {
            Nosology::Mel => "Melanoma",
            Nosology::Bcc => "BCC",
            Nosology::Scc => "SCC",
            Nosology::Dn => "Dyspl. naevus",
            Nosology::Nv => "Naevus",
            Nosology::Other => "Other",
        }
    }
}

impl fmt::Display for Nosology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class assigned by the second cascade stage, which only runs for P >= 0.50.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage2Class {
    #[serde(rename = "MEL")]
    Mel,
    #[serde(rename = "SCC")]
    Scc,
    #[serde(rename = "BCC")]
    Bcc,
}

impl Stage2Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage2Class::Mel => "MEL",
            Stage2Class::Scc => "SCC",
            Stage2Class::Bcc => "BCC",
        }
    }
}

impl fmt::Display for Stage2Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
