use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single rejected manifest field, tagged with the offending case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantViolation {
    pub case_id: String,
    pub field: &'static str,
    pub reason: String,
}

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "case {}: field `{}`: {}",
            self.case_id, self.field, self.reason
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic bytes {0:?}, expected \"TNSR\"")]
    BadMagic([u8; 4]),
    #[error("tensor rank {0} out of range 1..=4")]
    RankOutOfRange(usize),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} trailing bytes after tensor payload")]
    TrailingBytes(usize),
    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),
    #[error("invalid tensor dims {dims:?} for {len} values")]
    InvalidDims { dims: Vec<usize>, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("negative attention weight {value} in layer {layer}, row {row}")]
    NegativeAttention {
        layer: usize,
        row: usize,
        value: f32,
    },
    #[error("residual weight {0} outside [0, 1]")]
    ResidualWeightOutOfRange(f64),
    #[error("attention stack has no layers")]
    EmptyStack,
    #[error("grid {grid_h}x{grid_w} does not fit {tokens} tokens")]
    GridMismatch {
        tokens: usize,
        grid_h: usize,
        grid_w: usize,
    },
    #[error("target index {index} out of range for {tokens} tokens")]
    TargetOutOfRange { index: usize, tokens: usize },
    #[error("case {0}: neither an attention stack nor activations+gradients are available")]
    MissingInput(String),
    #[error("threshold tau={0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("box {index} ({x}, {y}, {w}, {h}) does not fit a {width}x{height} image")]
    BoxOutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("routing thresholds must satisfy 0 <= green ({green}) < red ({red}) <= 1")]
    InvalidThresholds { green: f64, red: f64 },
    #[error("cascade contract violated: {0}")]
    CascadeContract(String),
    #[error("case {0} is in the green zone and cannot be registered")]
    GreenZoneNotRegistrable(String),
    #[error("case {0} is not in the registry")]
    UnknownCase(String),
    #[error("invalid binomial counts x={x}, n={n}")]
    InvalidCounts { x: u64, n: u64 },
    #[error("confidence level {0} outside (0, 1)")]
    InvalidConfidence(f64),
    #[error("no discordant pairs (b = c = 0)")]
    NoDiscordantPairs,
    #[error("degenerate denominator in predictive value")]
    DegenerateDenominator,
    #[error("{} manifest invariant violation(s): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Manifest(Vec<InvariantViolation>),
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("registry log line {line}: {source}")]
    RegistryLog {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
