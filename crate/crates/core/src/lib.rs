//! Saliency-map relevance scoring against expert dermoscopic annotations,
//! three-zone triage of cascade malignancy probabilities, and diagnostic
//! accuracy statistics.

pub mod error;
pub mod labels;
pub mod relevance;
pub mod render;
pub mod saliency;
pub mod stats;
pub mod tensor_io;
pub mod triage;

pub use error::{Error, InvariantViolation, Result};
