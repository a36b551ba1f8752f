//! One module per subcommand.

pub mod evaluate;
pub mod followup;
pub mod metrics;
pub mod saliency;
pub mod triage;

pub use evaluate::{cmd_evaluate, EvaluateOptions};
pub use followup::cmd_followup;
pub use metrics::{cmd_metrics, MetricsOptions};
pub use saliency::{cmd_saliency, SaliencyOptions};
pub use triage::{cmd_triage, TriageOptions};
