//! Readers and writers for the pipeline's inputs: binary tensors, attention
//! stacks, Grad-CAM inputs, expert annotations and case manifests.

mod annotations;
mod attention;
mod manifest;
mod tensor;

pub use annotations::{load_annotations, AnnotationBox, AnnotationSet, StructureLabel};
pub use attention::{AttentionStack, GradCamInput, RowSumWarning, ROW_SUM_TOLERANCE};
pub use manifest::{load_manifest, load_manifest_lenient, CaseManifest, STAGE2_MIN_PROBABILITY};
pub use tensor::{read_tensor, write_tensor, Tensor, MAGIC, MAX_RANK};
