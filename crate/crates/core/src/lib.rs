//! Delta-weight compression toolkit.
//!
//! Stores a fleet of fine-tuned models as one pretrained base plus highly
//! compressed per-task deltas. The pipeline: extract deltas, allocate
//! per-layer sparsity from variance groups, uniform-quantize and group-prune
//! each layer, assign a trace-norm-guided rescale factor per task, and
//! serialize the kept symbols under a bit-exact sparse codec.

pub mod bitio;
pub mod codec;
pub mod container;
pub mod harness;
pub mod pipeline;
pub mod prune;
pub mod quant;
pub mod rescale;
pub mod rng;
pub mod sparsity;

pub use container::{
    extract_delta, load_container, save_container, DeltaSet, Dtype, LayerSelector, NamedTensorSet,
    TensorEntry,
};
pub use pipeline::{
    compress_models, reconstruct, stats, verify_archive, CompressedDelta, PipelineConfig,
    PipelineError, TaskInput,
};
pub use sparsity::{assign_sparsity, layer_variance, partition_by_variance, CompressionPlan};
