//! Desk-scale verification harness: synthetic Gaussian deltas, a tiny
//! trainable classifier for end-to-end retention experiments, and the
//! statistical comparators the pipeline's claims are tested against.

mod stats;
mod synthetic;
mod toy;

pub use stats::{
    distribution_preservation_stat, drop_lowest_code_groups, ChiSquareResult, CHI_SQUARE_ALPHA,
};
pub use synthetic::{gen_synthetic_delta, LayerSpec, SyntheticDelta, SyntheticDeltaSpec};
pub use toy::{
    accuracy_retention_test, evaluate_accuracy, train_toy_model, RetentionPoint, RetentionRow,
    ToyTask,
};

use thiserror::Error;

use crate::container::ContainerError;
use crate::pipeline::PipelineError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("code population is empty")]
    EmptyPopulation,
    #[error("kept set contains code {0} absent from the population")]
    ForeignCode(u32),
    #[error("sigma must be nonnegative, got {0}")]
    NegativeSigma(f64),
    #[error("invalid toy task: {0}")]
    InvalidTask(String),
    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("pipeline: {0}")]
    Pipeline(Box<PipelineError>),
}

impl From<PipelineError> for HarnessError {
    fn from(e: PipelineError) -> Self {
        HarnessError::Pipeline(Box::new(e))
    }
}
