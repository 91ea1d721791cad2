//! Trace-norm-guided rescaling.
//!
//! Each task's delta gets a global factor `gamma / (1 - s)`. The extra
//! `gamma` is assigned per task from the trace norm (nuclear norm) of its
//! delta weights: larger trace norm, smaller gamma, linearly interpolated
//! across the tasks of one invocation inside `[gamma_min, gamma_max]`. Only
//! relative magnitudes matter, so a randomized sketch may replace the exact
//! SVD on large matrices.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_u64, CounterStream};

#[derive(Debug, Error, PartialEq)]
pub enum RescaleError {
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    NonMatrixInput { rows: usize, cols: usize, len: usize },
    #[error("sparsity {0} outside [0, 1)")]
    InvalidSparsity(f64),
    #[error("need at least {min} Monte Carlo trials, got {got}")]
    TooFewTrials { min: u64, got: u64 },
    #[error("gamma range [{gamma_min}, {gamma_max}] invalid; need 0 < min <= max <= 1")]
    InvalidGammaRange { gamma_min: f64, gamma_max: f64 },
    #[error("cannot assign gamma to an empty task list")]
    EmptyTaskList,
}

/// How a trace norm was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TraceNormMethod {
    ExactSvd,
    RandomizedApprox {
        rank: usize,
        oversample: usize,
        power_iters: usize,
        seed: u64,
    },
}

impl TraceNormMethod {
    /// The default sketch: rank `min(64, min-dim)`, oversampling 8, two
    /// power iterations.
    pub fn randomized(seed: u64) -> Self {
        TraceNormMethod::RandomizedApprox {
            rank: 64,
            oversample: 8,
            power_iters: 2,
            seed,
        }
    }
}

/// Per-layer and aggregated trace norms of one task's delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNormSummary {
    pub task: String,
    pub per_layer: Vec<(String, f64)>,
    /// Sum of per-layer trace norms over the compressible matrices.
    pub model_trace_norm: f64,
    pub method: TraceNormMethod,
}

/// Sum of singular values of a row-major `rows x cols` matrix.
pub fn trace_norm(
    data: &[f32],
    rows: usize,
    cols: usize,
    method: TraceNormMethod,
) -> Result<f64, RescaleError> {
    if rows * cols != data.len() {
        return Err(RescaleError::NonMatrixInput {
            rows,
            cols,
            len: data.len(),
        });
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    let a = DMatrix::from_fn(rows, cols, |i, j| data[i * cols + j] as f64);
    match method {
        TraceNormMethod::ExactSvd => Ok(exact_nuclear(&a)),
        TraceNormMethod::RandomizedApprox {
            rank,
            oversample,
            power_iters,
            seed,
        } => Ok(randomized_nuclear(&a, rank, oversample, power_iters, seed)),
    }
}

fn exact_nuclear(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.iter().sum()
}

/// Subspace-iteration sketch: captures the top `rank + oversample` singular
/// values, a lower bound that is tight for the rapidly decaying spectra of
/// delta weights.
fn randomized_nuclear(
    a: &DMatrix<f64>,
    rank: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> f64 {
    let min_dim = a.nrows().min(a.ncols());
    let sketch = (rank + oversample).min(min_dim).max(1);
    if sketch == min_dim {
        // sketching the full space: just do the exact decomposition
        return exact_nuclear(a);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(a.ncols(), sketch, |_, _| StandardNormal.sample(&mut rng));

    let ortho = |m: DMatrix<f64>| m.qr().q();
    let mut q = ortho(a * &omega);
    for _ in 0..power_iters {
        let z = ortho(a.transpose() * &q);
        q = ortho(a * z);
    }
    let b = q.transpose() * a;
    b.svd(false, false).singular_values.iter().sum()
}

/// Mapping from model trace norms to per-task gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GammaMapping {
    /// Min-max linear interpolation across the invocation's tasks: the task
    /// with the largest trace norm gets `gamma_min`, the smallest gets
    /// `gamma_max`. A single task (or all-equal norms) gets the midpoint.
    MinMaxLinear,
    /// A fixed gamma for every task (the single-task override).
    Constant { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescalePolicy {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub mapping: GammaMapping,
}

impl Default for RescalePolicy {
    fn default() -> Self {
        Self {
            gamma_min: 0.5,
            gamma_max: 1.0,
            mapping: GammaMapping::MinMaxLinear,
        }
    }
}

impl RescalePolicy {
    pub fn validate(&self) -> Result<(), RescaleError> {
        if !(self.gamma_min > 0.0 && self.gamma_min <= self.gamma_max && self.gamma_max <= 1.0) {
            return Err(RescaleError::InvalidGammaRange {
                gamma_min: self.gamma_min,
                gamma_max: self.gamma_max,
            });
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.gamma_min + self.gamma_max)
    }
}

/// Per-task gamma from the tasks' model trace norms.
pub fn assign_gamma(
    summaries: &[TraceNormSummary],
    policy: &RescalePolicy,
) -> Result<Vec<f64>, RescaleError> {
    policy.validate()?;
    if summaries.is_empty() {
        return Err(RescaleError::EmptyTaskList);
    }
    if let GammaMapping::Constant { gamma } = policy.mapping {
        return Ok(vec![gamma; summaries.len()]);
    }

    let norms: Vec<f64> = summaries.iter().map(|s| s.model_trace_norm).collect();
    let t_min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if summaries.len() == 1 || t_max == t_min {
        return Ok(vec![policy.midpoint(); summaries.len()]);
    }
    Ok(norms
        .iter()
        .map(|&t| {
            policy.gamma_max - (policy.gamma_max - policy.gamma_min) * (t - t_min) / (t_max - t_min)
        })
        .collect())
}

/// Closed-form variance of the activation error under pruning with rescale
/// `gamma/(1-s)`: `gamma^2 * s / (1 - s) * a^2`.
pub fn activation_error_variance(a: f64, gamma: f64, s: f64) -> Result<f64, RescaleError> {
    if !(0.0..1.0).contains(&s) {
        return Err(RescaleError::InvalidSparsity(s));
    }
    Ok(gamma * gamma * s / (1.0 - s) * a * a)
}

/// Samples the activation error `eps = a * (1 - B * gamma/(1-s))` with
/// `B ~ Bernoulli(1-s)` and returns (sample mean, unbiased sample variance).
pub fn monte_carlo_error_check(
    a: f64,
    gamma: f64,
    s: f64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64), RescaleError> {
    const MIN_TRIALS: u64 = 10_000;
    if trials < MIN_TRIALS {
        return Err(RescaleError::TooFewTrials {
            min: MIN_TRIALS,
            got: trials,
        });
    }
    if !(0.0..1.0).contains(&s) {
        return Err(RescaleError::InvalidSparsity(s));
    }

    let keep_value = a * (1.0 - gamma / (1.0 - s));
    let drop_value = a;
    let p_keep = 1.0 - s;

    // Welford accumulation: constant samples yield an exact mean and an
    // exactly zero variance (the s = 0 case).
    let mut stream = CounterStream::new(derive_u64(seed, 0xE5));
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for k in 1..=trials {
        let eps = if stream.next_f64() < p_keep {
            keep_value
        } else {
            drop_value
        };
        let d1 = eps - mean;
        mean += d1 / k as f64;
        m2 += d1 * (eps - mean);
    }
    Ok((mean, m2 / (trials - 1) as f64))
}
