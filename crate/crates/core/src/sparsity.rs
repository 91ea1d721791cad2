//! Mixed sparsity allocation over variance groups.
//!
//! Layers are sorted by variance and split into three contiguous groups of
//! near-equal parameter mass. The low-variance group gets the highest
//! sparsity and the high-variance group the lowest; the mid group absorbs a
//! linear correction so the parameter-weighted mean sparsity stays on target.
//! The Gaussian-entropy and rate-distortion helpers are reporting analytics;
//! they do not feed the allocation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("layer '{0}' is empty")]
    EmptyLayer(String),
    #[error("infeasible sparsity step: s_mid={s_mid} s_step={s_step} must satisfy s_mid+s_step < 1 and s_mid-s_step >= 0")]
    InfeasibleStep { s_mid: f64, s_step: f64 },
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("distortion must be positive, got {0}")]
    NonPositiveDistortion(f64),
    #[error("variance must be nonnegative, got {0}")]
    NegativeVariance(f64),
}

/// Variance tercile a layer lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceGroup {
    Low,
    Mid,
    High,
}

impl VarianceGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceGroup::Low => "low",
            VarianceGroup::Mid => "mid",
            VarianceGroup::High => "high",
        }
    }
}

/// Name, parameter count, and delta variance of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStat {
    pub name: String,
    pub count: u64,
    pub variance: f64,
}

/// Population variance of a layer's elements (f64 accumulation, two passes).
pub fn layer_variance(data: &[f32]) -> Result<f64, AllocError> {
    if data.is_empty() {
        return Err(AllocError::EmptyLayer(String::new()));
    }
    let n = data.len() as f64;
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let ss = data
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>();
    Ok(ss / n)
}

/// Layers sorted ascending by variance with their group labels.
#[derive(Debug, Clone)]
pub struct GroupAssignment {
    /// `(stat, group)` in ascending-variance order.
    pub layers: Vec<(LayerStat, VarianceGroup)>,
    /// True when fewer than three layers forced the all-mid fallback.
    pub degenerate: bool,
}

impl GroupAssignment {
    pub fn group_mass(&self, group: VarianceGroup) -> u64 {
        self.layers
            .iter()
            .filter(|(_, g)| *g == group)
            .map(|(s, _)| s.count)
            .sum()
    }

    pub fn total_mass(&self) -> u64 {
        self.layers.iter().map(|(s, _)| s.count).sum()
    }
}

/// Sorts layers ascending by variance and splits them into three contiguous
/// segments whose cumulative parameter counts track total/3 and 2·total/3 as
/// closely as whole layers allow (nearest prefix, earlier index on ties).
///
/// With fewer than three layers every layer is assigned to the mid group.
pub fn partition_by_variance(mut layers: Vec<LayerStat>) -> GroupAssignment {
    layers.sort_by(|a, b| {
        a.variance
            .partial_cmp(&b.variance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
    let n = layers.len();
    if n < 3 {
        return GroupAssignment {
            layers: layers
                .into_iter()
                .map(|s| (s, VarianceGroup::Mid))
                .collect(),
            degenerate: true,
        };
    }

    let total: u64 = layers.iter().map(|s| s.count).sum();
    let prefix: Vec<u64> = layers
        .iter()
        .scan(0u64, |acc, s| {
            *acc += s.count;
            Some(*acc)
        })
        .collect();

    // boundary k (1-based layer count) nearest to `target`, constrained so
    // every segment keeps at least one layer
    let pick = |target: f64, min_k: usize, max_k: usize| -> usize {
        let mut best = min_k;
        let mut best_dev = f64::INFINITY;
        for k in min_k..=max_k {
            let dev = (prefix[k - 1] as f64 - target).abs();
            if dev < best_dev {
                best_dev = dev;
                best = k;
            }
        }
        best
    };

    let third = total as f64 / 3.0;
    let b1 = pick(third, 1, n - 2);
    let b2 = pick(2.0 * third, b1 + 1, n - 1);

    let labelled = layers
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let g = if i < b1 {
                VarianceGroup::Low
            } else if i < b2 {
                VarianceGroup::Mid
            } else {
                VarianceGroup::High
            };
            (s, g)
        })
        .collect();
    GroupAssignment {
        layers: labelled,
        degenerate: false,
    }
}

/// Per-layer record of a compression plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanLayer {
    pub name: String,
    pub count: u64,
    pub variance: f64,
    pub group: VarianceGroup,
    pub sparsity: f64,
}

/// Sparsity plan for one task: per-layer records plus the global knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    pub layers: Vec<PlanLayer>,
    pub s_mid: f64,
    pub s_step: f64,
    pub bit_width: u32,
    pub master_seed: u64,
}

impl CompressionPlan {
    pub fn with_bit_width(mut self, bit_width: u32) -> Self {
        self.bit_width = bit_width;
        self
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn layer(&self, name: &str) -> Option<&PlanLayer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.count).sum()
    }

    /// Parameter-weighted mean sparsity.
    pub fn weighted_mean_sparsity(&self) -> f64 {
        let total = self.total_params();
        if total == 0 {
            return 0.0;
        }
        self.layers
            .iter()
            .map(|l| l.sparsity * l.count as f64)
            .sum::<f64>()
            / total as f64
    }
}

/// Assigns per-group sparsities `{s_mid + step, s_mid, s_mid - step}` (low to
/// high variance) and corrects the mid group so the weighted mean sparsity
/// equals `s_mid`. The correction is clamped to `[s_mid - step, s_mid + step]`
/// so the antitone ordering survives degenerate mass splits.
pub fn assign_sparsity(
    assignment: &GroupAssignment,
    s_mid: f64,
    s_step: f64,
) -> Result<CompressionPlan, AllocError> {
    if !(0.0..1.0).contains(&s_mid)
        || s_step < 0.0
        || s_mid + s_step >= 1.0
        || s_mid - s_step < 0.0
    {
        return Err(AllocError::InfeasibleStep { s_mid, s_step });
    }

    let total = assignment.total_mass();
    let w = |g: VarianceGroup| assignment.group_mass(g) as f64 / total.max(1) as f64;
    let (w_low, w_mid, w_high) = (
        w(VarianceGroup::Low),
        w(VarianceGroup::Mid),
        w(VarianceGroup::High),
    );

    let mid_sparsity = if assignment.degenerate || w_mid == 0.0 || s_step == 0.0 {
        s_mid
    } else {
        // solve w_low (s+t) + w_mid x + w_high (s-t) = s for x
        let x = s_mid - s_step * (w_low - w_high) / w_mid;
        x.clamp(s_mid - s_step, s_mid + s_step)
    };

    let layers = assignment
        .layers
        .iter()
        .map(|(stat, group)| {
            let sparsity = match group {
                VarianceGroup::Low => s_mid + s_step,
                VarianceGroup::Mid => mid_sparsity,
                VarianceGroup::High => s_mid - s_step,
            };
            PlanLayer {
                name: stat.name.clone(),
                count: stat.count,
                variance: stat.variance,
                group: *group,
                sparsity,
            }
        })
        .collect();

    Ok(CompressionPlan {
        layers,
        s_mid,
        s_step,
        bit_width: 4,
        master_seed: 0,
    })
}

/// Differential entropy (nats) of a Gaussian layer with scale `sigma`:
/// `ln(sigma) + ln(2*pi)/2 + 1/2`.
pub fn gaussian_layer_entropy(sigma: f64) -> Result<f64, AllocError> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(AllocError::NonPositiveSigma(sigma));
    }
    Ok(sigma.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5)
}

/// Rate-distortion function (bits) of a Gaussian source under MSE:
/// `log2(sigma2/d)/2` for `d < sigma2`, else 0.
pub fn rate_distortion(sigma2: f64, d: f64) -> Result<f64, AllocError> {
    if d <= 0.0 || !d.is_finite() {
        return Err(AllocError::NonPositiveDistortion(d));
    }
    if sigma2 < 0.0 {
        return Err(AllocError::NegativeVariance(sigma2));
    }
    if d >= sigma2 {
        Ok(0.0)
    } else {
        Ok(0.5 * (sigma2 / d).log2())
    }
}
