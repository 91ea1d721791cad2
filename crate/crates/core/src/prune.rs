//! Group-wise random pruning.
//!
//! Elements are kept with probability `1 - s` by Bernoulli draws taken from
//! one counter stream per group, where a group is either a quantized code
//! value or (for the non-quantized variant) an equal-width value interval.
//! Keeping the draws partitioned by group is what preserves the relative
//! proportions of values in the kept set.

use thiserror::Error;

use crate::quant::QuantGrid;
use crate::rng::{derive_u64, CounterStream};

#[derive(Debug, Error, PartialEq)]
pub enum PruneError {
    #[error("sparsity {0} outside [0, 1)")]
    InvalidSparsity(f64),
    #[error("interval count must be at least 1")]
    InvalidIntervalCount,
    #[error("layer contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// How Bernoulli substreams are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// One substream per quantized code value (distribution-preserving).
    PerValue,
    /// A single substream for the whole layer (plain random pruning; the
    /// comparison baseline).
    Single,
}

/// A quantized, pruned layer: the grid plus kept positions and codes.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedQuantLayer {
    pub grid: QuantGrid,
    pub n: u64,
    pub positions: Vec<u64>,
    pub codes: Vec<u16>,
    pub sparsity: f64,
    pub seed: u64,
}

impl PrunedQuantLayer {
    pub fn kept(&self) -> u64 {
        self.positions.len() as u64
    }

    pub fn realized_density(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.kept() as f64 / self.n as f64
        }
    }
}

/// Prunes a dense code tensor, keeping each position independently with
/// probability `1 - sparsity`. Draws are partitioned by code value (or pooled
/// under [`Grouping::Single`]); the substream for code `c` is keyed by
/// `derive_u64(seed, c)` and indexed by the occurrence order of `c`.
pub fn group_prune(
    grid: QuantGrid,
    codes: &[u16],
    sparsity: f64,
    seed: u64,
    grouping: Grouping,
) -> Result<PrunedQuantLayer, PruneError> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(PruneError::InvalidSparsity(sparsity));
    }
    let n = codes.len();
    let mut positions = Vec::new();
    let mut kept_codes = Vec::new();

    if sparsity == 0.0 {
        positions.extend(0..n as u64);
        kept_codes.extend_from_slice(codes);
    } else {
        let p_keep = 1.0 - sparsity;
        match grouping {
            Grouping::PerValue => {
                let mut counters = vec![0u64; 1usize << grid.bit_width];
                for (i, &c) in codes.iter().enumerate() {
                    let counter = &mut counters[c as usize];
                    let draw = CounterStream::at(derive_u64(seed, c as u64), *counter);
                    *counter += 1;
                    if to_unit(draw) < p_keep {
                        positions.push(i as u64);
                        kept_codes.push(c);
                    }
                }
            }
            Grouping::Single => {
                let mut stream = CounterStream::new(derive_u64(seed, 0));
                for (i, &c) in codes.iter().enumerate() {
                    if stream.next_f64() < p_keep {
                        positions.push(i as u64);
                        kept_codes.push(c);
                    }
                }
            }
        }
    }

    Ok(PrunedQuantLayer {
        grid,
        n: n as u64,
        positions,
        codes: kept_codes,
        sparsity,
        seed,
    })
}

#[inline]
fn to_unit(draw: u64) -> f64 {
    (draw >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Interval a value falls into when `[min, max]` is cut into `intervals`
/// equal slices; the maximum clamps into the last interval.
#[inline]
pub fn interval_index(x: f64, min: f64, max: f64, intervals: u32) -> u32 {
    if max <= min {
        return 0;
    }
    let width = (max - min) / intervals as f64;
    (((x - min) / width) as u32).min(intervals - 1)
}

/// Kept positions for the non-quantized variant: elements are grouped by
/// equal-width value intervals and pruned per group, retaining their
/// full-precision values.
pub fn interval_group_prune_positions(
    data: &[f32],
    intervals: u32,
    sparsity: f64,
    seed: u64,
) -> Result<Vec<u64>, PruneError> {
    if intervals == 0 {
        return Err(PruneError::InvalidIntervalCount);
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(PruneError::InvalidSparsity(sparsity));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(PruneError::NonFinite(i));
    }
    if sparsity == 0.0 {
        return Ok((0..data.len() as u64).collect());
    }

    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in data {
        min = min.min(v as f64);
        max = max.max(v as f64);
    }

    let p_keep = 1.0 - sparsity;
    let mut counters = vec![0u64; intervals as usize];
    let mut positions = Vec::new();
    for (i, &v) in data.iter().enumerate() {
        let idx = interval_index(v as f64, min, max, intervals);
        let counter = &mut counters[idx as usize];
        let draw = CounterStream::at(derive_u64(seed, idx as u64), *counter);
        *counter += 1;
        if to_unit(draw) < p_keep {
            positions.push(i as u64);
        }
    }
    Ok(positions)
}

/// Non-quantized group pruning returning the pruned dense tensor.
pub fn interval_group_prune(
    data: &[f32],
    intervals: u32,
    sparsity: f64,
    seed: u64,
) -> Result<Vec<f32>, PruneError> {
    let positions = interval_group_prune_positions(data, intervals, sparsity, seed)?;
    let mut out = vec![0.0f32; data.len()];
    for &p in &positions {
        out[p as usize] = data[p as usize];
    }
    Ok(out)
}

/// Dense dequantization: kept positions get `min + code * step`, pruned
/// positions are exact zeros. Zeros from pruning are identified by the
/// position list alone; a kept code 0 dequantizes to `min`, which is
/// generally nonzero.
pub fn dequantize(layer: &PrunedQuantLayer) -> Vec<f32> {
    let mut out = vec![0.0f32; layer.n as usize];
    for (&p, &c) in layer.positions.iter().zip(&layer.codes) {
        out[p as usize] = layer.grid.dequant(c) as f32;
    }
    out
}
