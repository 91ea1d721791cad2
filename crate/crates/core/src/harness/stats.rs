//! Distribution-preservation test for pruned code populations.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::HarnessError;

/// Significance level: pruning passes when `p >= CHI_SQUARE_ALPHA`.
pub const CHI_SQUARE_ALPHA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// Chi-square goodness-of-fit of the kept codes' proportions against the
/// original population's. Bins with expected count below 5 are pooled with
/// their neighbour so the chi-square approximation stays valid.
pub fn distribution_preservation_stat(
    original: &[u32],
    kept: &[u32],
) -> Result<ChiSquareResult, HarnessError> {
    if original.is_empty() || kept.is_empty() {
        return Err(HarnessError::EmptyPopulation);
    }

    let mut population: BTreeMap<u32, u64> = BTreeMap::new();
    for &c in original {
        *population.entry(c).or_insert(0) += 1;
    }
    let mut observed: BTreeMap<u32, u64> = BTreeMap::new();
    for &c in kept {
        if !population.contains_key(&c) {
            return Err(HarnessError::ForeignCode(c));
        }
        *observed.entry(c).or_insert(0) += 1;
    }

    let n_orig = original.len() as f64;
    let n_kept = kept.len() as f64;

    // pooled (expected, observed) bins in ascending code order
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc_exp = 0.0;
    let mut acc_obs = 0.0;
    for (&code, &pop) in &population {
        acc_exp += pop as f64 / n_orig * n_kept;
        acc_obs += observed.get(&code).copied().unwrap_or(0) as f64;
        if acc_exp >= 5.0 {
            bins.push((acc_exp, acc_obs));
            acc_exp = 0.0;
            acc_obs = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.0 += acc_exp;
            last.1 += acc_obs;
        } else {
            bins.push((acc_exp, acc_obs));
        }
    }

    if bins.len() < 2 {
        // a single value class carries no shape to distort
        return Ok(ChiSquareResult {
            statistic: 0.0,
            degrees_of_freedom: 0,
            p_value: 1.0,
            pass: true,
        });
    }

    let statistic: f64 = bins
        .iter()
        .map(|&(exp, obs)| {
            let d = obs - exp;
            d * d / exp
        })
        .sum();
    let df = bins.len() - 1;
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    let p_value = 1.0 - chi.cdf(statistic);
    Ok(ChiSquareResult {
        statistic,
        degrees_of_freedom: df,
        p_value,
        pass: p_value >= CHI_SQUARE_ALPHA,
    })
}

/// Magnitude-style counterexample: removes entire lowest-code groups until
/// at least `sparsity` of the population is gone, keeping the rest intact.
/// Whole frequency classes disappear, which is exactly what the chi-square
/// test must flag.
pub fn drop_lowest_code_groups(codes: &[u32], sparsity: f64) -> Vec<u32> {
    let target_drop = (codes.len() as f64 * sparsity) as u64;
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for &c in codes {
        *counts.entry(c).or_insert(0) += 1;
    }
    let mut dropped = 0u64;
    let mut cutoff = 0u32;
    for (&code, &count) in &counts {
        if dropped >= target_drop {
            break;
        }
        dropped += count;
        cutoff = code + 1;
    }
    codes.iter().copied().filter(|&c| c >= cutoff).collect()
}
