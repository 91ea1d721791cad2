//! Entropy-based compression-ratio calculator.
//!
//! With keep probability `1 - s` the zero runs are geometric, so the
//! per-parameter entropy of the positions is
//! `H_geo = -(1-s) log2(1-s) - s log2 s`, and storing each kept value as one
//! of `m = 2^b` symbols adds at most `(1-s) log2 m`:
//!
//! `H_comp = -[ s log2 s + (1-s) log2((1-s)/m) ]`
//!
//! Ratios are reported against a 16-bit-per-parameter original. The
//! index-free bound counts only the kept value bits: `16 / ((1-s) b)`.

use serde::{Deserialize, Serialize};

use super::CodecError;

/// Theoretical rates and ratios at one `(sparsity, value bits)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub sparsity: f64,
    pub value_bits: u32,
    /// Entropy of the geometric run-length process, bits per parameter.
    pub h_geo: f64,
    /// Run-length entropy plus the `log2 m` value bound, bits per parameter.
    pub h_comp: f64,
    /// 16 / h_comp.
    pub compression_ratio: f64,
    /// Bits per parameter when only kept values are stored: `(1-s) * b`.
    pub index_free_bits: f64,
    /// 16 / ((1-s) * b).
    pub index_free_ratio: f64,
}

/// Evaluates the closed forms at `0 < s < 1` with an alphabet of `2^bits`.
pub fn entropy_ratio(sparsity: f64, bits: u32) -> Result<RatioEntry, CodecError> {
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(CodecError::SparsityOutOfRange(sparsity));
    }
    if !(1..=32).contains(&bits) {
        return Err(CodecError::InvalidBitWidth(bits));
    }
    let s = sparsity;
    let density = 1.0 - s;
    let h_geo = -(density * density.log2() + s * s.log2());
    let h_comp = h_geo + density * bits as f64;
    let index_free_bits = density * bits as f64;
    Ok(RatioEntry {
        sparsity,
        value_bits: bits,
        h_geo,
        h_comp,
        compression_ratio: 16.0 / h_comp,
        index_free_bits,
        index_free_ratio: 16.0 / index_free_bits,
    })
}
