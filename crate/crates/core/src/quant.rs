//! Uniform quantization of delta layers.
//!
//! The grid spans the layer's exact extrema with `2^b - 1` steps; codes are
//! produced by round-half-to-even so results do not depend on platform
//! rounding quirks. A constant layer degenerates to step 0 with every code 0,
//! and dequantization then returns the constant.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("bit width {0} out of supported range 2..=16")]
    InvalidBitWidth(u32),
    #[error("cannot quantize an empty layer")]
    EmptyLayer,
    #[error("layer contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// Uniform quantization grid for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub bit_width: u32,
}

impl QuantGrid {
    pub fn code_count(&self) -> u32 {
        1u32 << self.bit_width
    }

    pub fn max_code(&self) -> u16 {
        ((1u32 << self.bit_width) - 1) as u16
    }

    /// Inverse map: `min + code * step` (the constant `min` when degenerate).
    #[inline]
    pub fn dequant(&self, code: u16) -> f64 {
        if self.step == 0.0 {
            self.min
        } else {
            self.min + code as f64 * self.step
        }
    }
}

/// Quantizes a layer onto a `b`-bit uniform grid over its exact extrema.
pub fn quantize_uniform(data: &[f32], bit_width: u32) -> Result<(QuantGrid, Vec<u16>), QuantError> {
    if !(2..=16).contains(&bit_width) {
        return Err(QuantError::InvalidBitWidth(bit_width));
    }
    if data.is_empty() {
        return Err(QuantError::EmptyLayer);
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite(i));
    }

    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in data {
        let v = v as f64;
        min = min.min(v);
        max = max.max(v);
    }

    let levels = (1u32 << bit_width) - 1;
    let step = (max - min) / levels as f64;
    let grid = QuantGrid {
        min,
        max,
        step,
        bit_width,
    };

    let codes = if step == 0.0 {
        vec![0u16; data.len()]
    } else {
        data.iter()
            .map(|&v| {
                let q = ((v as f64 - min) / step).round_ties_even();
                q.clamp(0.0, levels as f64) as u16
            })
            .collect()
    };
    Ok((grid, codes))
}

/// Dequantizes a dense code tensor back to values.
pub fn dequantize_codes(grid: &QuantGrid, codes: &[u16]) -> Vec<f32> {
    codes.iter().map(|&c| grid.dequant(c) as f32).collect()
}
