//! Pipeline configuration and its flat key/value text form.

use std::collections::BTreeMap;

use crate::codec::Scheme;
use crate::container::LayerSelector;
use crate::rescale::{GammaMapping, RescalePolicy};

use super::PipelineError;

/// Every knob of the compression pipeline. The text representation is
/// `key = value` lines; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Target overall sparsity (the mid group's nominal rate).
    pub s_mid: f64,
    /// Sparsity offset between variance groups.
    pub s_step: f64,
    /// Quantization bit width.
    pub bit_width: u32,
    /// False selects the non-quantized variant with interval grouping.
    pub use_quantization: bool,
    /// Interval count for the non-quantized variant.
    pub intervals: u32,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Fixed gamma for every task, overriding the trace-norm map.
    pub gamma_override: Option<f64>,
    /// Storage scheme for archives (golomb, csr or bcsr).
    pub scheme: Scheme,
    pub block_rows: u16,
    pub block_cols: u16,
    /// Empty means the rank-2 default selector.
    pub select: Vec<String>,
    pub master_seed: u64,
    /// 0 lets the runtime pick.
    pub thread_count: usize,
    /// Rescale by `gamma/(1 - s_l)` per layer instead of the single
    /// `gamma/(1 - s_t)` overall factor.
    pub per_layer_density: bool,
    /// Prune with a single substream instead of per-value groups (the
    /// plain-random-pruning baseline used in comparisons).
    pub single_group_prune: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            s_mid: 0.97,
            s_step: 0.02,
            bit_width: 4,
            use_quantization: true,
            intervals: 16,
            gamma_min: 0.5,
            gamma_max: 1.0,
            gamma_override: None,
            scheme: Scheme::Golomb,
            block_rows: 4,
            block_cols: 4,
            select: Vec::new(),
            master_seed: 0,
            thread_count: 0,
            per_layer_density: false,
            single_group_prune: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |msg: String| Err(PipelineError::Config(msg));
        if !(0.0..1.0).contains(&self.s_mid) {
            return err(format!("s_mid {} outside [0, 1)", self.s_mid));
        }
        if self.s_step < 0.0 || self.s_mid + self.s_step >= 1.0 || self.s_mid - self.s_step < 0.0 {
            return err(format!(
                "s_step {} infeasible for s_mid {}",
                self.s_step, self.s_mid
            ));
        }
        if !(2..=16).contains(&self.bit_width) {
            return err(format!("bit_width {} outside 2..=16", self.bit_width));
        }
        if self.intervals == 0 || self.intervals > 1 << 16 {
            return err(format!("intervals {} outside 1..=65536", self.intervals));
        }
        if self.scheme == Scheme::IndexFree {
            return err("index_free is accounting-only and cannot store archives".into());
        }
        if self.block_rows == 0 || self.block_cols == 0 {
            return err("block dimensions must be positive".into());
        }
        self.rescale_policy()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(g) = self.gamma_override {
            if !(g > 0.0 && g <= 1.0) {
                return err(format!("gamma override {g} outside (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn selector(&self) -> LayerSelector {
        if self.select.is_empty() {
            LayerSelector::Rank2
        } else {
            LayerSelector::Patterns(self.select.clone())
        }
    }

    pub fn rescale_policy(&self) -> RescalePolicy {
        RescalePolicy {
            gamma_min: self.gamma_min,
            gamma_max: self.gamma_max,
            mapping: match self.gamma_override {
                Some(gamma) => GammaMapping::Constant { gamma },
                None => GammaMapping::MinMaxLinear,
            },
        }
    }

    /// Serializes to `key = value` lines (keys sorted).
    pub fn to_text(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("s_mid", self.s_mid.to_string());
        kv.insert("s_step", self.s_step.to_string());
        kv.insert("bit_width", self.bit_width.to_string());
        kv.insert("use_quantization", self.use_quantization.to_string());
        kv.insert("intervals", self.intervals.to_string());
        kv.insert("gamma_min", self.gamma_min.to_string());
        kv.insert("gamma_max", self.gamma_max.to_string());
        if let Some(g) = self.gamma_override {
            kv.insert("gamma_override", g.to_string());
        }
        kv.insert("scheme", self.scheme.as_str().to_string());
        kv.insert("block_rows", self.block_rows.to_string());
        kv.insert("block_cols", self.block_cols.to_string());
        if !self.select.is_empty() {
            kv.insert("select", self.select.join(","));
        }
        kv.insert("master_seed", self.master_seed.to_string());
        kv.insert("thread_count", self.thread_count.to_string());
        kv.insert("per_layer_density", self.per_layer_density.to_string());
        kv.insert("single_group_prune", self.single_group_prune.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Parses the `key = value` form; blank lines and `#` comments allowed.
    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                PipelineError::Config(format!("line {}: bad {what} '{value}'", lineno + 1))
            };
            match key {
                "s_mid" => config.s_mid = value.parse().map_err(|_| bad("s_mid"))?,
                "s_step" => config.s_step = value.parse().map_err(|_| bad("s_step"))?,
                "bit_width" => config.bit_width = value.parse().map_err(|_| bad("bit_width"))?,
                "use_quantization" => {
                    config.use_quantization = value.parse().map_err(|_| bad("use_quantization"))?
                }
                "intervals" => config.intervals = value.parse().map_err(|_| bad("intervals"))?,
                "gamma_min" => config.gamma_min = value.parse().map_err(|_| bad("gamma_min"))?,
                "gamma_max" => config.gamma_max = value.parse().map_err(|_| bad("gamma_max"))?,
                "gamma_override" => {
                    config.gamma_override = Some(value.parse().map_err(|_| bad("gamma_override"))?)
                }
                "scheme" => config.scheme = value.parse().map_err(|_| bad("scheme"))?,
                "block_rows" => config.block_rows = value.parse().map_err(|_| bad("block_rows"))?,
                "block_cols" => config.block_cols = value.parse().map_err(|_| bad("block_cols"))?,
                "select" => {
                    config.select = value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                }
                "master_seed" => {
                    config.master_seed = value.parse().map_err(|_| bad("master_seed"))?
                }
                "thread_count" => {
                    config.thread_count = value.parse().map_err(|_| bad("thread_count"))?
                }
                "per_layer_density" => {
                    config.per_layer_density =
                        value.parse().map_err(|_| bad("per_layer_density"))?
                }
                "single_group_prune" => {
                    config.single_group_prune =
                        value.parse().map_err(|_| bad("single_group_prune"))?
                }
                other => {
                    return Err(PipelineError::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let config = PipelineConfig::default();
        config.validate().unwrap();
        assert_eq!(config.bit_width, 4);
        assert_eq!(config.s_step, 0.02);
        let text = config.to_text();
        assert_eq!(PipelineConfig::from_text(&text).unwrap(), config);
    }

    #[test]
    fn non_default_round_trip() {
        let config = PipelineConfig {
            s_mid: 0.9,
            s_step: 0.01,
            bit_width: 8,
            use_quantization: false,
            intervals: 256,
            gamma_override: Some(0.8),
            scheme: Scheme::Csr,
            select: vec!["enc.*".into(), "dec.*.weight".into()],
            master_seed: 42,
            thread_count: 2,
            per_layer_density: true,
            ..PipelineConfig::default()
        };
        config.validate().unwrap();
        let parsed = PipelineConfig::from_text(&config.to_text()).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let parsed = PipelineConfig::from_text("# comment\n\ns_mid = 0.9\n").unwrap();
        assert_eq!(parsed.s_mid, 0.9);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(PipelineConfig::from_text("nonsense_key = 1").is_err());
        assert!(PipelineConfig::from_text("s_mid").is_err());
        assert!(PipelineConfig::from_text("s_mid = 1.5").is_err());
        assert!(PipelineConfig::from_text("bit_width = 1").is_err());
        assert!(PipelineConfig::from_text("scheme = index_free").is_err());
        assert!(PipelineConfig::from_text("gamma_override = 0").is_err());
        assert!(PipelineConfig::from_text("s_mid = 0.97\ns_step = 0.05").is_err());
    }
}
