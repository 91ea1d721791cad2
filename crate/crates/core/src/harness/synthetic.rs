//! Deterministic Gaussian delta generators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::container::{DeltaSet, Dtype, NamedTensorSet, TensorEntry};
use crate::rng::derive_str;

use super::HarnessError;

/// One synthetic layer: Gaussian(mean, sigma) entries of the given shape.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Vec<u64>,
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticDeltaSpec {
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticDelta {
    pub delta: DeltaSet,
    /// Empirical per-layer variance of the generated values.
    pub empirical_variance: Vec<(String, f64)>,
}

/// Generates Gaussian layers; each layer draws from its own substream keyed
/// by (seed, layer name), so the output does not depend on layer order.
pub fn gen_synthetic_delta(spec: &SyntheticDeltaSpec) -> Result<SyntheticDelta, HarnessError> {
    let mut set = NamedTensorSet::new();
    let mut variances = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        if layer.sigma < 0.0 || !layer.sigma.is_finite() {
            return Err(HarnessError::NegativeSigma(layer.sigma));
        }
        let count: u64 = layer.shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_str(spec.seed, &layer.name));
        let data: Vec<f32> = if layer.sigma == 0.0 {
            vec![layer.mean as f32; count as usize]
        } else {
            let normal = Normal::new(layer.mean, layer.sigma).expect("sigma checked");
            (0..count).map(|_| normal.sample(&mut rng) as f32).collect()
        };
        let variance = crate::sparsity::layer_variance(&data).map_err(|_| {
            HarnessError::InvalidTask(format!("layer '{}' is empty", layer.name))
        })?;
        variances.push((layer.name.clone(), variance));
        set.push(TensorEntry::new(
            layer.name.clone(),
            layer.shape.clone(),
            Dtype::F32,
            data,
        )?)?;
    }
    Ok(SyntheticDelta {
        delta: DeltaSet {
            set,
            base_fingerprint: 0,
            pass_through: Vec::new(),
        },
        empirical_variance: variances,
    })
}
