//! A tiny trainable classifier for end-to-end retention experiments.
//!
//! The model is a product of three weight matrices trained with full-batch
//! gradient descent on softmax cross-entropy: a "pretrained" phase on the
//! source labeling, then continued training on a shifted target task to
//! produce the "fine-tuned" weights. Everything is a deterministic function
//! of the task description, so retention tables reproduce byte-for-byte.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::container::{Dtype, NamedTensorSet, TensorEntry};
use crate::pipeline::{compress_models, reconstruct, stats, PipelineConfig, TaskInput};
use crate::rng::derive_str;

use super::HarnessError;

pub const BACKBONE_0: &str = "backbone.0.weight";
pub const BACKBONE_1: &str = "backbone.1.weight";
pub const HEAD: &str = "head.weight";

/// Description of the synthetic classification task pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub input_dim: usize,
    pub classes: usize,
    pub train_n: usize,
    pub test_n: usize,
    /// Norm of the class means; larger separates the clusters further.
    pub separation: f64,
    /// How far the target task's class means move from the source's.
    pub target_shift: f64,
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self {
            input_dim: 32,
            classes: 4,
            train_n: 512,
            test_n: 512,
            separation: 4.0,
            target_shift: 2.0,
            pretrain_steps: 250,
            finetune_steps: 250,
            learning_rate: 0.5,
            seed: 7,
        }
    }
}

impl ToyTask {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.input_dim == 0 || self.classes < 2 || self.train_n == 0 || self.test_n == 0 {
            return Err(HarnessError::InvalidTask(
                "dimensions, class count and sample counts must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(HarnessError::InvalidTask("learning rate must be positive".into()));
        }
        Ok(())
    }
}

struct Dataset {
    x: Vec<f64>, // n x d, row-major
    y: Vec<usize>,
    n: usize,
    d: usize,
}

fn class_means(task: &ToyTask, shifted: bool) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_str(task.seed, "class-means"));
    let mut means: Vec<Vec<f64>> = (0..task.classes)
        .map(|_| {
            let v: Vec<f64> = (0..task.input_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-9);
            v.into_iter().map(|a| a / norm * task.separation).collect()
        })
        .collect();
    if shifted {
        let mut shift_rng = ChaCha8Rng::seed_from_u64(derive_str(task.seed, "target-shift"));
        for mean in &mut means {
            let v: Vec<f64> = (0..task.input_dim)
                .map(|_| StandardNormal.sample(&mut shift_rng))
                .collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-9);
            for (m, s) in mean.iter_mut().zip(&v) {
                *m += s / norm * task.target_shift;
            }
        }
    }
    means
}

fn sample_dataset(task: &ToyTask, means: &[Vec<f64>], n: usize, tag: &str) -> Dataset {
    let d = task.input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_str(task.seed, tag));
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % task.classes;
        y.push(label);
        for &m in &means[label] {
            x.push(m + noise.sample(&mut rng));
        }
    }
    Dataset { x, y, n, d }
}

/// Weights in training precision: three row-major matrices.
#[derive(Debug, Clone)]
struct ToyWeights {
    w1: Vec<f64>, // d x d
    w2: Vec<f64>, // d x d
    w3: Vec<f64>, // k x d
    d: usize,
    k: usize,
}

impl ToyWeights {
    fn init(task: &ToyTask) -> Self {
        let d = task.input_dim;
        let k = task.classes;
        let mut w1 = vec![0.0; d * d];
        let mut w2 = vec![0.0; d * d];
        for i in 0..d {
            w1[i * d + i] = 1.0;
            w2[i * d + i] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_str(task.seed, "head-init"));
        let w3 = (0..k * d)
            .map(|_| 0.01 * <f64 as From<f32>>::from(StandardNormal.sample(&mut rng)))
            .collect();
        Self { w1, w2, w3, d, k }
    }

    fn to_set(&self) -> NamedTensorSet {
        let d = self.d as u64;
        let k = self.k as u64;
        let entry = |name: &str, shape: Vec<u64>, data: &[f64]| {
            TensorEntry::new(
                name,
                shape,
                Dtype::F32,
                data.iter().map(|&v| v as f32).collect(),
            )
            .expect("toy shapes are consistent")
        };
        NamedTensorSet::from_entries(vec![
            entry(BACKBONE_0, vec![d, d], &self.w1),
            entry(BACKBONE_1, vec![d, d], &self.w2),
            entry(HEAD, vec![k, d], &self.w3),
        ])
        .expect("unique names")
    }

    fn from_set(set: &NamedTensorSet, task: &ToyTask) -> Result<Self, HarnessError> {
        let d = task.input_dim;
        let k = task.classes;
        let get = |name: &str, len: usize| -> Result<Vec<f64>, HarnessError> {
            let e = set.get(name).ok_or_else(|| {
                HarnessError::InvalidTask(format!("model is missing layer '{name}'"))
            })?;
            if e.len() != len {
                return Err(HarnessError::InvalidTask(format!(
                    "layer '{name}' has {} elements, expected {len}",
                    e.len()
                )));
            }
            Ok(e.data.iter().map(|&v| v as f64).collect())
        };
        Ok(Self {
            w1: get(BACKBONE_0, d * d)?,
            w2: get(BACKBONE_1, d * d)?,
            w3: get(HEAD, k * d)?,
            d,
            k,
        })
    }
}

// out[n x r] = x[n x c] * w[r x c]^T
fn matmul_nt(x: &[f64], w: &[f64], n: usize, c: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * r];
    for i in 0..n {
        for j in 0..r {
            let mut acc = 0.0;
            for l in 0..c {
                acc += x[i * c + l] * w[j * c + l];
            }
            out[i * r + j] = acc;
        }
    }
    out
}

// grad[r x c] = g[n x r]^T * x[n x c]
fn grad_weights(g: &[f64], x: &[f64], n: usize, r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..n {
        for j in 0..r {
            let gij = g[i * r + j];
            for l in 0..c {
                out[j * c + l] += gij * x[i * c + l];
            }
        }
    }
    out
}

// out[n x c] = g[n x r] * w[r x c]
fn matmul_nn(g: &[f64], w: &[f64], n: usize, r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        for j in 0..r {
            let gij = g[i * r + j];
            for l in 0..c {
                out[i * c + l] += gij * w[j * c + l];
            }
        }
    }
    out
}

fn logits(weights: &ToyWeights, x: &[f64], n: usize) -> Vec<f64> {
    let h1 = matmul_nt(x, &weights.w1, n, weights.d, weights.d);
    let h2 = matmul_nt(&h1, &weights.w2, n, weights.d, weights.d);
    matmul_nt(&h2, &weights.w3, n, weights.d, weights.k)
}

fn train(
    weights: &mut ToyWeights,
    data: &Dataset,
    steps: usize,
    lr: f64,
) -> Result<(), HarnessError> {
    let (n, d, k) = (data.n, data.d, weights.k);
    for step in 0..steps {
        let h1 = matmul_nt(&data.x, &weights.w1, n, d, d);
        let h2 = matmul_nt(&h1, &weights.w2, n, d, d);
        let z = matmul_nt(&h2, &weights.w3, n, d, k);

        // softmax cross-entropy and its gradient
        let mut gz = vec![0.0; n * k];
        let mut loss = 0.0;
        for i in 0..n {
            let row = &z[i * k..(i + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
            let sum: f64 = exps.iter().sum();
            loss -= (exps[data.y[i]] / sum).ln();
            for j in 0..k {
                let p = exps[j] / sum;
                gz[i * k + j] = (p - if j == data.y[i] { 1.0 } else { 0.0 }) / n as f64;
            }
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(HarnessError::Divergence { step, loss });
        }

        let gw3 = grad_weights(&gz, &h2, n, k, d);
        let gh2 = matmul_nn(&gz, &weights.w3, n, k, d);
        let gw2 = grad_weights(&gh2, &h1, n, d, d);
        let gh1 = matmul_nn(&gh2, &weights.w2, n, d, d);
        let gw1 = grad_weights(&gh1, &data.x, n, d, d);

        for (w, g) in weights.w3.iter_mut().zip(&gw3) {
            *w -= lr * g;
        }
        for (w, g) in weights.w2.iter_mut().zip(&gw2) {
            *w -= lr * g;
        }
        for (w, g) in weights.w1.iter_mut().zip(&gw1) {
            *w -= lr * g;
        }
    }
    Ok(())
}

/// Trains the source-task model, then continues on the shifted target task.
/// Returns `(pretrained, finetuned)` as stored tensor sets; fine-tuning
/// resumes from the stored (f32) pretrained weights, so zero fine-tune steps
/// give an exactly zero delta.
pub fn train_toy_model(task: &ToyTask) -> Result<(NamedTensorSet, NamedTensorSet), HarnessError> {
    task.validate()?;
    let source_means = class_means(task, false);
    let target_means = class_means(task, true);
    let source_train = sample_dataset(task, &source_means, task.train_n, "source-train");
    let target_train = sample_dataset(task, &target_means, task.train_n, "target-train");

    let mut weights = ToyWeights::init(task);
    train(&mut weights, &source_train, task.pretrain_steps, task.learning_rate)?;
    let pretrained = weights.to_set();

    let mut finetune_weights = ToyWeights::from_set(&pretrained, task)?;
    train(
        &mut finetune_weights,
        &target_train,
        task.finetune_steps,
        task.learning_rate,
    )?;
    let finetuned = finetune_weights.to_set();
    Ok((pretrained, finetuned))
}

/// Accuracy of a stored model on the target task's held-out test set.
pub fn evaluate_accuracy(set: &NamedTensorSet, task: &ToyTask) -> Result<f64, HarnessError> {
    let weights = ToyWeights::from_set(set, task)?;
    let target_means = class_means(task, true);
    let test = sample_dataset(task, &target_means, task.test_n, "target-test");
    let z = logits(&weights, &test.x, test.n);
    let mut correct = 0usize;
    for i in 0..test.n {
        let row = &z[i * weights.k..(i + 1) * weights.k];
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
            .unwrap();
        if pred == test.y[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.n as f64)
}

/// One grid point of the retention experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionPoint {
    pub sparsity: f64,
    /// None selects the non-quantized variant with `intervals` groups.
    pub bits: Option<u32>,
    pub intervals: u32,
    /// None uses the pipeline's own gamma assignment.
    pub gamma: Option<f64>,
    /// Plain single-group pruning baseline (no variance groups, gamma 1).
    pub single_group: bool,
}

impl RetentionPoint {
    pub fn standard(sparsity: f64, bits: u32) -> Self {
        Self {
            sparsity,
            bits: Some(bits),
            intervals: 16,
            gamma: None,
            single_group: false,
        }
    }

    pub fn baseline(sparsity: f64, bits: u32) -> Self {
        Self {
            sparsity,
            bits: Some(bits),
            intervals: 1,
            gamma: Some(1.0),
            single_group: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub sparsity: f64,
    pub bits: Option<u32>,
    pub single_group: bool,
    pub accuracy_original: f64,
    pub accuracy_compressed: f64,
    /// original minus compressed, in accuracy points.
    pub retention_gap: f64,
    pub realized_compression_ratio: f64,
}

fn config_for_point(point: &RetentionPoint, task: &ToyTask) -> PipelineConfig {
    let feasible_step = !point.single_group && point.sparsity >= 0.05 && point.sparsity <= 0.95;
    PipelineConfig {
        s_mid: point.sparsity,
        s_step: if feasible_step { 0.02 } else { 0.0 },
        bit_width: point.bits.unwrap_or(4),
        use_quantization: point.bits.is_some(),
        intervals: point.intervals,
        gamma_override: point.gamma,
        single_group_prune: point.single_group,
        master_seed: task.seed,
        ..PipelineConfig::default()
    }
}

/// Trains the toy pair once, then compresses the delta at every grid point
/// through the full pipeline and evaluates both models on the held-out
/// target test set.
pub fn accuracy_retention_test(
    task: &ToyTask,
    grid: &[RetentionPoint],
) -> Result<Vec<RetentionRow>, HarnessError> {
    let (pretrained, finetuned) = train_toy_model(task)?;
    let accuracy_original = evaluate_accuracy(&finetuned, task)?;

    let mut rows = Vec::with_capacity(grid.len());
    for point in grid {
        let config = config_for_point(point, task);
        let archives = compress_models(
            &pretrained,
            &[TaskInput {
                name: "toy".into(),
                model: finetuned.clone(),
            }],
            &config,
        )?;
        let archive = &archives[0];
        let rebuilt = reconstruct(&pretrained, archive, false)?;
        let accuracy_compressed = evaluate_accuracy(&rebuilt, task)?;
        let report = stats(archive)?;
        rows.push(RetentionRow {
            sparsity: point.sparsity,
            bits: point.bits,
            single_group: point.single_group,
            accuracy_original,
            accuracy_compressed,
            retention_gap: accuracy_original - accuracy_compressed,
            realized_compression_ratio: report.realized_ratio,
        });
    }
    Ok(rows)
}
