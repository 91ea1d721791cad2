//! End-to-end compression pipeline.
//!
//! `compress_models` runs extract -> sparsity allocation -> quantize ->
//! group-prune -> gamma assignment -> encode for every task of an
//! invocation; `reconstruct` applies `gamma/(1 - s)` times the decoded
//! sparse delta onto the base. Layers are processed in parallel but every
//! random decision is keyed by (master seed, task, layer, group), so
//! archives are byte-identical regardless of thread count.

mod config;
mod manifest;

pub use config::PipelineConfig;
pub use manifest::{CompressedDelta, LayerRecord, Manifest, TaskRecord};

use std::collections::HashMap;

use half::f16;
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{
    bcsr_encode, csr_encode, decode_payload, entropy_ratio, golomb_encode, index_free_payload,
    measure_payload, payload_bits, payload_to_bytes, CodecError, RatioEntry, Scheme,
    SparseLayerPayload,
};
use crate::container::{
    extract_delta, fingerprint64, ContainerError, DeltaSet, NamedTensorSet, TensorEntry,
};
use crate::harness::distribution_preservation_stat;
use crate::prune::{
    group_prune, interval_group_prune_positions, interval_index, Grouping, PruneError,
};
use crate::quant::{quantize_uniform, QuantError, QuantGrid};
use crate::rescale::{assign_gamma, trace_norm, RescaleError, TraceNormMethod, TraceNormSummary};
use crate::rng::derive_str;
use crate::sparsity::{
    assign_sparsity, layer_variance, partition_by_variance, AllocError, CompressionPlan,
    LayerStat,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("archive malformed: {0}")]
    Archive(String),
    #[error("task '{task}': {source}")]
    Container {
        task: String,
        source: ContainerError,
    },
    #[error("task '{task}': {source}")]
    Alloc { task: String, source: AllocError },
    #[error("task '{task}': {source}")]
    Rescale { task: String, source: RescaleError },
    #[error("task '{task}', layer '{layer}': {source}")]
    LayerQuant {
        task: String,
        layer: String,
        source: QuantError,
    },
    #[error("task '{task}', layer '{layer}': {source}")]
    LayerPrune {
        task: String,
        layer: String,
        source: PruneError,
    },
    #[error("task '{task}', layer '{layer}': {source}")]
    LayerCodec {
        task: String,
        layer: String,
        source: CodecError,
    },
    #[error(transparent)]
    ContainerFile(#[from] ContainerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One fine-tuned model to compress.
#[derive(Debug, Clone)]
pub struct TaskInput {
    pub name: String,
    pub model: NamedTensorSet,
}

/// Matrix dimensions used by the positional codecs: real dims for rank-2
/// layers, `1 x n` otherwise.
fn codec_dims(entry_shape: &[u64], n: u64) -> Result<(u32, u32), CodecError> {
    let (rows, cols) = if entry_shape.len() == 2 {
        (entry_shape[0], entry_shape[1])
    } else {
        (1, n)
    };
    let rows = u32::try_from(rows)
        .map_err(|_| CodecError::Malformed(format!("{rows} rows exceed the codec dimension limit")))?;
    let cols = u32::try_from(cols)
        .map_err(|_| CodecError::Malformed(format!("{cols} columns exceed the codec dimension limit")))?;
    Ok((rows, cols))
}

fn encode_by_scheme(
    scheme: Scheme,
    positions: &[u64],
    codes: &[u32],
    rows: u32,
    cols: u32,
    bits: u32,
    block: (u16, u16),
) -> Result<SparseLayerPayload, CodecError> {
    match scheme {
        Scheme::Golomb => golomb_encode(positions, codes, rows as u64 * cols as u64, bits),
        Scheme::Csr => csr_encode(positions, codes, rows, cols, bits),
        Scheme::Bcsr => bcsr_encode(positions, codes, rows, cols, block.0, block.1, bits),
        Scheme::IndexFree => index_free_payload(rows as u64 * cols as u64, positions.len() as u64, bits),
    }
}

struct EncodedLayer {
    record: LayerRecord,
    payload: SparseLayerPayload,
}

fn compress_layer(
    task: &str,
    entry: &TensorEntry,
    plan: &crate::sparsity::PlanLayer,
    task_seed: u64,
    config: &PipelineConfig,
) -> Result<EncodedLayer, PipelineError> {
    let plan_sparsity = plan.sparsity;
    let layer_seed = derive_str(task_seed, &entry.name);
    let n = entry.len() as u64;
    let (rows, cols) = codec_dims(&entry.shape, n).map_err(|e| PipelineError::LayerCodec {
        task: task.into(),
        layer: entry.name.clone(),
        source: e,
    })?;
    let grouping = if config.single_group_prune {
        Grouping::Single
    } else {
        Grouping::PerValue
    };

    let (grid_min, grid_max, positions, codes, bits) = if config.use_quantization {
        let (grid, dense_codes) =
            quantize_uniform(&entry.data, config.bit_width).map_err(|e| {
                PipelineError::LayerQuant {
                    task: task.into(),
                    layer: entry.name.clone(),
                    source: e,
                }
            })?;
        let pruned = group_prune(grid, &dense_codes, plan_sparsity, layer_seed, grouping)
            .map_err(|e| PipelineError::LayerPrune {
                task: task.into(),
                layer: entry.name.clone(),
                source: e,
            })?;
        let codes: Vec<u32> = pruned.codes.iter().map(|&c| c as u32).collect();
        (grid.min, grid.max, pruned.positions, codes, config.bit_width)
    } else {
        let intervals = if config.single_group_prune {
            1
        } else {
            config.intervals
        };
        let positions =
            interval_group_prune_positions(&entry.data, intervals, plan_sparsity, layer_seed)
                .map_err(|e| PipelineError::LayerPrune {
                    task: task.into(),
                    layer: entry.name.clone(),
                    source: e,
                })?;
        let codes: Vec<u32> = positions
            .iter()
            .map(|&p| entry.data[p as usize].to_bits())
            .collect();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &entry.data {
            min = min.min(v as f64);
            max = max.max(v as f64);
        }
        (min, max, positions, codes, 32)
    };

    let payload = encode_by_scheme(
        config.scheme,
        &positions,
        &codes,
        rows,
        cols,
        bits,
        (config.block_rows, config.block_cols),
    )
    .map_err(|e| PipelineError::LayerCodec {
        task: task.into(),
        layer: entry.name.clone(),
        source: e,
    })?;

    Ok(EncodedLayer {
        record: LayerRecord {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            count: n,
            variance: plan.variance,
            group: plan.group,
            sparsity: plan_sparsity,
            seed: layer_seed,
            n_kept: positions.len() as u64,
            grid_min,
            grid_max,
            scheme: config.scheme,
            payload_offset: 0, // assigned when the archive is assembled
            payload_len: 0,
        },
        payload,
    })
}

fn plan_for_delta(
    task: &str,
    delta: &DeltaSet,
    config: &PipelineConfig,
) -> Result<(CompressionPlan, bool), PipelineError> {
    let mut stats = Vec::with_capacity(delta.set.len());
    for e in delta.set.entries() {
        let variance = layer_variance(&e.data).map_err(|source| PipelineError::Alloc {
            task: task.into(),
            source,
        })?;
        stats.push(LayerStat {
            name: e.name.clone(),
            count: e.len() as u64,
            variance,
        });
    }
    let assignment = partition_by_variance(stats);
    let plan = assign_sparsity(&assignment, config.s_mid, config.s_step)
        .map_err(|source| PipelineError::Alloc {
            task: task.into(),
            source,
        })?
        .with_bit_width(config.bit_width)
        .with_seed(config.master_seed);
    Ok((plan, assignment.degenerate))
}

fn trace_norm_summary(
    task: &str,
    delta: &DeltaSet,
    config: &PipelineConfig,
) -> Result<TraceNormSummary, PipelineError> {
    let task_seed = derive_str(config.master_seed, task);
    let mut per_layer = Vec::new();
    let mut total = 0.0;
    let mut method_used = TraceNormMethod::ExactSvd;
    for e in delta.set.entries() {
        if !e.is_matrix() {
            continue;
        }
        let rows = e.shape[0] as usize;
        let cols = e.shape[1] as usize;
        // exact on small matrices, sketch once the spectrum can't fit it
        let method = if rows.min(cols) <= 72 {
            TraceNormMethod::ExactSvd
        } else {
            let m = TraceNormMethod::randomized(derive_str(task_seed, &e.name));
            method_used = m;
            m
        };
        let norm = trace_norm(&e.data, rows, cols, method).map_err(|source| {
            PipelineError::Rescale {
                task: task.into(),
                source,
            }
        })?;
        per_layer.push((e.name.clone(), norm));
        total += norm;
    }
    Ok(TraceNormSummary {
        task: task.into(),
        per_layer,
        model_trace_norm: total,
        method: method_used,
    })
}

/// Compresses every task against the shared base. Gamma is assigned across
/// all tasks of this one invocation.
pub fn compress_models(
    base: &NamedTensorSet,
    tasks: &[TaskInput],
    config: &PipelineConfig,
) -> Result<Vec<CompressedDelta>, PipelineError> {
    config.validate()?;
    if tasks.is_empty() {
        return Err(PipelineError::Config("no tasks to compress".into()));
    }
    let selector = config.selector();

    let mut deltas = Vec::with_capacity(tasks.len());
    for t in tasks {
        let delta = extract_delta(&t.model, base, &selector).map_err(|source| {
            PipelineError::Container {
                task: t.name.clone(),
                source,
            }
        })?;
        if delta.set.is_empty() {
            return Err(PipelineError::Config(format!(
                "task '{}': selector matches no layers",
                t.name
            )));
        }
        deltas.push(delta);
    }

    let mut plans = Vec::with_capacity(tasks.len());
    let mut warnings: Vec<Vec<String>> = Vec::with_capacity(tasks.len());
    let mut summaries = Vec::with_capacity(tasks.len());
    for (t, delta) in tasks.iter().zip(&deltas) {
        let (plan, degenerate) = plan_for_delta(&t.name, delta, config)?;
        plans.push(plan);
        warnings.push(if degenerate {
            vec![format!(
                "fewer than three compressible layers ({}); variance grouping fell back to a single mid group",
                delta.set.len()
            )]
        } else {
            Vec::new()
        });
        summaries.push(trace_norm_summary(&t.name, delta, config)?);
    }

    let gammas = assign_gamma(&summaries, &config.rescale_policy()).map_err(|source| {
        PipelineError::Rescale {
            task: tasks[0].name.clone(),
            source,
        }
    })?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.thread_count)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;

    let mut archives = Vec::with_capacity(tasks.len());
    for ((((t, delta), plan), task_warnings), (gamma, summary)) in tasks
        .iter()
        .zip(&deltas)
        .zip(&plans)
        .zip(&warnings)
        .zip(gammas.iter().zip(summaries.iter()))
    {
        let task_seed = derive_str(config.master_seed, &t.name);
        let encoded: Vec<Result<EncodedLayer, PipelineError>> = pool.install(|| {
            delta
                .set
                .entries()
                .par_iter()
                .map(|e| {
                    let pl = plan
                        .layer(&e.name)
                        .expect("every delta layer has a plan record");
                    compress_layer(&t.name, e, pl, task_seed, config)
                })
                .collect()
        });

        let mut layers = Vec::with_capacity(encoded.len());
        let mut payloads = Vec::with_capacity(encoded.len());
        let mut offset = 0u64;
        for enc in encoded {
            let mut enc = enc?;
            let len = payload_to_bytes(&enc.payload).len() as u64;
            enc.record.payload_offset = offset;
            enc.record.payload_len = len;
            offset += len;
            layers.push(enc.record);
            payloads.push(enc.payload);
        }

        // gamma is stored (and applied) at half precision
        let gamma_stored = f16::from_f64(*gamma).to_f64();
        let manifest = Manifest {
            format_version: manifest::MANIFEST_VERSION,
            base_fingerprint: delta.base_fingerprint,
            task: TaskRecord {
                name: t.name.clone(),
                gamma: gamma_stored,
                overall_sparsity: plan.weighted_mean_sparsity(),
                s_mid: config.s_mid,
                s_step: config.s_step,
                bit_width: config.bit_width,
                use_quantization: config.use_quantization,
                intervals: config.intervals,
                master_seed: config.master_seed,
                per_layer_density: config.per_layer_density,
                select: if config.select.is_empty() {
                    None
                } else {
                    Some(config.select.clone())
                },
                trace_norms: summary.clone(),
            },
            layers,
            pass_through: delta.pass_through.clone(),
            warnings: task_warnings.clone(),
        };
        manifest.validate()?;
        archives.push(CompressedDelta { manifest, payloads });
    }
    Ok(archives)
}

fn grid_from_record(record: &LayerRecord, bit_width: u32) -> QuantGrid {
    let levels = (1u32 << bit_width) - 1;
    QuantGrid {
        min: record.grid_min,
        max: record.grid_max,
        step: (record.grid_max - record.grid_min) / levels as f64,
        bit_width,
    }
}

/// Decoded kept values (f64) of one layer.
fn decode_layer_values(
    archive: &CompressedDelta,
    index: usize,
) -> Result<(Vec<u64>, Vec<f64>), PipelineError> {
    let record = &archive.manifest.layers[index];
    let task = &archive.manifest.task;
    let (positions, codes) =
        decode_payload(&archive.payloads[index]).map_err(|source| PipelineError::LayerCodec {
            task: task.name.clone(),
            layer: record.name.clone(),
            source,
        })?;
    let values = if task.use_quantization {
        let grid = grid_from_record(record, task.bit_width);
        codes.iter().map(|&c| grid.dequant(c as u16)).collect()
    } else {
        codes
            .iter()
            .map(|&c| f32::from_bits(c) as f64)
            .collect()
    };
    Ok((positions, values))
}

/// Rebuilds the fine-tuned weights: `base + gamma/(1 - s) * decoded delta`,
/// pass-through layers copied verbatim from the base.
pub fn reconstruct(
    pretrained: &NamedTensorSet,
    archive: &CompressedDelta,
    override_fingerprint: bool,
) -> Result<NamedTensorSet, PipelineError> {
    let manifest = &archive.manifest;
    let actual = fingerprint64(pretrained);
    if !override_fingerprint && actual != manifest.base_fingerprint {
        return Err(PipelineError::Container {
            task: manifest.task.name.clone(),
            source: ContainerError::FingerprintMismatch {
                expected: manifest.base_fingerprint,
                actual,
            },
        });
    }

    let task = &manifest.task;
    let overall_factor = task.gamma / (1.0 - task.overall_sparsity);
    let mut layers = HashMap::new();
    for (i, record) in manifest.layers.iter().enumerate() {
        let pre = pretrained
            .get(&record.name)
            .ok_or_else(|| PipelineError::Container {
                task: task.name.clone(),
                source: ContainerError::MissingLayer {
                    name: record.name.clone(),
                    side: "pretrained",
                },
            })?;
        if pre.len() as u64 != record.count {
            return Err(PipelineError::Container {
                task: task.name.clone(),
                source: ContainerError::ShapeMismatch {
                    name: record.name.clone(),
                },
            });
        }
        let factor = if task.per_layer_density {
            task.gamma / (1.0 - record.sparsity)
        } else {
            overall_factor
        };
        let (positions, values) = decode_layer_values(archive, i)?;
        layers.insert(record.name.clone(), (factor, positions, values));
    }
    crate::container::apply_sparse_delta(pretrained, &layers).map_err(|source| {
        PipelineError::Container {
            task: task.name.clone(),
            source,
        }
    })
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

/// Bits per parameter and ratio of one storage scheme over the whole archive.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SchemeMeasure {
    pub scheme: Scheme,
    pub bits_per_parameter: f64,
    pub compression_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerReportRow {
    pub name: String,
    pub count: u64,
    pub variance: f64,
    pub group: crate::sparsity::VarianceGroup,
    pub sparsity: f64,
    pub realized_density: f64,
    pub bits_per_parameter: f64,
}

/// Realized and theoretical rates for one archive.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RatioReport {
    pub task: String,
    pub gamma: f64,
    pub overall_sparsity: f64,
    pub value_bits: u32,
    pub total_params: u64,
    /// Entropy closed forms at (overall sparsity, value bits); absent when
    /// the archive is stored dense (s = 0).
    pub theoretical: Option<RatioEntry>,
    pub realized_bits_per_parameter: f64,
    pub realized_ratio: f64,
    /// The same kept symbols re-encoded under every scheme.
    pub schemes: Vec<SchemeMeasure>,
    pub layers: Vec<LayerReportRow>,
}

/// Measures the archive and re-encodes its symbols under all four schemes
/// (bcsr measured at the standard 4x4 block shape).
pub fn stats(archive: &CompressedDelta) -> Result<RatioReport, PipelineError> {
    let manifest = &archive.manifest;
    let task = &manifest.task;
    let value_bits = if task.use_quantization {
        task.bit_width
    } else {
        32
    };
    let total_params: u64 = manifest.layers.iter().map(|l| l.count).sum();

    let mut layer_rows = Vec::with_capacity(manifest.layers.len());
    let mut realized_bits = 0u64;
    let mut scheme_bits: Vec<(Scheme, u64)> = vec![
        (Scheme::Golomb, 0),
        (Scheme::Csr, 0),
        (Scheme::Bcsr, 0),
        (Scheme::IndexFree, 0),
    ];

    for (record, payload) in manifest.layers.iter().zip(&archive.payloads) {
        realized_bits += payload_bits(payload);
        layer_rows.push(LayerReportRow {
            name: record.name.clone(),
            count: record.count,
            variance: record.variance,
            group: record.group,
            sparsity: record.sparsity,
            realized_density: if record.count == 0 {
                0.0
            } else {
                record.n_kept as f64 / record.count as f64
            },
            bits_per_parameter: measure_payload(payload),
        });

        let (positions, codes) =
            decode_payload(payload).map_err(|source| PipelineError::LayerCodec {
                task: task.name.clone(),
                layer: record.name.clone(),
                source,
            })?;
        let (rows, cols) =
            codec_dims(&record.shape, record.count).map_err(|source| PipelineError::LayerCodec {
                task: task.name.clone(),
                layer: record.name.clone(),
                source,
            })?;
        for (scheme, bits_acc) in scheme_bits.iter_mut() {
            let p = encode_by_scheme(*scheme, &positions, &codes, rows, cols, value_bits, (4, 4))
                .map_err(|source| PipelineError::LayerCodec {
                    task: task.name.clone(),
                    layer: record.name.clone(),
                    source,
                })?;
            *bits_acc += payload_bits(&p);
        }
    }

    let realized_bpp = if total_params == 0 {
        0.0
    } else {
        realized_bits as f64 / total_params as f64
    };
    let schemes = scheme_bits
        .into_iter()
        .map(|(scheme, bits)| {
            let bpp = if total_params == 0 {
                0.0
            } else {
                bits as f64 / total_params as f64
            };
            SchemeMeasure {
                scheme,
                bits_per_parameter: bpp,
                compression_ratio: if bpp > 0.0 { 16.0 / bpp } else { f64::INFINITY },
            }
        })
        .collect();

    Ok(RatioReport {
        task: task.name.clone(),
        gamma: task.gamma,
        overall_sparsity: task.overall_sparsity,
        value_bits,
        total_params,
        theoretical: entropy_ratio(task.overall_sparsity, value_bits).ok(),
        realized_bits_per_parameter: realized_bpp,
        realized_ratio: if realized_bpp > 0.0 {
            16.0 / realized_bpp
        } else {
            f64::INFINITY
        },
        schemes,
        layers: layer_rows,
    })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub layer: Option<String>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VerifyReport {
    pub task: String,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    fn push(&mut self, check: &str, layer: Option<&str>, passed: bool, detail: String) {
        self.passed &= passed;
        self.checks.push(CheckResult {
            check: check.to_string(),
            layer: layer.map(str::to_string),
            passed,
            detail,
        });
    }
}

/// Integrity and statistical checks of an archive against its base and the
/// original fine-tuned model: decode/re-encode byte identity, kept-density
/// binomial bands, the quantization error bound on kept positions, and the
/// per-layer distribution-preservation chi-square.
pub fn verify_archive(
    archive: &CompressedDelta,
    base: &NamedTensorSet,
    finetuned: &NamedTensorSet,
) -> Result<VerifyReport, PipelineError> {
    let manifest = &archive.manifest;
    let task = &manifest.task;
    let mut report = VerifyReport {
        task: task.name.clone(),
        checks: Vec::new(),
        passed: true,
    };

    let actual = fingerprint64(base);
    report.push(
        "base-fingerprint",
        None,
        actual == manifest.base_fingerprint,
        format!(
            "archive {:#018x}, base {:#018x}",
            manifest.base_fingerprint, actual
        ),
    );

    let selector = match &task.select {
        Some(patterns) => crate::container::LayerSelector::Patterns(patterns.clone()),
        None => crate::container::LayerSelector::Rank2,
    };
    let delta = extract_delta(finetuned, base, &selector).map_err(|source| {
        PipelineError::Container {
            task: task.name.clone(),
            source,
        }
    })?;

    for (record, payload) in manifest.layers.iter().zip(&archive.payloads) {
        let layer = Some(record.name.as_str());

        // decode and re-encode: the codecs are deterministic, so a healthy
        // payload reproduces itself bit for bit
        let decoded = decode_payload(payload);
        let (positions, codes) = match decoded {
            Ok(pc) => pc,
            Err(e) => {
                report.push("decode", layer, false, e.to_string());
                continue;
            }
        };
        let (rows, cols) =
            codec_dims(&record.shape, record.count).map_err(|source| PipelineError::LayerCodec {
                task: task.name.clone(),
                layer: record.name.clone(),
                source,
            })?;
        let reencoded = encode_by_scheme(
            record.scheme,
            &positions,
            &codes,
            rows,
            cols,
            payload.bit_width,
            match payload.params {
                crate::codec::SchemeParams::Bcsr {
                    block_rows,
                    block_cols,
                    ..
                } => (block_rows, block_cols),
                _ => (4, 4),
            },
        )
        .map_err(|source| PipelineError::LayerCodec {
            task: task.name.clone(),
            layer: record.name.clone(),
            source,
        })?;
        let round_trip_ok = payload_to_bytes(&reencoded) == payload_to_bytes(payload)
            && positions.len() as u64 == record.n_kept;
        report.push(
            "decode-round-trip",
            layer,
            round_trip_ok,
            format!("{} kept symbols", positions.len()),
        );

        // realized density within 4 sigma of Binomial(n, 1-s)
        let n = record.count as f64;
        let expect = n * (1.0 - record.sparsity);
        let sigma = (n * record.sparsity * (1.0 - record.sparsity)).sqrt();
        let dev = (record.n_kept as f64 - expect).abs();
        report.push(
            "kept-density",
            layer,
            dev <= 4.0 * sigma.max(f64::MIN_POSITIVE),
            format!("kept {} expected {expect:.1} (sigma {sigma:.1})", record.n_kept),
        );

        // compare kept values against the recomputed delta
        let Some(orig) = delta.set.get(&record.name) else {
            report.push(
                "delta-layer",
                layer,
                false,
                "layer missing from recomputed delta".into(),
            );
            continue;
        };
        if task.use_quantization {
            let grid = grid_from_record(record, task.bit_width);
            let half_step = grid.step / 2.0;
            // margin for f64 evaluation of the grid arithmetic
            let tol = half_step * (1.0 + 1e-9) + 1e-300;
            let mut worst = 0.0f64;
            for (&p, &c) in positions.iter().zip(&codes) {
                let err = (orig.data[p as usize] as f64 - grid.dequant(c as u16)).abs();
                worst = worst.max(err);
            }
            report.push(
                "quant-error-bound",
                layer,
                worst <= tol,
                format!("max |error| {worst:.3e} vs step/2 {half_step:.3e}"),
            );

            // distribution preservation: kept code histogram vs population;
            // an inconsistent population (foreign codes) is itself a failure
            let (_, original_codes) =
                quantize_uniform(&orig.data, task.bit_width).map_err(|source| {
                    PipelineError::LayerQuant {
                        task: task.name.clone(),
                        layer: record.name.clone(),
                        source,
                    }
                })?;
            let original: Vec<u32> = original_codes.iter().map(|&c| c as u32).collect();
            match distribution_preservation_stat(&original, &codes) {
                Ok(stat) => report.push(
                    "distribution-preservation",
                    layer,
                    stat.pass,
                    format!("chi2 {:.3} p {:.5}", stat.statistic, stat.p_value),
                ),
                Err(e) => report.push("distribution-preservation", layer, false, e.to_string()),
            }
        } else {
            let mut exact = true;
            for (&p, &c) in positions.iter().zip(&codes) {
                if orig.data[p as usize].to_bits() != c {
                    exact = false;
                    break;
                }
            }
            report.push(
                "kept-values-exact",
                layer,
                exact,
                "non-quantized kept values must match the delta bit-for-bit".into(),
            );

            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in &orig.data {
                min = min.min(v as f64);
                max = max.max(v as f64);
            }
            let original: Vec<u32> = orig
                .data
                .iter()
                .map(|&v| interval_index(v as f64, min, max, task.intervals))
                .collect();
            let kept: Vec<u32> = positions
                .iter()
                .map(|&p| original[p as usize])
                .collect();
            match distribution_preservation_stat(&original, &kept) {
                Ok(stat) => report.push(
                    "distribution-preservation",
                    layer,
                    stat.pass,
                    format!("chi2 {:.3} p {:.5}", stat.statistic, stat.p_value),
                ),
                Err(e) => report.push("distribution-preservation", layer, false, e.to_string()),
            }
        }
    }
    Ok(report)
}
