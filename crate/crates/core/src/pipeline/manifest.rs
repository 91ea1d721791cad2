//! Archive manifest and on-disk archive layout.
//!
//! An archive holds one task:
//!
//! ```text
//! magic "UDCA" | u16 version=1 | u64 manifest length | manifest JSON
//! payload section (concatenated sparse-layer envelopes)
//! trailing u64 checksum (FNV-1a over everything before it)
//! ```
//!
//! The manifest is JSON so it doubles as the human-readable report of the
//! plan: per-layer variance group, sparsity, grid, seed, and payload extent.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{payload_from_bytes, payload_to_bytes, Scheme, SparseLayerPayload};
use crate::container::fnv1a64;
use crate::rescale::TraceNormSummary;
use crate::sparsity::VarianceGroup;

use super::PipelineError;

pub const ARCHIVE_MAGIC: [u8; 4] = *b"UDCA";
pub const ARCHIVE_VERSION: u16 = 1;
pub const MANIFEST_VERSION: u32 = 1;

/// Task-level record: the rescale factor and the knobs needed to decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub name: String,
    /// Stored at half precision; exactly what reconstruction applies.
    pub gamma: f64,
    /// Parameter-weighted overall sparsity `s_t`.
    pub overall_sparsity: f64,
    pub s_mid: f64,
    pub s_step: f64,
    pub bit_width: u32,
    pub use_quantization: bool,
    pub intervals: u32,
    pub master_seed: u64,
    pub per_layer_density: bool,
    /// None means the rank-2 default selector.
    pub select: Option<Vec<String>>,
    pub trace_norms: TraceNormSummary,
}

/// Per-layer record mirroring the compression plan plus payload location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub shape: Vec<u64>,
    pub count: u64,
    pub variance: f64,
    pub group: VarianceGroup,
    pub sparsity: f64,
    pub seed: u64,
    pub n_kept: u64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub scheme: Scheme,
    pub payload_offset: u64,
    pub payload_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub base_fingerprint: u64,
    pub task: TaskRecord,
    pub layers: Vec<LayerRecord>,
    pub pass_through: Vec<String>,
    /// Non-fatal conditions hit during compression (e.g. the all-mid
    /// variance-grouping fallback for models with fewer than three layers).
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Manifest {
    /// Checks that every layer appears once and payload extents are
    /// back-to-back and non-overlapping.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut names: Vec<&str> = self.layers.iter().map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(PipelineError::Archive(
                "manifest lists a layer twice".into(),
            ));
        }
        let mut cursor = 0u64;
        for l in &self.layers {
            if l.payload_offset != cursor {
                return Err(PipelineError::Archive(format!(
                    "layer '{}' payload offset {} overlaps or leaves a gap (expected {})",
                    l.name, l.payload_offset, cursor
                )));
            }
            cursor += l.payload_len;
        }
        Ok(())
    }
}

/// A full compressed task: manifest plus one payload per compressed layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedDelta {
    pub manifest: Manifest,
    pub payloads: Vec<SparseLayerPayload>,
}

impl CompressedDelta {
    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest_json =
            serde_json::to_vec(&self.manifest).expect("manifest serialization cannot fail");
        let mut out = Vec::new();
        out.extend_from_slice(&ARCHIVE_MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest_json);
        for p in &self.payloads {
            out.extend_from_slice(&payload_to_bytes(p));
        }
        let checksum = fnv1a64(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PipelineError> {
        let truncated = |what: &str| PipelineError::Archive(format!("archive truncated: {what}"));
        if bytes.len() < 4 + 2 + 8 + 8 {
            return Err(truncated("header"));
        }
        if bytes[..4] != ARCHIVE_MAGIC {
            return Err(PipelineError::Archive(format!(
                "bad archive magic {:02x?}",
                &bytes[..4]
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        let computed = fnv1a64(body);
        if stored != computed {
            return Err(PipelineError::Archive(format!(
                "archive checksum mismatch (stored {stored:#018x}, computed {computed:#018x})"
            )));
        }
        let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
        if version != ARCHIVE_VERSION {
            return Err(PipelineError::Archive(format!(
                "unsupported archive version {version}"
            )));
        }
        let manifest_len = u64::from_le_bytes(body[6..14].try_into().unwrap()) as usize;
        let manifest_end = 14usize.checked_add(manifest_len).ok_or_else(|| truncated("manifest"))?;
        if manifest_end > body.len() {
            return Err(truncated("manifest"));
        }
        let manifest: Manifest = serde_json::from_slice(&body[14..manifest_end])
            .map_err(|e| PipelineError::Archive(format!("manifest parse error: {e}")))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(PipelineError::Archive(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        manifest.validate()?;

        let payload_section = &body[manifest_end..];
        let mut payloads = Vec::with_capacity(manifest.layers.len());
        for l in &manifest.layers {
            let start = l.payload_offset as usize;
            let end = start
                .checked_add(l.payload_len as usize)
                .filter(|&e| e <= payload_section.len())
                .ok_or_else(|| truncated(&format!("payload of '{}'", l.name)))?;
            let (payload, used) =
                payload_from_bytes(&payload_section[start..end]).map_err(|e| {
                    PipelineError::LayerCodec {
                        task: manifest.task.name.clone(),
                        layer: l.name.clone(),
                        source: e,
                    }
                })?;
            if used != l.payload_len as usize {
                return Err(PipelineError::Archive(format!(
                    "layer '{}' payload length disagrees with manifest",
                    l.name
                )));
            }
            payloads.push(payload);
        }
        Ok(Self { manifest, payloads })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
