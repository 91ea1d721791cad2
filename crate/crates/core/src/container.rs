//! Named dense tensor sets and their on-disk container format.
//!
//! The container is a small self-describing binary file:
//!
//! ```text
//! magic "UDTC" | u16 version=1 | u32 entry count
//! per entry: u16 name len | name bytes | u8 dtype | u8 rank | rank x u64 dims | u64 payload offset
//! payload section (tensor data, row-major, little-endian)
//! trailing u64 checksum (FNV-1a over header + payload)
//! ```
//!
//! All multi-byte fields are little-endian. Tensors are stored as `f32` or
//! `f16`; in memory everything is widened to `f32` and all downstream
//! arithmetic runs in `f64`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use half::f16;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"UDTC";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("container truncated: {0}")]
    Truncated(String),
    #[error("tensor '{name}': shape product overflows")]
    ShapeOverflow { name: String },
    #[error("tensor '{name}': shape {shape:?} does not match data length {len}")]
    ShapeDataMismatch {
        name: String,
        shape: Vec<u64>,
        len: usize,
    },
    #[error("tensor '{name}': zero-sized dimension")]
    ZeroDim { name: String },
    #[error("duplicate tensor name '{0}'")]
    DuplicateName(String),
    #[error("empty tensor name")]
    EmptyName,
    #[error("tensor name longer than {max} bytes", max = u16::MAX)]
    NameTooLong,
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("layer '{name}' missing from {side} set")]
    MissingLayer { name: String, side: &'static str },
    #[error("layer '{name}': shape mismatch between fine-tuned and pretrained")]
    ShapeMismatch { name: String },
    #[error("base fingerprint mismatch (archive {expected:#018x}, actual {actual:#018x}); pass the override flag to force")]
    FingerprintMismatch { expected: u64, actual: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Storage precision of a tensor inside the container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F16,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F16 => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F16),
            _ => None,
        }
    }

    fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }
}

/// One named dense tensor. Data lives in memory as `f32`; entries declared
/// `F16` are snapped to half precision on construction so that save/load is
/// the identity on the struct.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<u64>,
    pub dtype: Dtype,
    pub data: Vec<f32>,
}

impl TensorEntry {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<u64>,
        dtype: Dtype,
        mut data: Vec<f32>,
    ) -> Result<Self, ContainerError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ContainerError::EmptyName);
        }
        if name.len() > u16::MAX as usize {
            return Err(ContainerError::NameTooLong);
        }
        if shape.contains(&0) {
            return Err(ContainerError::ZeroDim { name });
        }
        let count = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or(ContainerError::ShapeOverflow { name: name.clone() })?;
        if count as usize as u64 != count || count as usize != data.len() {
            return Err(ContainerError::ShapeDataMismatch {
                name,
                shape,
                len: data.len(),
            });
        }
        if dtype == Dtype::F16 {
            for v in &mut data {
                *v = f16::from_f32(*v).to_f32();
            }
        }
        Ok(Self {
            name,
            shape,
            dtype,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }
}

/// An ordered collection of uniquely named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NamedTensorSet {
    entries: Vec<TensorEntry>,
    index: HashMap<String, usize>,
}

impl NamedTensorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<TensorEntry>) -> Result<Self, ContainerError> {
        let mut set = Self::new();
        for e in entries {
            set.push(e)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, entry: TensorEntry) -> Result<(), ContainerError> {
        if self.index.contains_key(&entry.name) {
            return Err(ContainerError::DuplicateName(entry.name));
        }
        self.index.insert(entry.name.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_params(&self) -> u64 {
        self.entries.iter().map(|e| e.len() as u64).sum()
    }
}

/// Delta weights for one task plus the hash of the base they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSet {
    pub set: NamedTensorSet,
    pub base_fingerprint: u64,
    /// Layers present in the fine-tuned model but not selected for
    /// compression; recorded so manifests can list them.
    pub pass_through: Vec<String>,
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Serializes header + payload (everything except the trailing checksum).
fn serialize_body(set: &NamedTensorSet) -> Vec<u8> {
    let mut header = Vec::new();
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&(set.entries.len() as u32).to_le_bytes());

    let mut payload = Vec::new();
    for e in &set.entries {
        let offset = payload.len() as u64;
        header.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        header.extend_from_slice(e.name.as_bytes());
        header.push(e.dtype.tag());
        header.push(e.shape.len() as u8);
        for &d in &e.shape {
            header.extend_from_slice(&d.to_le_bytes());
        }
        header.extend_from_slice(&offset.to_le_bytes());
        match e.dtype {
            Dtype::F32 => {
                for &v in &e.data {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
            Dtype::F16 => {
                for &v in &e.data {
                    payload.extend_from_slice(&f16::from_f32(v).to_le_bytes());
                }
            }
        }
    }
    header.extend_from_slice(&payload);
    header
}

/// Serializes a tensor set to container bytes (body + trailing checksum).
pub fn to_bytes(set: &NamedTensorSet) -> Vec<u8> {
    let mut body = serialize_body(set);
    let checksum = fnv1a64(&body);
    body.extend_from_slice(&checksum.to_le_bytes());
    body
}

/// 64-bit content hash of a tensor set (the container checksum).
pub fn fingerprint64(set: &NamedTensorSet) -> u64 {
    fnv1a64(&serialize_body(set))
}

pub fn save_container(set: &NamedTensorSet, path: impl AsRef<Path>) -> Result<(), ContainerError> {
    fs::write(path, to_bytes(set))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ContainerError> {
        if self.pos + n > self.bytes.len() {
            return Err(ContainerError::Truncated(what.to_string()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, ContainerError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses container bytes produced by [`to_bytes`].
pub fn from_bytes(bytes: &[u8]) -> Result<NamedTensorSet, ContainerError> {
    if bytes.len() < MAGIC.len() + 2 + 4 + 8 {
        return Err(ContainerError::Truncated("file shorter than header".into()));
    }
    if bytes[..4] != MAGIC {
        return Err(ContainerError::MalformedHeader(format!(
            "bad magic {:02x?}",
            &bytes[..4]
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(ContainerError::ChecksumMismatch { stored, computed });
    }

    let mut cur = Cursor {
        bytes: body,
        pos: 4,
    };
    let version = cur.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let count = cur.u32("entry count")? as usize;

    struct RawEntry {
        name: String,
        dtype: Dtype,
        shape: Vec<u64>,
        offset: u64,
        elems: usize,
    }

    let mut raw = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| ContainerError::BadName)?
            .to_string();
        let dtag = cur.u8("dtype")?;
        let dtype = Dtype::from_tag(dtag).ok_or_else(|| {
            ContainerError::MalformedHeader(format!("unknown dtype tag {dtag}"))
        })?;
        let rank = cur.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64("dim")?);
        }
        if shape.contains(&0) {
            return Err(ContainerError::ZeroDim { name });
        }
        let elems = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c <= usize::MAX as u64)
            .ok_or(ContainerError::ShapeOverflow { name: name.clone() })?
            as usize;
        let offset = cur.u64("offset")?;
        raw.push(RawEntry {
            name,
            dtype,
            shape,
            offset,
            elems,
        });
    }

    let payload = &body[cur.pos..];
    let mut set = NamedTensorSet::new();
    for r in raw {
        let nbytes = r
            .elems
            .checked_mul(r.dtype.byte_width())
            .ok_or(ContainerError::ShapeOverflow {
                name: r.name.clone(),
            })?;
        let start = r.offset as usize;
        let end = start
            .checked_add(nbytes)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| ContainerError::Truncated(format!("payload of '{}'", r.name)))?;
        let chunk = &payload[start..end];
        let data: Vec<f32> = match r.dtype {
            Dtype::F32 => chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F16 => chunk
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes(c.try_into().unwrap()).to_f32())
                .collect(),
        };
        set.push(TensorEntry::new(r.name, r.shape, r.dtype, data)?)?;
    }
    Ok(set)
}

pub fn load_container(path: impl AsRef<Path>) -> Result<NamedTensorSet, ContainerError> {
    from_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// layer selection and delta extraction
// ---------------------------------------------------------------------------

/// Chooses which layers are compressed; the rest pass through.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum LayerSelector {
    /// All tensors with exactly 2 dimensions (the portable proxy for linear
    /// weights; bias vectors pass through).
    #[default]
    Rank2,
    /// Glob patterns (`*` any run, `?` one char); a layer is selected if any
    /// pattern matches its full name.
    Patterns(Vec<String>),
}

fn glob_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let n: Vec<char> = name.chars().collect();
    // iterative wildcard match with backtracking on the last '*'
    let (mut pi, mut ni) = (0usize, 0usize);
    let (mut star, mut mark) = (usize::MAX, 0usize);
    while ni < n.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == n[ni]) {
            pi += 1;
            ni += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = pi;
            mark = ni;
            pi += 1;
        } else if star != usize::MAX {
            pi = star + 1;
            mark += 1;
            ni = mark;
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

impl LayerSelector {
    pub fn selects(&self, entry: &TensorEntry) -> bool {
        match self {
            LayerSelector::Rank2 => entry.is_matrix(),
            LayerSelector::Patterns(pats) => pats.iter().any(|p| glob_match(p, &entry.name)),
        }
    }
}

/// Element-wise difference of the selected layers of two tensor sets.
///
/// Deltas are always stored as `f32`; unselected fine-tuned layers are listed
/// in `pass_through`.
pub fn extract_delta(
    finetuned: &NamedTensorSet,
    pretrained: &NamedTensorSet,
    selector: &LayerSelector,
) -> Result<DeltaSet, ContainerError> {
    let mut set = NamedTensorSet::new();
    let mut pass_through = Vec::new();
    for ft in finetuned.entries() {
        if !selector.selects(ft) {
            pass_through.push(ft.name.clone());
            continue;
        }
        let pre = pretrained
            .get(&ft.name)
            .ok_or_else(|| ContainerError::MissingLayer {
                name: ft.name.clone(),
                side: "pretrained",
            })?;
        if pre.shape != ft.shape {
            return Err(ContainerError::ShapeMismatch {
                name: ft.name.clone(),
            });
        }
        let data: Vec<f32> = ft
            .data
            .iter()
            .zip(&pre.data)
            .map(|(&f, &p)| ((f as f64) - (p as f64)) as f32)
            .collect();
        set.push(TensorEntry::new(
            ft.name.clone(),
            ft.shape.clone(),
            Dtype::F32,
            data,
        )?)?;
    }
    Ok(DeltaSet {
        set,
        base_fingerprint: fingerprint64(pretrained),
        pass_through,
    })
}

/// Adds a scaled sparse delta onto the matching pretrained layers; layers
/// without a delta are copied verbatim. `layers` maps name -> (scale factor,
/// kept positions, kept values).
pub fn apply_sparse_delta(
    pretrained: &NamedTensorSet,
    layers: &HashMap<String, (f64, Vec<u64>, Vec<f64>)>,
) -> Result<NamedTensorSet, ContainerError> {
    let mut out = NamedTensorSet::new();
    for pre in pretrained.entries() {
        let entry = match layers.get(&pre.name) {
            Some((factor, positions, values)) => {
                let mut data = pre.data.clone();
                for (&p, &v) in positions.iter().zip(values) {
                    let i = p as usize;
                    if i >= data.len() {
                        return Err(ContainerError::ShapeMismatch {
                            name: pre.name.clone(),
                        });
                    }
                    data[i] = ((data[i] as f64) + factor * v) as f32;
                }
                TensorEntry::new(pre.name.clone(), pre.shape.clone(), pre.dtype, data)?
            }
            None => pre.clone(),
        };
        out.push(entry)?;
    }
    Ok(out)
}
