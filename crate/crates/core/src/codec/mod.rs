//! Bit-exact serialization of pruned layers.
//!
//! Four storage schemes share one wire envelope:
//!
//! ```text
//! u8 scheme | u8 bit_width | u64 n_elements | u64 n_kept
//! scheme params (see SchemeParams) | u64 bitstream byte length
//! bitstream | u32 crc32 of the bitstream
//! ```
//!
//! Multi-byte header fields are little-endian; the bitstream itself is
//! MSB-first. `golomb`, `csr` and `bcsr` round-trip exactly; `index_free` is
//! an accounting scheme that records the size a position-free encoding would
//! take and cannot be decoded.

mod bcsr;
mod csr;
mod golomb;
mod ratio;

pub use bcsr::{bcsr_decode, bcsr_encode};
pub use csr::{csr_decode, csr_encode};
pub use golomb::{golomb_decode, golomb_encode, optimal_golomb_modulus};
pub use ratio::{entropy_ratio, RatioEntry};

use thiserror::Error;

use crate::bitio::BitIoError;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("kept positions must be strictly increasing (violation at index {0})")]
    UnsortedPositions(usize),
    #[error("position {pos} out of range for {n} elements")]
    PositionOutOfRange { pos: u64, n: u64 },
    #[error("symbol {code} does not fit in {bits} bits")]
    SymbolOverflow { code: u32, bits: u32 },
    #[error("positions/codes length mismatch: {positions} vs {codes}")]
    LengthMismatch { positions: usize, codes: usize },
    #[error("bit width {0} out of supported range 1..=32")]
    InvalidBitWidth(u32),
    #[error("invalid block dimensions {0}x{1}")]
    InvalidBlockDims(u32, u32),
    #[error("decoded position {pos} overruns layer of {n} elements")]
    RunOverflow { pos: u64, n: u64 },
    #[error("payload truncated: {0}")]
    Truncated(String),
    #[error("payload checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("scheme {0:?} does not store a decodable stream")]
    NotDecodable(Scheme),
    #[error("sparsity {0} outside the open interval (0, 1)")]
    SparsityOutOfRange(f64),
    #[error(transparent)]
    BitIo(#[from] BitIoError),
}

/// Storage scheme tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Golomb,
    Csr,
    Bcsr,
    IndexFree,
}

impl Scheme {
    pub fn tag(self) -> u8 {
        match self {
            Scheme::Golomb => 0,
            Scheme::Csr => 1,
            Scheme::Bcsr => 2,
            Scheme::IndexFree => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Scheme::Golomb),
            1 => Some(Scheme::Csr),
            2 => Some(Scheme::Bcsr),
            3 => Some(Scheme::IndexFree),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Golomb => "golomb",
            Scheme::Csr => "csr",
            Scheme::Bcsr => "bcsr",
            Scheme::IndexFree => "index_free",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "golomb" => Ok(Scheme::Golomb),
            "csr" => Ok(Scheme::Csr),
            "bcsr" => Ok(Scheme::Bcsr),
            "index_free" | "index-free" => Ok(Scheme::IndexFree),
            other => Err(format!("unknown scheme '{other}'")),
        }
    }
}

/// Scheme-specific header fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemeParams {
    Golomb {
        modulus: u32,
    },
    Csr {
        ptr_width: u8,
        idx_width: u8,
        rows: u32,
        cols: u32,
    },
    Bcsr {
        rows: u32,
        cols: u32,
        block_rows: u16,
        block_cols: u16,
        ptr_width: u8,
        idx_width: u8,
        occupied_blocks: u32,
    },
    IndexFree,
}

/// One encoded sparse layer: header metadata plus the packed bitstream.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayerPayload {
    pub scheme: Scheme,
    pub bit_width: u32,
    pub n_elements: u64,
    pub n_kept: u64,
    pub params: SchemeParams,
    pub bitstream: Vec<u8>,
}

/// Narrowest of {16, 32, 64} bits that holds `max_value`.
pub(crate) fn minimal_width(max_value: u64) -> u8 {
    if max_value < (1 << 16) {
        16
    } else if max_value < (1 << 32) {
        32
    } else {
        64
    }
}

pub(crate) fn validate_symbols(
    positions: &[u64],
    codes: &[u32],
    n: u64,
    bits: u32,
) -> Result<(), CodecError> {
    if !(1..=32).contains(&bits) {
        return Err(CodecError::InvalidBitWidth(bits));
    }
    if positions.len() != codes.len() {
        return Err(CodecError::LengthMismatch {
            positions: positions.len(),
            codes: codes.len(),
        });
    }
    let mut prev: Option<u64> = None;
    for (i, &p) in positions.iter().enumerate() {
        if p >= n {
            return Err(CodecError::PositionOutOfRange { pos: p, n });
        }
        if let Some(q) = prev {
            if p <= q {
                return Err(CodecError::UnsortedPositions(i));
            }
        }
        prev = Some(p);
    }
    if bits < 32 {
        let limit = 1u32 << bits;
        for &c in codes {
            if c >= limit {
                return Err(CodecError::SymbolOverflow { code: c, bits });
            }
        }
    }
    Ok(())
}

/// Accounting-only payload: records what an index-free store of the kept
/// values would cost, with no decodable stream.
pub fn index_free_payload(n: u64, n_kept: u64, bits: u32) -> Result<SparseLayerPayload, CodecError> {
    if !(1..=32).contains(&bits) {
        return Err(CodecError::InvalidBitWidth(bits));
    }
    Ok(SparseLayerPayload {
        scheme: Scheme::IndexFree,
        bit_width: bits,
        n_elements: n,
        n_kept,
        params: SchemeParams::IndexFree,
        bitstream: Vec::new(),
    })
}

/// Decodes a payload back to `(kept positions, symbols)`.
pub fn decode_payload(payload: &SparseLayerPayload) -> Result<(Vec<u64>, Vec<u32>), CodecError> {
    match payload.scheme {
        Scheme::Golomb => golomb_decode(payload),
        Scheme::Csr => csr_decode(payload),
        Scheme::Bcsr => bcsr_decode(payload),
        Scheme::IndexFree => Err(CodecError::NotDecodable(Scheme::IndexFree)),
    }
}

// ---------------------------------------------------------------------------
// wire envelope
// ---------------------------------------------------------------------------

fn header_bytes(payload: &SparseLayerPayload) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    out.push(payload.scheme.tag());
    out.push(payload.bit_width as u8);
    out.extend_from_slice(&payload.n_elements.to_le_bytes());
    out.extend_from_slice(&payload.n_kept.to_le_bytes());
    match &payload.params {
        SchemeParams::Golomb { modulus } => out.extend_from_slice(&modulus.to_le_bytes()),
        SchemeParams::Csr {
            ptr_width,
            idx_width,
            rows,
            cols,
        } => {
            out.push(*ptr_width);
            out.push(*idx_width);
            out.extend_from_slice(&rows.to_le_bytes());
            out.extend_from_slice(&cols.to_le_bytes());
        }
        SchemeParams::Bcsr {
            rows,
            cols,
            block_rows,
            block_cols,
            ptr_width,
            idx_width,
            occupied_blocks,
        } => {
            out.extend_from_slice(&rows.to_le_bytes());
            out.extend_from_slice(&cols.to_le_bytes());
            out.extend_from_slice(&block_rows.to_le_bytes());
            out.extend_from_slice(&block_cols.to_le_bytes());
            out.push(*ptr_width);
            out.push(*idx_width);
            out.extend_from_slice(&occupied_blocks.to_le_bytes());
        }
        SchemeParams::IndexFree => {}
    }
    out.extend_from_slice(&(payload.bitstream.len() as u64).to_le_bytes());
    out
}

/// Serializes the payload envelope (header, bitstream, trailing crc32).
pub fn payload_to_bytes(payload: &SparseLayerPayload) -> Vec<u8> {
    let mut out = header_bytes(payload);
    out.extend_from_slice(&payload.bitstream);
    out.extend_from_slice(&crc32fast::hash(&payload.bitstream).to_le_bytes());
    out
}

struct Take<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Take<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.bytes.len() {
            return Err(CodecError::Truncated(what.to_string()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, CodecError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses one payload envelope, returning it and the bytes consumed.
pub fn payload_from_bytes(bytes: &[u8]) -> Result<(SparseLayerPayload, usize), CodecError> {
    let mut t = Take { bytes, pos: 0 };
    let scheme = Scheme::from_tag(t.u8("scheme tag")?)
        .ok_or_else(|| CodecError::Malformed("unknown scheme tag".into()))?;
    let bit_width = t.u8("bit width")? as u32;
    let n_elements = t.u64("element count")?;
    let n_kept = t.u64("kept count")?;
    let params = match scheme {
        Scheme::Golomb => SchemeParams::Golomb {
            modulus: t.u32("golomb modulus")?,
        },
        Scheme::Csr => SchemeParams::Csr {
            ptr_width: t.u8("pointer width")?,
            idx_width: t.u8("index width")?,
            rows: t.u32("rows")?,
            cols: t.u32("cols")?,
        },
        Scheme::Bcsr => SchemeParams::Bcsr {
            rows: t.u32("rows")?,
            cols: t.u32("cols")?,
            block_rows: t.u16("block rows")?,
            block_cols: t.u16("block cols")?,
            ptr_width: t.u8("pointer width")?,
            idx_width: t.u8("index width")?,
            occupied_blocks: t.u32("occupied blocks")?,
        },
        Scheme::IndexFree => SchemeParams::IndexFree,
    };
    let stream_len = t.u64("bitstream length")? as usize;
    let bitstream = t.take(stream_len, "bitstream")?.to_vec();
    let stored_crc = t.u32("checksum")?;
    if crc32fast::hash(&bitstream) != stored_crc {
        return Err(CodecError::ChecksumMismatch);
    }
    Ok((
        SparseLayerPayload {
            scheme,
            bit_width,
            n_elements,
            n_kept,
            params,
            bitstream,
        },
        t.pos,
    ))
}

/// Total payload size in bits: the serialized envelope, plus the virtual
/// value bits for the accounting-only index-free scheme.
pub fn payload_bits(payload: &SparseLayerPayload) -> u64 {
    let wire = payload_to_bytes(payload).len() as u64 * 8;
    match payload.scheme {
        Scheme::IndexFree => wire + payload.n_kept * payload.bit_width as u64,
        _ => wire,
    }
}

/// Realized bits per parameter, header included.
pub fn measure_payload(payload: &SparseLayerPayload) -> f64 {
    if payload.n_elements == 0 {
        return 0.0;
    }
    payload_bits(payload) as f64 / payload.n_elements as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trips() {
        let payload = golomb_encode(&[0, 5, 9], &[1, 2, 3], 16, 4).unwrap();
        let bytes = payload_to_bytes(&payload);
        let (back, used) = payload_from_bytes(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back, payload);
    }

    #[test]
    fn flipped_byte_is_detected() {
        let payload = golomb_encode(&[2, 3, 11], &[7, 0, 15], 64, 4).unwrap();
        let mut bytes = payload_to_bytes(&payload);
        let stream_start = bytes.len() - 4 - payload.bitstream.len();
        bytes[stream_start] ^= 0x10;
        assert_eq!(payload_from_bytes(&bytes), Err(CodecError::ChecksumMismatch));
    }

    #[test]
    fn truncated_envelope_is_detected() {
        let payload = golomb_encode(&[2], &[1], 8, 4).unwrap();
        let bytes = payload_to_bytes(&payload);
        for cut in 0..bytes.len() {
            assert!(payload_from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn index_free_accounts_value_bits_only() {
        let p = index_free_payload(1000, 50, 4).unwrap();
        let header_bits = payload_to_bytes(&p).len() as u64 * 8;
        assert_eq!(payload_bits(&p), header_bits + 50 * 4);
        assert!(decode_payload(&p).is_err());
    }

    #[test]
    fn minimal_width_ladder() {
        assert_eq!(minimal_width(0), 16);
        assert_eq!(minimal_width(65_535), 16);
        assert_eq!(minimal_width(65_536), 32);
        assert_eq!(minimal_width(u32::MAX as u64 + 1), 64);
    }

    #[test]
    fn validate_rejects_bad_inputs() {
        assert!(matches!(
            validate_symbols(&[3, 3], &[0, 0], 8, 4),
            Err(CodecError::UnsortedPositions(1))
        ));
        assert!(matches!(
            validate_symbols(&[9], &[0], 8, 4),
            Err(CodecError::PositionOutOfRange { .. })
        ));
        assert!(matches!(
            validate_symbols(&[0], &[16], 8, 4),
            Err(CodecError::SymbolOverflow { .. })
        ));
    }
}
