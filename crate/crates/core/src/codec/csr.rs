//! Compressed sparse row storage of kept positions.
//!
//! Row pointers (rows+1 cumulative counts), column indices, then the packed
//! b-bit symbols. Pointer and index field widths are the narrowest of
//! {16, 32, 64} bits that hold `n_kept` and `cols - 1` respectively.

use crate::bitio::{BitReader, BitWriter};

use super::{minimal_width, validate_symbols, CodecError, Scheme, SchemeParams, SparseLayerPayload};

/// Encodes kept flat positions of a `rows x cols` row-major matrix.
pub fn csr_encode(
    positions: &[u64],
    codes: &[u32],
    rows: u32,
    cols: u32,
    bits: u32,
) -> Result<SparseLayerPayload, CodecError> {
    let n = rows as u64 * cols as u64;
    validate_symbols(positions, codes, n, bits)?;

    let ptr_width = minimal_width(positions.len() as u64);
    let idx_width = minimal_width(cols.saturating_sub(1) as u64);

    let mut row_counts = vec![0u64; rows as usize];
    for &p in positions {
        row_counts[(p / cols as u64) as usize] += 1;
    }

    let mut w = BitWriter::new();
    // row pointers: rows + 1 cumulative counts
    let mut acc = 0u64;
    w.write_bits(0, ptr_width as u32);
    for &c in &row_counts {
        acc += c;
        w.write_bits(acc, ptr_width as u32);
    }
    for &p in positions {
        w.write_bits(p % cols as u64, idx_width as u32);
    }
    for &c in codes {
        w.write_bits(c as u64, bits);
    }

    Ok(SparseLayerPayload {
        scheme: Scheme::Csr,
        bit_width: bits,
        n_elements: n,
        n_kept: positions.len() as u64,
        params: SchemeParams::Csr {
            ptr_width,
            idx_width,
            rows,
            cols,
        },
        bitstream: w.into_bytes(),
    })
}

/// Exact inverse of [`csr_encode`], returning flat row-major positions.
pub fn csr_decode(payload: &SparseLayerPayload) -> Result<(Vec<u64>, Vec<u32>), CodecError> {
    let (ptr_width, idx_width, rows, cols) = match payload.params {
        SchemeParams::Csr {
            ptr_width,
            idx_width,
            rows,
            cols,
        } => (ptr_width, idx_width, rows, cols),
        _ => return Err(CodecError::Malformed("csr payload without csr params".into())),
    };
    if !(1..=32).contains(&payload.bit_width) {
        return Err(CodecError::InvalidBitWidth(payload.bit_width));
    }
    if !matches!(ptr_width, 16 | 32 | 64) || !matches!(idx_width, 16 | 32 | 64) {
        return Err(CodecError::Malformed("unsupported csr field width".into()));
    }
    if rows as u64 * cols as u64 != payload.n_elements {
        return Err(CodecError::Malformed("csr dims disagree with element count".into()));
    }

    let mut r = BitReader::new(&payload.bitstream);
    let mut row_ptr = Vec::with_capacity(rows as usize + 1);
    for _ in 0..=rows {
        row_ptr.push(r.read_bits(ptr_width as u32)?);
    }
    if row_ptr.first() != Some(&0) || row_ptr.last() != Some(&payload.n_kept) {
        return Err(CodecError::Malformed("csr row pointers out of range".into()));
    }
    if row_ptr.windows(2).any(|w| w[0] > w[1]) {
        return Err(CodecError::Malformed("csr row pointers not monotone".into()));
    }

    let mut positions = Vec::with_capacity(payload.n_kept as usize);
    for row in 0..rows as usize {
        let count = row_ptr[row + 1] - row_ptr[row];
        let mut prev_col: i64 = -1;
        for _ in 0..count {
            let col = r.read_bits(idx_width as u32)?;
            if col >= cols as u64 {
                return Err(CodecError::PositionOutOfRange {
                    pos: col,
                    n: cols as u64,
                });
            }
            if (col as i64) <= prev_col {
                return Err(CodecError::Malformed("csr columns not increasing".into()));
            }
            prev_col = col as i64;
            positions.push(row as u64 * cols as u64 + col);
        }
    }

    let mut codes = Vec::with_capacity(payload.n_kept as usize);
    for _ in 0..payload.n_kept {
        codes.push(r.read_bits(payload.bit_width)? as u32);
    }
    Ok((positions, codes))
}
