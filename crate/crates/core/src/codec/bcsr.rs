//! Block compressed sparse row storage.
//!
//! The matrix is padded so the block dimensions divide it, and any block with
//! at least one kept element is stored dense: a validity bitmap over the
//! block's cells (so pruned zeros survive the round trip) followed by b-bit
//! codes for every cell. Block row pointers and block column indices mirror
//! the CSR layout at block granularity. With unclustered masks nearly every
//! block is occupied, which is exactly why this scheme measures poorly on
//! uniform random sparsity.

use std::collections::BTreeMap;

use crate::bitio::{BitReader, BitWriter};

use super::{minimal_width, validate_symbols, CodecError, Scheme, SchemeParams, SparseLayerPayload};

/// Encodes kept flat positions of a `rows x cols` row-major matrix in
/// `block_rows x block_cols` blocks.
pub fn bcsr_encode(
    positions: &[u64],
    codes: &[u32],
    rows: u32,
    cols: u32,
    block_rows: u16,
    block_cols: u16,
    bits: u32,
) -> Result<SparseLayerPayload, CodecError> {
    if block_rows == 0 || block_cols == 0 {
        return Err(CodecError::InvalidBlockDims(block_rows as u32, block_cols as u32));
    }
    let n = rows as u64 * cols as u64;
    validate_symbols(positions, codes, n, bits)?;

    let br = block_rows as u64;
    let bc = block_cols as u64;
    let grid_rows = (rows as u64).div_ceil(br);
    let grid_cols = (cols as u64).div_ceil(bc);

    // occupied blocks in block-row-major order, each with its cell contents
    let cells = (br * bc) as usize;
    let mut blocks: BTreeMap<(u64, u64), Vec<Option<u32>>> = BTreeMap::new();
    for (&p, &code) in positions.iter().zip(codes) {
        let (r, c) = (p / cols as u64, p % cols as u64);
        let key = (r / br, c / bc);
        let cell = ((r % br) * bc + (c % bc)) as usize;
        blocks.entry(key).or_insert_with(|| vec![None; cells])[cell] = Some(code);
    }

    let occupied = blocks.len() as u64;
    let ptr_width = minimal_width(occupied);
    let idx_width = minimal_width(grid_cols.saturating_sub(1));

    let mut row_counts = vec![0u64; grid_rows as usize];
    for &(gr, _) in blocks.keys() {
        row_counts[gr as usize] += 1;
    }

    let mut w = BitWriter::new();
    let mut acc = 0u64;
    w.write_bits(0, ptr_width as u32);
    for &c in &row_counts {
        acc += c;
        w.write_bits(acc, ptr_width as u32);
    }
    for &(_, gc) in blocks.keys() {
        w.write_bits(gc, idx_width as u32);
    }
    for content in blocks.values() {
        for cell in content {
            w.write_bit(cell.is_some());
        }
        for cell in content {
            w.write_bits(cell.unwrap_or(0) as u64, bits);
        }
    }

    Ok(SparseLayerPayload {
        scheme: Scheme::Bcsr,
        bit_width: bits,
        n_elements: n,
        n_kept: positions.len() as u64,
        params: SchemeParams::Bcsr {
            rows,
            cols,
            block_rows,
            block_cols,
            ptr_width,
            idx_width,
            occupied_blocks: occupied as u32,
        },
        bitstream: w.into_bytes(),
    })
}

/// Exact inverse of [`bcsr_encode`], returning flat row-major positions.
pub fn bcsr_decode(payload: &SparseLayerPayload) -> Result<(Vec<u64>, Vec<u32>), CodecError> {
    let (rows, cols, block_rows, block_cols, ptr_width, idx_width, occupied) = match payload.params
    {
        SchemeParams::Bcsr {
            rows,
            cols,
            block_rows,
            block_cols,
            ptr_width,
            idx_width,
            occupied_blocks,
        } => (rows, cols, block_rows, block_cols, ptr_width, idx_width, occupied_blocks),
        _ => return Err(CodecError::Malformed("bcsr payload without bcsr params".into())),
    };
    if block_rows == 0 || block_cols == 0 {
        return Err(CodecError::InvalidBlockDims(block_rows as u32, block_cols as u32));
    }
    if !(1..=32).contains(&payload.bit_width) {
        return Err(CodecError::InvalidBitWidth(payload.bit_width));
    }
    if !matches!(ptr_width, 16 | 32 | 64) || !matches!(idx_width, 16 | 32 | 64) {
        return Err(CodecError::Malformed("unsupported bcsr field width".into()));
    }
    if rows as u64 * cols as u64 != payload.n_elements {
        return Err(CodecError::Malformed("bcsr dims disagree with element count".into()));
    }

    let br = block_rows as u64;
    let bc = block_cols as u64;
    let grid_rows = (rows as u64).div_ceil(br);
    let grid_cols = (cols as u64).div_ceil(bc);
    let cells = (br * bc) as usize;

    let mut r = BitReader::new(&payload.bitstream);
    let mut row_ptr = Vec::with_capacity(grid_rows as usize + 1);
    for _ in 0..=grid_rows {
        row_ptr.push(r.read_bits(ptr_width as u32)?);
    }
    if row_ptr.first() != Some(&0)
        || row_ptr.last() != Some(&(occupied as u64))
        || row_ptr.windows(2).any(|w| w[0] > w[1])
    {
        return Err(CodecError::Malformed("bcsr block pointers out of range".into()));
    }

    // block coordinates in block-row-major order
    let mut block_coords = Vec::with_capacity(occupied as usize);
    for grow in 0..grid_rows as usize {
        let count = row_ptr[grow + 1] - row_ptr[grow];
        let mut prev: i64 = -1;
        for _ in 0..count {
            let gcol = r.read_bits(idx_width as u32)?;
            if gcol >= grid_cols {
                return Err(CodecError::PositionOutOfRange {
                    pos: gcol,
                    n: grid_cols,
                });
            }
            if (gcol as i64) <= prev {
                return Err(CodecError::Malformed("bcsr block columns not increasing".into()));
            }
            prev = gcol as i64;
            block_coords.push((grow as u64, gcol));
        }
    }

    let mut entries: Vec<(u64, u32)> = Vec::with_capacity(payload.n_kept as usize);
    for &(grow, gcol) in &block_coords {
        let mut bitmap = Vec::with_capacity(cells);
        for _ in 0..cells {
            bitmap.push(r.read_bit()?);
        }
        for (cell, &valid) in bitmap.iter().enumerate() {
            let code = r.read_bits(payload.bit_width)? as u32;
            if !valid {
                continue;
            }
            let row = grow * br + cell as u64 / bc;
            let col = gcol * bc + cell as u64 % bc;
            if row >= rows as u64 || col >= cols as u64 {
                return Err(CodecError::Malformed(
                    "bcsr bitmap marks a padding cell".into(),
                ));
            }
            entries.push((row * cols as u64 + col, code));
        }
    }
    if entries.len() as u64 != payload.n_kept {
        return Err(CodecError::Malformed(format!(
            "bcsr decoded {} kept elements, header says {}",
            entries.len(),
            payload.n_kept
        )));
    }
    entries.sort_unstable_by_key(|&(p, _)| p);
    if entries.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(CodecError::Malformed("bcsr duplicate position".into()));
    }
    Ok(entries.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{golomb_encode, measure_payload};
    use crate::rng::CounterStream;
    use proptest::prelude::*;

    #[test]
    fn fully_dense_single_block() {
        let positions: Vec<u64> = (0..16).collect();
        let codes: Vec<u32> = (0..16).collect();
        let p = bcsr_encode(&positions, &codes, 4, 4, 4, 4, 4).unwrap();
        match p.params {
            SchemeParams::Bcsr { occupied_blocks, .. } => assert_eq!(occupied_blocks, 1),
            _ => unreachable!(),
        }
        // pointers (2 x 16) + index (16) + bitmap (16) + codes (64) = 128 bits
        assert_eq!(p.bitstream.len(), 16);
        assert_eq!(bcsr_decode(&p).unwrap(), (positions, codes));
    }

    #[test]
    fn zero_block_dims_rejected() {
        assert!(matches!(
            bcsr_encode(&[], &[], 4, 4, 0, 4, 4),
            Err(CodecError::InvalidBlockDims(0, 4))
        ));
    }

    #[test]
    fn padding_cells_round_trip() {
        // 5x5 matrix, 4x4 blocks: the padded grid is 8x8
        let positions = vec![0, 6, 24];
        let codes = vec![3, 1, 2];
        let p = bcsr_encode(&positions, &codes, 5, 5, 4, 4, 4).unwrap();
        assert_eq!(bcsr_decode(&p).unwrap(), (positions, codes));
    }

    #[test]
    fn uniform_random_sparsity_measures_far_above_golomb() {
        // 97% sparsity, 4x4 blocks: nearly every block is occupied, so the
        // dense-block cost dwarfs run-length coding
        let (rows, cols) = (256u32, 256u32);
        let n = rows as u64 * cols as u64;
        let mut s = CounterStream::new(17);
        let mut positions = Vec::new();
        let mut codes = Vec::new();
        for i in 0..n {
            if s.next_bool(0.03) {
                positions.push(i);
                codes.push((s.next_u64() & 0xF) as u32);
            }
        }
        let bcsr = bcsr_encode(&positions, &codes, rows, cols, 4, 4, 4).unwrap();
        let golomb = golomb_encode(&positions, &codes, n, 4).unwrap();
        let bcsr_bpp = measure_payload(&bcsr);
        let golomb_bpp = measure_payload(&golomb);
        assert!(
            bcsr_bpp > 4.0 * golomb_bpp,
            "bcsr {bcsr_bpp} vs golomb {golomb_bpp}"
        );
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            rows in 1u32..48,
            cols in 1u32..48,
            block_rows in 1u16..6,
            block_cols in 1u16..6,
            keep in 0.0f64..=1.0,
            bits in 1u32..=16,
            seed in proptest::num::u64::ANY,
        ) {
            let n = rows as u64 * cols as u64;
            let mut s = CounterStream::new(seed);
            let mut positions = Vec::new();
            let mut codes = Vec::new();
            let mask = (1u32 << bits) - 1;
            for i in 0..n {
                if s.next_bool(keep) {
                    positions.push(i);
                    codes.push((s.next_u64() as u32) & mask);
                }
            }
            let p = bcsr_encode(&positions, &codes, rows, cols, block_rows, block_cols, bits).unwrap();
            prop_assert_eq!(bcsr_decode(&p).unwrap(), (positions, codes));
        }
    }
}
