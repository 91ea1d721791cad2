//! Golomb run-length coding of kept positions.
//!
//! The zero-run length before each kept position is Golomb coded (unary
//! quotient, truncated-binary remainder), followed by the kept symbol as a
//! fixed b-bit field. Runs of an element-wise Bernoulli keep process are
//! geometric, for which a Golomb code with the right modulus sits within a
//! few percent of the entropy bound.

use crate::bitio::{BitReader, BitWriter};

use super::{validate_symbols, CodecError, Scheme, SchemeParams, SparseLayerPayload};

/// Optimal Golomb modulus for keep probability `p`: the smallest `m >= 1`
/// with `x^m + x^(m+1) <= 1`, `x = 1 - p`.
pub fn optimal_golomb_modulus(p_keep: f64) -> u32 {
    if !(0.0..1.0).contains(&p_keep) || p_keep == 0.0 {
        return 1;
    }
    let x = 1.0 - p_keep;
    if x <= 0.0 {
        return 1;
    }
    let m = ((1.0 + x).ln() / -(x.ln())).ceil();
    if m.is_finite() && m >= 1.0 {
        m.min(u32::MAX as f64) as u32
    } else {
        1
    }
}

fn remainder_bits(modulus: u32) -> (u32, u32) {
    // truncated binary: k = ceil(log2 m), threshold u = 2^k - m
    if modulus <= 1 {
        return (0, 0);
    }
    let k = 32 - (modulus - 1).leading_zeros();
    let u = (1u32 << k) - modulus;
    (k, u)
}

fn write_golomb(w: &mut BitWriter, value: u64, modulus: u32) {
    let m = modulus as u64;
    w.write_unary(value / m);
    let (k, u) = remainder_bits(modulus);
    if k == 0 {
        return;
    }
    let r = (value % m) as u32;
    if r < u {
        w.write_bits(r as u64, k - 1);
    } else {
        w.write_bits((r + u) as u64, k);
    }
}

fn read_golomb(r: &mut BitReader<'_>, modulus: u32, unary_limit: u64) -> Result<u64, CodecError> {
    let q = r.read_unary(unary_limit)?;
    let (k, u) = remainder_bits(modulus);
    let rem = if k == 0 {
        0
    } else {
        let head = r.read_bits(k - 1)? as u32;
        if head < u {
            head
        } else {
            let tail = u32::from(r.read_bit()?);
            (head << 1 | tail) - u
        }
    };
    Ok(q * modulus as u64 + rem as u64)
}

/// Encodes kept positions (strictly increasing, `< n`) and their b-bit
/// symbols. The modulus is chosen optimally for the realized keep rate and
/// stored in the header.
pub fn golomb_encode(
    positions: &[u64],
    codes: &[u32],
    n: u64,
    bits: u32,
) -> Result<SparseLayerPayload, CodecError> {
    validate_symbols(positions, codes, n, bits)?;
    let p_keep = if n == 0 {
        0.0
    } else {
        positions.len() as f64 / n as f64
    };
    let modulus = optimal_golomb_modulus(p_keep);

    let mut w = BitWriter::new();
    let mut prev: i64 = -1;
    for (&pos, &code) in positions.iter().zip(codes) {
        let run = (pos as i64 - prev - 1) as u64;
        write_golomb(&mut w, run, modulus);
        w.write_bits(code as u64, bits);
        prev = pos as i64;
    }

    Ok(SparseLayerPayload {
        scheme: Scheme::Golomb,
        bit_width: bits,
        n_elements: n,
        n_kept: positions.len() as u64,
        params: SchemeParams::Golomb { modulus },
        bitstream: w.into_bytes(),
    })
}

/// Exact inverse of [`golomb_encode`].
pub fn golomb_decode(payload: &SparseLayerPayload) -> Result<(Vec<u64>, Vec<u32>), CodecError> {
    let modulus = match payload.params {
        SchemeParams::Golomb { modulus } if modulus >= 1 => modulus,
        SchemeParams::Golomb { .. } => {
            return Err(CodecError::Malformed("golomb modulus must be >= 1".into()))
        }
        _ => return Err(CodecError::Malformed("golomb payload without modulus".into())),
    };
    if !(1..=32).contains(&payload.bit_width) {
        return Err(CodecError::InvalidBitWidth(payload.bit_width));
    }

    let n = payload.n_elements;
    let mut r = BitReader::new(&payload.bitstream);
    let mut positions = Vec::with_capacity(payload.n_kept as usize);
    let mut codes = Vec::with_capacity(payload.n_kept as usize);
    let mut prev: i64 = -1;
    // a run can never exceed the layer length, so cap unary reads there
    let unary_limit = n / modulus as u64 + 1;
    for _ in 0..payload.n_kept {
        let run = read_golomb(&mut r, modulus, unary_limit)?;
        let pos = (prev + 1) as u64 + run;
        if pos >= n {
            return Err(CodecError::RunOverflow { pos, n });
        }
        let code = r.read_bits(payload.bit_width)? as u32;
        positions.push(pos);
        codes.push(code);
        prev = pos as i64;
    }
    Ok((positions, codes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{measure_payload, payload_to_bytes};
    use crate::rng::{derive_u64, CounterStream};
    use proptest::prelude::*;

    fn random_mask(n: u64, keep: f64, seed: u64) -> (Vec<u64>, Vec<u32>) {
        let mut s = CounterStream::new(derive_u64(seed, 0));
        let mut positions = Vec::new();
        let mut codes = Vec::new();
        for i in 0..n {
            if s.next_bool(keep) {
                positions.push(i);
                codes.push((s.next_u64() & 0xF) as u32);
            }
        }
        (positions, codes)
    }

    #[test]
    fn empty_layer_is_header_only() {
        let p = golomb_encode(&[], &[], 1000, 4).unwrap();
        assert!(p.bitstream.is_empty());
        assert_eq!(p.n_kept, 0);
        let (pos, codes) = golomb_decode(&p).unwrap();
        assert!(pos.is_empty() && codes.is_empty());
    }

    #[test]
    fn single_kept_position_hand_trace() {
        // run 0, then symbol 7: with one kept of n=8, p=1/8, x=7/8,
        // m = ceil(ln(15/8)/-ln(7/8)) = ceil(4.707) = 5, k=3, u=3.
        // run 0 -> unary "0" + truncated binary 0 in 2 bits -> 000
        // symbol 7 in 4 bits -> 0111; stream = 0000 111x
        let p = golomb_encode(&[0], &[7], 8, 4).unwrap();
        assert_eq!(p.params, SchemeParams::Golomb { modulus: 5 });
        assert_eq!(p.bitstream, vec![0b0000_1110]);
        assert_eq!(golomb_decode(&p).unwrap(), (vec![0], vec![7]));
    }

    #[test]
    fn dense_layer_costs_about_b_plus_one_bits() {
        let n = 4096u64;
        let positions: Vec<u64> = (0..n).collect();
        let codes: Vec<u32> = (0..n).map(|i| (i % 16) as u32).collect();
        let p = golomb_encode(&positions, &codes, n, 4).unwrap();
        assert_eq!(p.params, SchemeParams::Golomb { modulus: 1 });
        // every run is 0: one unary terminator bit + 4 symbol bits
        assert_eq!(p.bitstream.len() as u64, (n * 5).div_ceil(8));
        let bpp = measure_payload(&p);
        assert!(bpp > 5.0 && bpp < 5.1, "bits/param {bpp}");
        assert_eq!(golomb_decode(&p).unwrap(), (positions, codes));
    }

    #[test]
    fn modulus_tracks_keep_probability() {
        assert_eq!(optimal_golomb_modulus(1.0), 1);
        assert_eq!(optimal_golomb_modulus(0.0), 1);
        assert_eq!(optimal_golomb_modulus(0.5), 1);
        assert_eq!(optimal_golomb_modulus(0.05), 14);
        assert_eq!(optimal_golomb_modulus(0.03), 23);
        assert_eq!(optimal_golomb_modulus(0.01), 69);
    }

    #[test]
    fn corrupted_stream_returns_error_not_partial_output() {
        let (positions, codes) = random_mask(10_000, 0.05, 3);
        let p = golomb_encode(&positions, &codes, 10_000, 4).unwrap();
        // truncate the stream: decoding must fail, not return a prefix
        let mut clipped = p.clone();
        clipped.bitstream.truncate(clipped.bitstream.len() / 2);
        assert!(golomb_decode(&clipped).is_err());
        // declare more kept symbols than the stream holds
        let mut overlong = p.clone();
        overlong.n_kept += 10;
        assert!(golomb_decode(&overlong).is_err());
    }

    #[test]
    fn run_overflow_rejected() {
        let p = golomb_encode(&[0, 1], &[1, 1], 2, 4).unwrap();
        let mut bad = p.clone();
        bad.n_elements = 1; // positions now exceed the layer
        assert!(matches!(
            golomb_decode(&bad),
            Err(CodecError::RunOverflow { .. }) | Err(CodecError::BitIo(_))
        ));
    }

    #[test]
    fn realized_size_near_entropy_on_sparse_mask() {
        let n = 200_000u64;
        let s = 0.95;
        let (positions, codes) = random_mask(n, 1.0 - s, 7);
        let p = golomb_encode(&positions, &codes, n, 4).unwrap();
        let bound = crate::codec::entropy_ratio(s, 4).unwrap().h_comp;
        let bpp = measure_payload(&p);
        assert!(
            bpp <= 1.06 * bound,
            "bits/param {bpp} vs entropy bound {bound}"
        );
        let (dp, dc) = golomb_decode(&p).unwrap();
        assert_eq!((dp, dc), (positions, codes));
        // wire round-trip too
        let bytes = payload_to_bytes(&p);
        let (back, _) = crate::codec::payload_from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            n in 1u64..5000,
            keep in 0.0f64..=1.0,
            bits in 1u32..=16,
            seed in any::<u64>(),
        ) {
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
            let p = golomb_encode(&positions, &codes, n, bits).unwrap();
            prop_assert_eq!(golomb_decode(&p).unwrap(), (positions, codes));
        }
    }
}
