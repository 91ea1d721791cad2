//! MSB-first bit-level I/O over byte buffers.
//!
//! All packed fields in the sparse payload formats go through these two
//! types. Bits fill each byte from the most significant position down; the
//! final byte of a stream is zero-padded.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitIoError {
    #[error("bitstream exhausted: needed {wanted} more bit(s)")]
    Exhausted { wanted: u32 },
    #[error("unary run exceeded limit of {limit} bits")]
    UnaryOverflow { limit: u64 },
}

/// Accumulates bits MSB-first into a byte buffer.
#[derive(Debug, Default)]
pub struct BitWriter {
    buf: Vec<u8>,
    cur: u8,
    used: u8,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn write_bit(&mut self, bit: bool) {
        if bit {
            self.cur |= 1 << (7 - self.used);
        }
        self.used += 1;
        self.bits += 1;
        if self.used == 8 {
            self.buf.push(self.cur);
            self.cur = 0;
            self.used = 0;
        }
    }

    /// Writes the low `nbits` of `value`, most significant bit first.
    pub fn write_bits(&mut self, value: u64, nbits: u32) {
        debug_assert!(nbits <= 64);
        for i in (0..nbits).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    /// Unary code: `q` one-bits followed by a zero terminator.
    pub fn write_unary(&mut self, q: u64) {
        for _ in 0..q {
            self.write_bit(true);
        }
        self.write_bit(false);
    }

    /// Number of bits written so far.
    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    /// Flushes the partial byte (zero-padded) and returns the buffer.
    pub fn into_bytes(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.buf.push(self.cur);
        }
        self.buf
    }
}

/// Reads bits MSB-first from a byte slice.
#[derive(Debug)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    #[inline]
    pub fn read_bit(&mut self) -> Result<bool, BitIoError> {
        let byte = (self.pos / 8) as usize;
        if byte >= self.data.len() {
            return Err(BitIoError::Exhausted { wanted: 1 });
        }
        let bit = (self.data[byte] >> (7 - (self.pos % 8) as u8)) & 1;
        self.pos += 1;
        Ok(bit == 1)
    }

    pub fn read_bits(&mut self, nbits: u32) -> Result<u64, BitIoError> {
        debug_assert!(nbits <= 64);
        let mut v = 0u64;
        for _ in 0..nbits {
            v = (v << 1) | u64::from(self.read_bit()?);
        }
        Ok(v)
    }

    /// Reads a unary code, refusing runs longer than `limit` bits.
    pub fn read_unary(&mut self, limit: u64) -> Result<u64, BitIoError> {
        let mut q = 0u64;
        while self.read_bit()? {
            q += 1;
            if q > limit {
                return Err(BitIoError::UnaryOverflow { limit });
            }
        }
        Ok(q)
    }

    pub fn bits_consumed(&self) -> u64 {
        self.pos
    }
}
