//! Statistical reconciliation model and Toeplitz privacy amplification.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitOrigin {
    Corrected,
    Amplified,
}

/// Packed bit string, most significant bit first within each byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBlock {
    pub bits: Vec<u8>,
    pub len: usize,
    pub origin: BitOrigin,
    pub block_id: u64,
}

impl BitBlock {
    pub fn zeros(len: usize, origin: BitOrigin, block_id: u64) -> Self {
        BitBlock { bits: vec![0; len.div_ceil(8)], len, origin, block_id }
    }

    pub fn from_bools(v: &[bool], origin: BitOrigin, block_id: u64) -> Self {
        let mut b = Self::zeros(v.len(), origin, block_id);
        for (i, &bit) in v.iter().enumerate() {
            b.set(i, bit);
        }
        b
    }

    pub fn random<R: Rng>(len: usize, rng: &mut R, origin: BitOrigin, block_id: u64) -> Self {
        let mut b = Self::zeros(len, origin, block_id);
        rng.fill(&mut b.bits[..]);
        b.clear_tail();
        b
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        let mask = 1u8 << (7 - i % 8);
        if v {
            self.bits[i / 8] |= mask;
        } else {
            self.bits[i / 8] &= !mask;
        }
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 8;
        if rem != 0 {
            if let Some(last) = self.bits.last_mut() {
                *last &= 0xffu8 << (8 - rem);
            }
        }
    }

    pub fn xor(&self, other: &BitBlock) -> BitBlock {
        assert_eq!(self.len, other.len);
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect();
        BitBlock { bits, ..self.clone() }
    }

    /// 64 bits starting at bit `start`, MSB-aligned, zero-padded past the end.
    fn word_at(&self, start: usize) -> u64 {
        let byte = start / 8;
        let shift = start % 8;
        let mut acc: u128 = 0;
        for k in 0..9 {
            let b = self.bits.get(byte + k).copied().unwrap_or(0) as u128;
            acc = (acc << 8) | b;
        }
        // acc holds 72 bits; drop the leading `shift` bits and keep 64.
        ((acc << shift) >> 8) as u64
    }

    /// Write as an 8-byte little-endian bit count followed by the packed bytes.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.len as u64).to_le_bytes())?;
        w.write_all(&self.bits)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, origin: BitOrigin, block_id: u64) -> Result<Self> {
        let mut hdr = [0u8; 8];
        r.read_exact(&mut hdr)?;
        let len = u64::from_le_bytes(hdr) as usize;
        let mut bits = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut bits)?;
        Ok(BitBlock { bits, len, origin, block_id })
    }
}

/// Drop each frame independently with probability `fer`.
pub fn simulate_reconciliation(n_frames: usize, _beta: f64, fer: f64, seed: u64) -> Result<(Vec<usize>, f64)> {
    if !(0.0..1.0).contains(&fer) {
        return Err(Error::InvalidInput(format!("FER must lie in [0, 1) ({fer})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: Vec<usize> = (0..n_frames).filter(|_| rng.gen::<f64>() >= fer).collect();
    let frac = if n_frames == 0 { 0.0 } else { kept.len() as f64 / n_frames as f64 };
    Ok((kept, frac))
}

/// Toeplitz hash: out[j] = XOR_i seed[j − i + n − 1] & input[i].
///
/// Row j of the matrix read left to right is the reversed seed window
/// starting at m − 1 − j, so each output bit is the parity of a word-wise AND.
pub fn toeplitz_hash(input: &BitBlock, seed: &BitBlock, out_len: usize) -> Result<BitBlock> {
    let n = input.len;
    if n == 0 || out_len == 0 {
        return Err(Error::InvalidInput("input and output lengths must be positive".into()));
    }
    if seed.len != n + out_len - 1 {
        return Err(Error::InvalidInput(format!(
            "seed length {} does not match input {} + output {} - 1",
            seed.len, n, out_len
        )));
    }
    let total = seed.len;
    let mut rev = BitBlock::zeros(total, seed.origin, seed.block_id);
    for k in 0..total {
        if seed.get(total - 1 - k) {
            rev.set(k, true);
        }
    }
    let words = n.div_ceil(64);
    let in_words: Vec<u64> = (0..words).map(|w| input.word_at(w * 64)).collect();
    let tail_mask = if n.is_multiple_of(64) { u64::MAX } else { u64::MAX << (64 - n % 64) };

    let mut out = BitBlock::zeros(out_len, BitOrigin::Amplified, input.block_id);
    for j in 0..out_len {
        let off = out_len - 1 - j;
        let mut acc = 0u64;
        for (w, &iw) in in_words.iter().enumerate() {
            let mut r = rev.word_at(off + w * 64);
            if w == words - 1 {
                r &= tail_mask;
            }
            acc ^= r & iw;
        }
        if acc.count_ones() % 2 == 1 {
            out.set(j, true);
        }
    }
    Ok(out)
}

pub fn pa_output_length(n_kept_symbols: u64, secret_fraction_bits: f64) -> u64 {
    let v = (n_kept_symbols as f64 * secret_fraction_bits).floor();
    if v > 0.0 {
        v as u64
    } else {
        0
    }
}
