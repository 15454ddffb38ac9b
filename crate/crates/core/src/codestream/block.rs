//! Sign-magnitude bitplane coding of a single codeblock.
//!
//! Bitplanes are visited from `MB - 1` down to 0 in one pass each. Every
//! coefficient is coded in one of three states: still insignificant
//! (significance bit), just became significant (sign bit), or already
//! significant (refinement bit). Each state has two adaptive contexts
//! selected by whether any of the 8 neighbours is significant.

use super::rangecoder::{BitModel, Decoder, Encoder};

#[derive(Default)]
struct Contexts {
    significance: [BitModel; 2],
    sign: [BitModel; 2],
    refinement: [BitModel; 2],
}

/// Significance map with a one-sample border so neighbour lookups need no
/// bounds checks.
struct SignificanceMap {
    stride: usize,
    flags: Vec<bool>,
}

impl SignificanceMap {
    fn new(width: usize, height: usize) -> Self {
        Self {
            stride: width + 2,
            flags: vec![false; (width + 2) * (height + 2)],
        }
    }

    #[inline]
    fn idx(&self, x: usize, y: usize) -> usize {
        (y + 1) * self.stride + x + 1
    }

    #[inline]
    fn get(&self, x: usize, y: usize) -> bool {
        self.flags[self.idx(x, y)]
    }

    #[inline]
    fn set(&mut self, x: usize, y: usize) {
        let i = self.idx(x, y);
        self.flags[i] = true;
    }

    #[inline]
    fn neighbour_flag(&self, x: usize, y: usize) -> usize {
        let c = self.idx(x, y);
        let s = self.stride;
        let f = &self.flags;
        (f[c - s - 1] | f[c - s] | f[c - s + 1] | f[c - 1] | f[c + 1] | f[c + s - 1] | f[c + s] | f[c + s + 1])
            as usize
    }
}

/// Number of significant bitplanes: `floor(log2(max |c|)) + 1`, or 0 when
/// every coefficient is zero.
pub fn significant_bitplanes(coeffs: &[i32]) -> u8 {
    let max = coeffs.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
    (u32::BITS - max.leading_zeros()) as u8
}

/// Code a `width x height` block stored row-major. Returns `(MB, payload)`;
/// an all-zero block has an empty payload.
pub fn encode_block(coeffs: &[i32], width: usize, height: usize) -> (u8, Vec<u8>) {
    debug_assert_eq!(coeffs.len(), width * height);
    let mb = significant_bitplanes(coeffs);
    if mb == 0 {
        return (0, Vec::new());
    }
    let mut enc = Encoder::new();
    let mut ctx = Contexts::default();
    let mut sig = SignificanceMap::new(width, height);
    for plane in (0..mb as u32).rev() {
        for y in 0..height {
            for x in 0..width {
                let c = coeffs[y * width + x];
                let bit = (c.unsigned_abs() >> plane) & 1 == 1;
                let nb = sig.neighbour_flag(x, y);
                if sig.get(x, y) {
                    enc.encode(&mut ctx.refinement[nb], bit);
                } else {
                    enc.encode(&mut ctx.significance[nb], bit);
                    if bit {
                        enc.encode(&mut ctx.sign[nb], c < 0);
                        sig.set(x, y);
                    }
                }
            }
        }
    }
    (mb, enc.finish())
}

/// Inverse of [`encode_block`]. Returns `None` if the payload ends before
/// all bitplanes are decoded.
pub fn decode_block(payload: &[u8], width: usize, height: usize, mb: u8) -> Option<Vec<i32>> {
    let mut out = vec![0i32; width * height];
    if mb == 0 {
        return payload.is_empty().then_some(out);
    }
    if mb > 31 {
        return None;
    }
    let mut mags = vec![0u32; width * height];
    let mut negative = vec![false; width * height];
    let mut dec = Decoder::new(payload);
    let mut ctx = Contexts::default();
    let mut sig = SignificanceMap::new(width, height);
    for plane in (0..mb as u32).rev() {
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let nb = sig.neighbour_flag(x, y);
                if sig.get(x, y) {
                    if dec.decode(&mut ctx.refinement[nb]) {
                        mags[i] |= 1 << plane;
                    }
                } else if dec.decode(&mut ctx.significance[nb]) {
                    mags[i] |= 1 << plane;
                    negative[i] = dec.decode(&mut ctx.sign[nb]);
                    sig.set(x, y);
                }
            }
        }
    }
    if dec.overran() {
        return None;
    }
    for ((o, &m), &neg) in out.iter_mut().zip(&mags).zip(&negative) {
        *o = if neg { -(m as i32) } else { m as i32 };
    }
    Some(out)
}
