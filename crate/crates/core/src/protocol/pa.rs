//! Binary Toeplitz hashing, used for privacy amplification and for the
//! error-correction verification tag.
//!
//! Bits are stored one per byte (`0` or `1`) at the API boundary and packed
//! into `u64` words internally.

use alloc::vec::Vec;

use rand::RngCore;

use crate::rng::{CounterRng, DrawTag};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PaError {
    #[error("cannot extract {ell} bits from {n} input bits")]
    Length { ell: usize, n: usize },
    #[error("diagonal string has {found} bits, a {rows}x{cols} Toeplitz matrix needs {expected}")]
    Diagonals { rows: usize, cols: usize, expected: usize, found: usize },
}

/// A `rows × cols` binary Toeplitz matrix `T[i][j] = s[i − j + cols − 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Toeplitz {
    rows: usize,
    cols: usize,
    /// The `rows + cols − 1` diagonal bits, packed little-endian.
    diag: Vec<u64>,
}

fn pack(bits: &[u8]) -> Vec<u64> {
    let mut words = alloc::vec![0u64; bits.len().div_ceil(64) + 1];
    for (i, &b) in bits.iter().enumerate() {
        words[i / 64] |= ((b & 1) as u64) << (i % 64);
    }
    words
}

/// 64 bits of `words` starting at bit `offset` (zero-padded past the end).
fn window(words: &[u64], offset: usize) -> u64 {
    let q = offset / 64;
    let r = offset % 64;
    let lo = words.get(q).copied().unwrap_or(0);
    if r == 0 {
        return lo;
    }
    let hi = words.get(q + 1).copied().unwrap_or(0);
    (lo >> r) | (hi << (64 - r))
}

impl Toeplitz {
    /// The matrix drawn from `seed`.
    pub fn from_seed(rows: usize, cols: usize, seed: u64) -> Self {
        let nbits = (rows + cols).saturating_sub(1);
        let mut stream = CounterRng::new(seed).stream(0, DrawTag::PaHash);
        let mut diag: Vec<u64> = (0..nbits.div_ceil(64) + 1).map(|_| stream.next_u64()).collect();
        if let Some(last) = diag.last_mut() {
            *last = 0;
        }
        if !nbits.is_multiple_of(64) {
            let idx = nbits / 64;
            diag[idx] &= (1u64 << (nbits % 64)) - 1;
        }
        Toeplitz { rows, cols, diag }
    }

    /// The matrix with the given diagonal bits, `s[0]` being the bottom-left
    /// corner and `s[rows + cols − 2]` the top-right corner.
    pub fn from_diagonals(rows: usize, cols: usize, diagonals: &[u8]) -> Result<Self, PaError> {
        let expected = (rows + cols).saturating_sub(1);
        if diagonals.len() != expected {
            return Err(PaError::Diagonals { rows, cols, expected, found: diagonals.len() });
        }
        Ok(Toeplitz { rows, cols, diag: pack(diagonals) })
    }

    /// The square identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut s = alloc::vec![0u8; (2 * n).saturating_sub(1)];
        if n > 0 {
            s[n - 1] = 1;
        }
        Toeplitz::from_diagonals(n, n, &s).expect("consistent sizes")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry `T[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> u8 {
        let k = i + self.cols - 1 - j;
        ((self.diag[k / 64] >> (k % 64)) & 1) as u8
    }

    /// `T·x` over GF(2). `x` must have `cols` entries.
    pub fn apply(&self, x: &[u8]) -> Vec<u8> {
        assert_eq!(x.len(), self.cols, "input length must match the matrix width");
        // Row i is the diagonal string read from offset i, against x reversed.
        let reversed: Vec<u8> = x.iter().rev().copied().collect();
        let xr = pack(&reversed);
        let words = self.cols.div_ceil(64);
        (0..self.rows)
            .map(|i| {
                let mut acc = 0u64;
                for w in 0..words {
                    acc ^= window(&self.diag, i + 64 * w) & xr[w];
                }
                (acc.count_ones() & 1) as u8
            })
            .collect()
    }
}

/// Compresses `bits` to `ell` bits with the Toeplitz hash selected by `seed`.
pub fn privacy_amplify(bits: &[u8], ell: usize, seed: u64) -> Result<Vec<u8>, PaError> {
    if ell > bits.len() {
        return Err(PaError::Length { ell, n: bits.len() });
    }
    if ell == 0 {
        return Ok(Vec::new());
    }
    Ok(Toeplitz::from_seed(ell, bits.len(), seed).apply(bits))
}
