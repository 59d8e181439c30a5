//! Error correction with hash verification.
//!
//! * `Oracle`: Bob's string is replaced by Alice's, `r` seeded random parity
//!   checks of Alice's string are published to account for the leakage, and
//!   the usual `t`-bit tag is verified.
//! * `Syndrome` (`n ≤ 2048`): Alice publishes the `r`-bit syndrome of a sparse
//!   seeded parity-check matrix; Bob decodes by min-sum belief propagation
//!   and the result is verified with the same tag.

use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::pa::Toeplitz;
use crate::rng::{CounterRng, DrawTag};

/// Largest block the syndrome decoder accepts.
pub const SYNDROME_MAX_LEN: usize = 2048;
/// Ones per column of the sparse parity-check matrix.
pub const COLUMN_WEIGHT: usize = 3;
const MAX_FLIPS_FACTOR: usize = 4;
/// Flip rate the decoder's prior assumes.
pub const PRIOR_ERROR_RATE: f64 = 0.02;
const BP_ITERATIONS: usize = 60;
const MIN_SUM_SCALE: f64 = 0.8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EcMode {
    #[default]
    Oracle,
    Syndrome,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EcError {
    #[error("the verification tag needs t >= 1 bits")]
    Budget,
    #[error("strings differ in length ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("syndrome mode supports at most {SYNDROME_MAX_LEN} bits, got {n}")]
    TooLong { n: usize },
}

/// Everything error correction produces. `ec_transcript` and `ec_tag` are
/// public; `corrected` is Bob's secret estimate of Alice's string.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EcOutcome {
    pub mode: EcMode,
    pub corrected: Vec<u8>,
    pub corrections: usize,
    /// Leaked bits accounted for, always `r`.
    pub leak: u64,
    /// The `r` published parity bits.
    pub ec_transcript: Vec<u8>,
    /// Alice's `t`-bit verification tag.
    pub ec_tag: Vec<u8>,
    pub code_seed: u64,
    pub hash_seed: u64,
    /// Whether Bob's tag matched Alice's.
    pub verified: bool,
}

/// `t`-bit tag of `bits` under the hash selected by `seed`.
pub fn verification_tag(bits: &[u8], t: u32, seed: u64) -> Vec<u8> {
    Toeplitz::from_seed(t as usize, bits.len(), seed).apply(bits)
}

/// Whether the tags of `x` and `y_hat` agree.
pub fn verify(x: &[u8], y_hat: &[u8], t: u32, seed: u64) -> bool {
    let h = Toeplitz::from_seed(t as usize, x.len(), seed);
    h.apply(x) == h.apply(y_hat)
}

/// Seeded sparse parity-check matrix stored by columns.
#[derive(Clone, Debug)]
pub struct SparseCode {
    pub checks: usize,
    /// `columns[j]` lists the checks involving bit `j`.
    pub columns: Vec<[u32; COLUMN_WEIGHT]>,
}

impl SparseCode {
    pub fn from_seed(n: usize, checks: usize, seed: u64) -> Self {
        let mut rng = CounterRng::new(seed).stream(0, DrawTag::EcCode);
        let w = COLUMN_WEIGHT.min(checks);
        let columns = (0..n)
            .map(|_| {
                let mut col = [u32::MAX; COLUMN_WEIGHT];
                let mut filled = 0;
                while filled < w {
                    let c = rng.random_range(0..checks) as u32;
                    if !col[..filled].contains(&c) {
                        col[filled] = c;
                        filled += 1;
                    }
                }
                col
            })
            .collect();
        SparseCode { checks, columns }
    }

    fn rows_of(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.columns[j].iter().filter(|&&c| c != u32::MAX).map(|&c| c as usize)
    }

    pub fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        let mut s = alloc::vec![0u8; self.checks];
        for (j, &b) in bits.iter().enumerate() {
            if b & 1 == 1 {
                for c in self.rows_of(j) {
                    s[c] ^= 1;
                }
            }
        }
        s
    }

    /// Normalised min-sum belief propagation on the error pattern
    /// `y ⊕ x`, assuming a prior flip rate of [`PRIOR_ERROR_RATE`], followed
    /// by greedy bit flipping if the syndrome still mismatches. Returns the
    /// corrected string and the number of changed bits; the result may still
    /// violate checks.
    pub fn decode(&self, y: &[u8], target_syndrome: &[u8]) -> (Vec<u8>, usize) {
        let diff: Vec<u8> = self.syndrome(y).iter().zip(target_syndrome).map(|(a, b)| a ^ b).collect();
        let mut fixed = y.to_vec();
        if let Some(e) = self.min_sum(&diff) {
            for (b, e) in fixed.iter_mut().zip(&e) {
                *b ^= e;
            }
        }
        let (fixed, _) = self.bit_flip(&fixed, target_syndrome);
        let changed = fixed.iter().zip(y).filter(|(a, b)| a != b).count();
        (fixed, changed)
    }

    /// Error pattern with syndrome `diff`, or `None` if decoding stalls.
    fn min_sum(&self, diff: &[u8]) -> Option<Vec<u8>> {
        let n = self.columns.len();
        let prior = libm::log((1.0 - PRIOR_ERROR_RATE) / PRIOR_ERROR_RATE);
        // Edge `(j, slot)` is stored at `COLUMN_WEIGHT·j + slot`.
        let mut edges_of: Vec<Vec<usize>> = alloc::vec![Vec::new(); self.checks];
        for j in 0..n {
            for (slot, &c) in self.columns[j].iter().enumerate() {
                if c != u32::MAX {
                    edges_of[c as usize].push(COLUMN_WEIGHT * j + slot);
                }
            }
        }
        let mut to_check = alloc::vec![prior; COLUMN_WEIGHT * n];
        let mut to_var = alloc::vec![0.0f64; COLUMN_WEIGHT * n];
        let mut e = alloc::vec![0u8; n];
        for _ in 0..BP_ITERATIONS {
            for (c, edges) in edges_of.iter().enumerate() {
                let mut sign = if diff[c] == 1 { -1.0 } else { 1.0 };
                let (mut m1, mut m2, mut arg) = (f64::INFINITY, f64::INFINITY, usize::MAX);
                for &ed in edges {
                    let v = to_check[ed];
                    if v < 0.0 {
                        sign = -sign;
                    }
                    let a = v.abs();
                    if a < m1 {
                        m2 = m1;
                        m1 = a;
                        arg = ed;
                    } else if a < m2 {
                        m2 = a;
                    }
                }
                for &ed in edges {
                    let own = if to_check[ed] < 0.0 { -1.0 } else { 1.0 };
                    let mag = if ed == arg { m2 } else { m1 };
                    to_var[ed] = MIN_SUM_SCALE * sign * own * mag;
                }
            }
            for j in 0..n {
                let base = COLUMN_WEIGHT * j;
                let live = self.columns[j].iter().filter(|&&c| c != u32::MAX).count();
                let total = prior + to_var[base..base + live].iter().sum::<f64>();
                e[j] = (total < 0.0) as u8;
                for ed in base..base + live {
                    to_check[ed] = total - to_var[ed];
                }
            }
            if self.syndrome(&e) == diff {
                return Some(e);
            }
        }
        None
    }

    /// Greedy bit flipping: repeatedly flips the bit touching the most
    /// unsatisfied checks (lowest index on ties) while that count exceeds
    /// half the column weight.
    fn bit_flip(&self, y: &[u8], target_syndrome: &[u8]) -> (Vec<u8>, usize) {
        let mut y = y.to_vec();
        let mut unsat: Vec<u8> = self
            .syndrome(&y)
            .iter()
            .zip(target_syndrome)
            .map(|(a, b)| a ^ b)
            .collect();
        let mut counts: Vec<usize> =
            (0..y.len()).map(|j| self.rows_of(j).filter(|&c| unsat[c] == 1).count()).collect();
        let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); self.checks];
        for j in 0..y.len() {
            for c in self.rows_of(j) {
                members[c].push(j);
            }
        }
        let mut flips = 0;
        let limit = MAX_FLIPS_FACTOR * self.checks.max(1);
        while flips < limit && unsat.contains(&1) {
            let (best, &count) = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("non-empty string");
            if 2 * count <= COLUMN_WEIGHT.min(self.checks) {
                break;
            }
            y[best] ^= 1;
            flips += 1;
            for c in self.rows_of(best).collect::<Vec<_>>() {
                unsat[c] ^= 1;
                for &j in &members[c] {
                    if unsat[c] == 1 {
                        counts[j] += 1;
                    } else {
                        counts[j] -= 1;
                    }
                }
            }
        }
        (y, flips)
    }
}

/// Corrects `y` towards `x`, publishing `r` parity bits and a `t`-bit tag.
/// `seed` selects both the code and the hash.
pub fn error_correct(x: &[u8], y: &[u8], r: u64, t: u32, seed: u64, mode: EcMode) -> Result<EcOutcome, EcError> {
    if t < 1 {
        return Err(EcError::Budget);
    }
    if x.len() != y.len() {
        return Err(EcError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let root = CounterRng::new(seed);
    let code_seed = root.derive_seed(0, DrawTag::EcCode);
    let hash_seed = root.derive_seed(0, DrawTag::EcHash);
    let (corrected, ec_transcript) = match mode {
        EcMode::Oracle => {
            let transcript = random_parities(x, r, code_seed);
            (x.to_vec(), transcript)
        }
        EcMode::Syndrome => {
            if x.len() > SYNDROME_MAX_LEN {
                return Err(EcError::TooLong { n: x.len() });
            }
            if r == 0 {
                (y.to_vec(), Vec::new())
            } else {
                let code = SparseCode::from_seed(x.len(), r as usize, code_seed);
                let s = code.syndrome(x);
                let (fixed, _) = code.decode(y, &s);
                (fixed, s)
            }
        }
    };
    let corrections = corrected.iter().zip(y).filter(|(a, b)| a != b).count();
    let ec_tag = verification_tag(x, t, hash_seed);
    let verified = verification_tag(&corrected, t, hash_seed) == ec_tag;
    Ok(EcOutcome {
        mode,
        corrected,
        corrections,
        leak: r,
        ec_transcript,
        ec_tag,
        code_seed,
        hash_seed,
        verified,
    })
}

/// `r` parities of uniformly random subsets of `x`.
fn random_parities(x: &[u8], r: u64, seed: u64) -> Vec<u8> {
    let mut rng = CounterRng::new(seed).stream(0, DrawTag::EcCode);
    (0..r)
        .map(|_| {
            let mut p = 0u8;
            for chunk in x.chunks(64) {
                let mask = rng.next_u64();
                for (k, &b) in chunk.iter().enumerate() {
                    p ^= b & ((mask >> k) & 1) as u8;
                }
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut s = CounterRng::new(seed).stream(0, DrawTag::Auxiliary);
        (0..n).map(|_| (s.next_u32() & 1) as u8).collect()
    }

    #[test]
    fn equal_strings_pass_untouched() {
        let x = random_bits(500, 1);
        for mode in [EcMode::Oracle, EcMode::Syndrome] {
            let out = error_correct(&x, &x, 100, 64, 7, mode).unwrap();
            assert!(out.verified);
            assert_eq!(out.corrections, 0);
            assert_eq!(out.leak, 100);
            assert_eq!(out.ec_transcript.len(), 100);
            assert_eq!(out.ec_tag.len(), 64);
        }
    }

    #[test]
    fn budget_and_length_errors() {
        let x = random_bits(10, 1);
        assert_eq!(error_correct(&x, &x, 0, 0, 1, EcMode::Oracle), Err(EcError::Budget));
        assert!(matches!(error_correct(&x, &x[..9], 0, 8, 1, EcMode::Oracle), Err(EcError::LengthMismatch { .. })));
        let long = random_bits(SYNDROME_MAX_LEN + 1, 2);
        assert!(matches!(error_correct(&long, &long, 10, 8, 1, EcMode::Syndrome), Err(EcError::TooLong { .. })));
    }

    #[test]
    fn syndrome_mode_fixes_few_errors() {
        let x = random_bits(1024, 3);
        let mut y = x.clone();
        for j in [5usize, 100, 333, 700, 1000] {
            y[j] ^= 1;
        }
        let out = error_correct(&x, &y, 300, 64, 11, EcMode::Syndrome).unwrap();
        assert!(out.verified);
        assert_eq!(out.corrected, x);
        assert_eq!(out.corrections, 5);
    }

    #[test]
    fn failed_decoding_is_caught_by_the_tag() {
        let x = random_bits(256, 4);
        let y = random_bits(256, 5);
        let out = error_correct(&x, &y, 10, 64, 1, EcMode::Syndrome).unwrap();
        assert!(!out.verified);
    }
}
