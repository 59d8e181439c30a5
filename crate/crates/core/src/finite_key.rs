//! Finite-key bound and the optimisation of its free parameter `ν`.
//!
//! All probabilities are also carried in log₂ scale: `ε_pa` routinely
//! underflows `f64` for long keys while its logarithm stays well behaved.

use alloc::vec::Vec;

use crate::geometry::{overlap_c, SourceTriple};

const LN2: f64 = core::f64::consts::LN_2;

/// Number of log-spaced grid points bracketing the `ν` optimum.
pub const NU_GRID_POINTS: usize = 1000;
const GOLDEN_ITERATIONS: usize = 200;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FiniteKeyError {
    #[error("{what} = {value} is outside the domain of {function}")]
    Domain { function: &'static str, what: &'static str, value: f64 },
    #[error("invalid security input {field}: {reason}")]
    InvalidInput { field: &'static str, reason: &'static str },
    #[error("no nu satisfies 0 < nu <= 1/2 - delta, nu < 1/(2T), 0 < delta'(nu) < 1/2")]
    InfeasibleWindow,
}

fn domain(function: &'static str, what: &'static str, value: f64) -> FiniteKeyError {
    FiniteKeyError::Domain { function, what, value }
}

/// What the caller fixes: the key length, or the overall failure budget.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum KeyTarget {
    /// Fixed `ℓ`; `ν` minimises `ε_pa + ε_pe`.
    KeyLength(u64),
    /// Fixed `ε_target`; `ν` and `ℓ` are chosen jointly to maximise `ℓ`
    /// subject to `2^{-t} + ε_pa + ε_pe ≤ ε_target`.
    EpsilonTarget(f64),
}

/// Inputs of the finite-key bound.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SecurityInputs {
    pub n1: u64,
    pub k1: u64,
    pub k2: u64,
    pub k3: u64,
    pub k4: u64,
    /// Error-rate threshold `δ`.
    pub delta: f64,
    /// Zero-rate threshold `δ_mismatch`.
    pub delta_mismatch: f64,
    /// `T = |a|² + |b|²`.
    #[cfg_attr(feature = "serde", serde(rename = "T"))]
    pub t_weight: f64,
    /// Basis overlap `c`.
    pub c: f64,
    /// Error-correction leakage in bits.
    pub r: u64,
    /// Verification-hash length in bits.
    #[cfg_attr(feature = "serde", serde(rename = "t"))]
    pub hash_bits: u32,
    pub target: KeyTarget,
}

impl SecurityInputs {
    /// Fills `T` and `c` from a source triple.
    #[allow(clippy::too_many_arguments)]
    pub fn for_source(
        triple: &SourceTriple,
        n1: u64,
        k: [u64; 4],
        delta: f64,
        delta_mismatch: f64,
        r: u64,
        hash_bits: u32,
        target: KeyTarget,
    ) -> Self {
        SecurityInputs {
            n1,
            k1: k[0],
            k2: k[1],
            k3: k[2],
            k4: k[3],
            delta,
            delta_mismatch,
            t_weight: triple.t,
            c: overlap_c(triple),
            r,
            hash_bits,
            target,
        }
    }

    pub fn validate(&self) -> Result<(), FiniteKeyError> {
        let bad = |field, reason| Err(FiniteKeyError::InvalidInput { field, reason });
        for (field, v) in [("n1", self.n1), ("k1", self.k1), ("k2", self.k2), ("k3", self.k3), ("k4", self.k4)] {
            if v == 0 {
                return bad(field, "must be a positive integer");
            }
        }
        // δ = 1/2 is accepted here and rejected by the empty ν window.
        if !(0.0..=0.5).contains(&self.delta) {
            return bad("delta", "must lie in [0, 1/2]");
        }
        if !(0.0..=1.0).contains(&self.delta_mismatch) {
            return bad("delta_mismatch", "must lie in [0, 1]");
        }
        if !(self.t_weight > 0.5) || !self.t_weight.is_finite() {
            return bad("T", "requires |a|^2 + |b|^2 > 1/2");
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return bad("c", "must lie in (0, 1]");
        }
        if self.hash_bits == 0 {
            return bad("t", "must be a positive integer");
        }
        if let KeyTarget::EpsilonTarget(e) = self.target {
            if !(e > 0.0 && e < 1.0) {
                return bad("epsilon_target", "must lie in (0, 1)");
            }
        }
        Ok(())
    }

    /// Total number of rounds the inputs consume.
    pub fn rounds_used(&self) -> u64 {
        self.n1 + self.k1 + self.k2 + self.k3 + self.k4
    }
}

/// `h₂(x) = −x·log₂x − (1−x)·log₂(1−x)` with `0·log 0 = 0`.
pub fn binary_entropy(x: f64) -> Result<f64, FiniteKeyError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("binary_entropy", "x", x));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-(x * libm::log2(x) + (1.0 - x) * libm::log2(1.0 - x)))
}

/// `δ′(ν) = δ_mm + ν − (1/(2T) − ν)(1 − 2δ − 2ν)`.
pub fn delta_prime(nu: f64, delta: f64, delta_mismatch: f64, t_weight: f64) -> Result<f64, FiniteKeyError> {
    if !(nu > 0.0 && nu <= 0.5 - delta) {
        return Err(domain("delta_prime", "nu", nu));
    }
    if !(nu < 0.5 / t_weight) {
        return Err(domain("delta_prime", "nu", nu));
    }
    Ok(delta_prime_unchecked(nu, delta, delta_mismatch, t_weight))
}

fn delta_prime_unchecked(nu: f64, delta: f64, delta_mismatch: f64, t_weight: f64) -> f64 {
    delta_mismatch + nu - (0.5 / t_weight - nu) * (1.0 - 2.0 * delta - 2.0 * nu)
}

/// Natural logarithms of the three exponential terms inside `ε(ν)`:
/// the information-round Hoeffding term, the `k₄` sampling term and the `k₂`
/// sampling term, in that order.
pub fn epsilon_exponents(nu: f64, n1: u64, k2: u64, k4: u64, t_weight: f64) -> Result<[f64; 3], FiniteKeyError> {
    let w = 0.5 / t_weight;
    if !(nu > 0.0 && nu < w) {
        return Err(domain("epsilon_nu", "nu", nu));
    }
    let n1 = n1 as f64;
    let (k2, k4) = (k2 as f64, k4 as f64);
    let v2 = nu * nu;
    let b4 = n1 * (w - nu);
    Ok([
        -2.0 * n1 * v2,
        -2.0 * b4 * k4 * k4 * v2 / ((k4 + b4) * (k4 + 1.0)),
        -2.0 * n1 * k2 * k2 * v2 / ((k2 + n1) * (k2 + 1.0)),
    ])
}

/// The three exponential terms inside `ε(ν)`.
pub fn epsilon_terms(nu: f64, n1: u64, k2: u64, k4: u64, t_weight: f64) -> Result<[f64; 3], FiniteKeyError> {
    let e = epsilon_exponents(nu, n1, k2, k4, t_weight)?;
    Ok([libm::exp(e[0]), libm::exp(e[1]), libm::exp(e[2])])
}

/// `ε(ν)`, the square root of the sum of [`epsilon_terms`].
pub fn epsilon_nu(nu: f64, n1: u64, k2: u64, k4: u64, t_weight: f64) -> Result<f64, FiniteKeyError> {
    let e = epsilon_exponents(nu, n1, k2, k4, t_weight)?;
    Ok(libm::exp(0.5 * log_sum_exp(&e)))
}

/// `ε_pe(ν) = 2·ε(ν)`.
pub fn epsilon_pe(nu: f64, n1: u64, k2: u64, k4: u64, t_weight: f64) -> Result<f64, FiniteKeyError> {
    Ok(2.0 * epsilon_nu(nu, n1, k2, k4, t_weight)?)
}

fn ln_epsilon_pe(nu: f64, n1: u64, k2: u64, k4: u64, t_weight: f64) -> f64 {
    let e = epsilon_exponents(nu, n1, k2, k4, t_weight).expect("nu checked by caller");
    LN2 + 0.5 * log_sum_exp(&e)
}

/// Exponent `n₁(log₂(1/c) − h₂(δ′))` of the privacy-amplification term.
fn pa_min_entropy(n1: u64, c: f64, delta_p: f64) -> f64 {
    let h = binary_entropy(delta_p).expect("delta' checked by caller");
    n1 as f64 * (-libm::log2(c) - h)
}

fn check_pa(function: &'static str, c: f64, delta_p: f64) -> Result<(), FiniteKeyError> {
    if !(delta_p > 0.0 && delta_p < 0.5) {
        return Err(domain(function, "delta'", delta_p));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(domain(function, "c", c));
    }
    Ok(())
}

/// `log₂ ε_pa = −1 + (−n₁(log₂(1/c) − h₂(δ′)) + r + t + ℓ)/2`.
pub fn epsilon_pa_log2(n1: u64, c: f64, delta_p: f64, r: u64, hash_bits: u32, ell: u64) -> Result<f64, FiniteKeyError> {
    check_pa("epsilon_pa", c, delta_p)?;
    let exponent = -pa_min_entropy(n1, c, delta_p) + r as f64 + hash_bits as f64 + ell as f64;
    Ok(-1.0 + 0.5 * exponent)
}

/// `ε_pa = ½·√(2^{−n₁(log₂(1/c) − h₂(δ′)) + r + t + ℓ})`.
pub fn epsilon_pa(n1: u64, c: f64, delta_p: f64, r: u64, hash_bits: u32, ell: u64) -> Result<f64, FiniteKeyError> {
    Ok(libm::exp2(epsilon_pa_log2(n1, c, delta_p, r, hash_bits, ell)?))
}

/// Result of inverting `ε_pa` for the key length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KeyLength {
    pub length: u64,
    /// `false` when even `ℓ = 0` exceeds the target.
    pub feasible: bool,
}

/// Largest `ℓ ≥ 0` with `ε_pa(ℓ) ≤ target`.
pub fn max_key_length(
    target: f64,
    n1: u64,
    c: f64,
    delta_p: f64,
    r: u64,
    hash_bits: u32,
) -> Result<KeyLength, FiniteKeyError> {
    check_pa("max_key_length", c, delta_p)?;
    if !(target > 0.0) || !target.is_finite() {
        return Err(domain("max_key_length", "epsilon_pa_target", target));
    }
    Ok(max_key_length_log2(libm::log2(target), n1, c, delta_p, r, hash_bits))
}

fn max_key_length_log2(log2_target: f64, n1: u64, c: f64, delta_p: f64, r: u64, hash_bits: u32) -> KeyLength {
    let pa = |ell: u64| epsilon_pa_log2(n1, c, delta_p, r, hash_bits, ell).expect("checked");
    let raw = pa_min_entropy(n1, c, delta_p) - r as f64 - hash_bits as f64 - 2.0 * (-1.0 - log2_target);
    let mut ell = if raw.is_finite() && raw > 0.0 { libm::floor(raw) as u64 } else { 0 };
    while ell > 0 && pa(ell) > log2_target {
        ell -= 1;
    }
    while pa(ell + 1) <= log2_target {
        ell += 1;
    }
    KeyLength { length: ell, feasible: pa(ell) <= log2_target }
}

/// Caveats every report carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Assumption {
    /// The overlap written with a bar in the key-length corollaries is taken to
    /// be the same `c` defined from the basis overlaps.
    CBarIsC,
    /// `ε(ν)² < Pr(F_pe = ✓)` depends on the attack and is assumed, not checked.
    PeAcceptancePrecondition,
    /// `ν` and `ℓ` were optimised jointly for a fixed total budget.
    JointNuAndLength,
}

impl Assumption {
    pub fn note(self) -> &'static str {
        match self {
            Assumption::CBarIsC => "c-bar in the key-length bound is taken equal to the basis overlap c",
            Assumption::PeAcceptancePrecondition => {
                "assumes epsilon(nu)^2 < Pr(F_pe passes); this depends on the attack and is not computed"
            }
            Assumption::JointNuAndLength => {
                "nu and the key length were chosen jointly for a fixed failure budget"
            }
        }
    }
}

/// Which optimisation produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizationMode {
    MinimizeBoundAtFixedLength,
    MaximizeLengthAtFixedBudget,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SecurityReport {
    pub mode: OptimizationMode,
    pub nu: f64,
    pub delta_prime: f64,
    pub epsilon_nu: f64,
    pub epsilon_pa: f64,
    pub epsilon_pe: f64,
    pub total_bound: f64,
    pub log2_epsilon_pa: f64,
    pub log2_epsilon_pe: f64,
    pub log2_total_bound: f64,
    /// `log₂(1/c) − h₂(δ′(ν*))`, secret bits per information round before leakage.
    pub rate_per_round: f64,
    /// The fixed `ℓ`, or `ℓ_max` when optimising for a budget.
    pub key_length: u64,
    /// Whether the bound meets the budget (always `true` at fixed length).
    pub feasible: bool,
    pub epsilon_target: Option<f64>,
    pub assumptions: Vec<Assumption>,
}

impl SecurityReport {
    /// `true` for the outcomes the command line reports as a negative verdict.
    pub fn is_negative(&self) -> bool {
        !self.feasible || self.key_length == 0
    }
}

/// Interval of admissible `ν`: `(lo, hi]` with `δ′` strictly inside `(0, 1/2)`.
fn nu_window(inp: &SecurityInputs) -> Option<(f64, f64)> {
    let w = 0.5 / inp.t_weight;
    let cap = (0.5 - inp.delta).min(w * (1.0 - 1e-12));
    if !(cap > 0.0) {
        return None;
    }
    let dp = |nu: f64| delta_prime_unchecked(nu, inp.delta, inp.delta_mismatch, inp.t_weight);
    // δ′ is strictly increasing in ν on the window.
    let lo = if dp(0.0) >= 0.0 { 0.0 } else { bisect(&dp, 0.0, cap, 0.0) };
    let hi = if dp(cap) < 0.5 { cap } else { bisect(&dp, 0.0, cap, 0.5) };
    if !(hi > lo) {
        return None;
    }
    Some((lo, hi))
}

/// Largest point in `[lo, hi]` with `f ≤ level` for increasing `f`.
fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, level: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

struct Evaluation {
    nu: f64,
    delta_prime: f64,
    score: f64,
}

/// Minimises `score` over the window: log-spaced grid, then golden-section
/// refinement between the neighbours of the best grid point. Points where
/// `score` is not finite count as infeasible.
fn minimise(lo: f64, hi: f64, inp: &SecurityInputs, score: &dyn Fn(f64, f64) -> f64) -> Option<Evaluation> {
    let eval = |nu: f64| -> Option<Evaluation> {
        if !(nu > lo && nu <= hi) {
            return None;
        }
        let d = delta_prime_unchecked(nu, inp.delta, inp.delta_mismatch, inp.t_weight);
        if !(d > 0.0 && d < 0.5) {
            return None;
        }
        let s = score(nu, d);
        s.is_finite().then_some(Evaluation { nu, delta_prime: d, score: s })
    };
    let span = hi - lo;
    let log_min = libm::log(1e-9);
    let grid: Vec<f64> = (0..NU_GRID_POINTS)
        .map(|i| {
            let f = i as f64 / (NU_GRID_POINTS - 1) as f64;
            if i == NU_GRID_POINTS - 1 {
                hi
            } else {
                lo + span * libm::exp(log_min * (1.0 - f))
            }
        })
        .collect();
    let mut best: Option<(usize, Evaluation)> = None;
    for (i, &nu) in grid.iter().enumerate() {
        if let Some(e) = eval(nu) {
            // Strict comparison keeps the smaller ν on ties.
            if best.as_ref().is_none_or(|(_, b)| e.score < b.score) {
                best = Some((i, e));
            }
        }
    }
    let (i, grid_best) = best?;
    let mut a = if i == 0 { lo + span * 1e-12 } else { grid[i - 1] };
    let mut b = if i + 1 < grid.len() { grid[i + 1] } else { hi };
    let inv_phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    let f = |nu: f64| eval(nu).map_or(f64::INFINITY, |e| e.score);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERATIONS {
        if b - a <= 1e-15 * hi {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    let refined = if f1 <= f2 { eval(x1) } else { eval(x2) };
    match refined {
        Some(r) if r.score < grid_best.score => Some(r),
        _ => Some(grid_best),
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(xs.iter().map(|x| libm::exp(x - m)).sum::<f64>())
}

/// Optimises `ν` (and `ℓ`, when a budget is given) and reports the bound.
pub fn optimize_nu(inp: &SecurityInputs) -> Result<SecurityReport, FiniteKeyError> {
    inp.validate()?;
    let (lo, hi) = nu_window(inp).ok_or(FiniteKeyError::InfeasibleWindow)?;
    let ln_pa = |ell: f64, d: f64| -> f64 {
        let exponent = -pa_min_entropy(inp.n1, inp.c, d) + inp.r as f64 + inp.hash_bits as f64 + ell;
        LN2 * (-1.0 + 0.5 * exponent)
    };
    let ln_pe = |nu: f64| ln_epsilon_pe(nu, inp.n1, inp.k2, inp.k4, inp.t_weight);
    let fixed = |ell: u64| {
        minimise(lo, hi, inp, &|nu, d| log_sum_exp(&[ln_pa(ell as f64, d), ln_pe(nu)]))
    };

    let (mode, best, key_length, feasible, target) = match inp.target {
        KeyTarget::KeyLength(ell) => {
            let best = fixed(ell).ok_or(FiniteKeyError::InfeasibleWindow)?;
            (OptimizationMode::MinimizeBoundAtFixedLength, best, ell, true, None)
        }
        KeyTarget::EpsilonTarget(eps) => {
            let ln_tag = -(inp.hash_bits as f64) * LN2;
            // Budget left for ε_pa once 2^{-t} and ε_pe are paid, in log₂.
            let budget_log2 = |nu: f64| -> f64 {
                let rest = eps - libm::exp(ln_tag) - libm::exp(ln_pe(nu));
                if rest > 0.0 { libm::log2(rest) } else { f64::NAN }
            };
            // Continuous key length, negated for minimisation.
            let neg_len = |nu: f64, d: f64| -> f64 {
                let b = budget_log2(nu);
                -(pa_min_entropy(inp.n1, inp.c, d) - inp.r as f64 - inp.hash_bits as f64 + 2.0 * (1.0 + b))
            };
            match minimise(lo, hi, inp, &neg_len) {
                Some(best) => {
                    let kl = max_key_length_log2(
                        budget_log2(best.nu),
                        inp.n1,
                        inp.c,
                        best.delta_prime,
                        inp.r,
                        inp.hash_bits,
                    );
                    (OptimizationMode::MaximizeLengthAtFixedBudget, best, kl.length, kl.feasible, Some(eps))
                }
                None => {
                    // No ν leaves budget for ε_pa: report the best bound at ℓ = 0.
                    let best = fixed(0).ok_or(FiniteKeyError::InfeasibleWindow)?;
                    (OptimizationMode::MaximizeLengthAtFixedBudget, best, 0, false, Some(eps))
                }
            }
        }
    };

    let nu = best.nu;
    let d = best.delta_prime;
    let log2_pa = ln_pa(key_length as f64, d) / LN2;
    let ln_pe_v = ln_pe(nu);
    let ln_tag = -(inp.hash_bits as f64) * LN2;
    let ln_total = log_sum_exp(&[ln_tag, ln_pa(key_length as f64, d), ln_pe_v]);
    let total_bound = libm::exp(ln_total);
    let feasible = feasible && target.is_none_or(|e| total_bound <= e);
    let mut assumptions = alloc::vec![Assumption::CBarIsC, Assumption::PeAcceptancePrecondition];
    if mode == OptimizationMode::MaximizeLengthAtFixedBudget {
        assumptions.push(Assumption::JointNuAndLength);
    }
    Ok(SecurityReport {
        mode,
        nu,
        delta_prime: d,
        epsilon_nu: libm::exp(ln_pe_v) / 2.0,
        epsilon_pa: libm::exp2(log2_pa),
        epsilon_pe: libm::exp(ln_pe_v),
        total_bound,
        log2_epsilon_pa: log2_pa,
        log2_epsilon_pe: ln_pe_v / LN2,
        log2_total_bound: ln_total / LN2,
        rate_per_round: -libm::log2(inp.c) - binary_entropy(d).expect("window"),
        key_length,
        feasible,
        epsilon_target: target,
        assumptions,
    })
}
