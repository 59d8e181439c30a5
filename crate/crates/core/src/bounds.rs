//! Exact and Monte Carlo checks of the probabilistic statements behind the
//! finite-key bound.
//!
//! Monte Carlo experiments compare an observed violation frequency with an
//! analytic bound using a 4σ band, `4·√(bound·(1 − bound)/trials)`. A failing
//! experiment is rerun once with ten times the trials before it is reported.
//! Threshold comparisons include a slack of `1e−9·N` in the direction that
//! enlarges the event, so floating-point ties never hide a violation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

use crate::finite_key;
use crate::geometry::{build_entangled_state, SourceTriple};
use crate::protocol::{choose_subsets, eb_alice_round, min_check, SubsetSizes, Subsets};
use crate::rng::{bernoulli, CounterRng, DrawTag};

/// Width of the acceptance band in standard deviations.
pub const SIGMA_BAND: f64 = 4.0;
/// Trials multiplier used when an experiment is rerun.
pub const ESCALATION: u64 = 10;
/// 0.999 quantile of χ² with 2 degrees of freedom.
pub const CHI2_DF2_999: f64 = 13.815510557964274;
/// Upper 0.001 normal quantile.
pub const Z_999: f64 = 3.090232306167813;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BoundsError {
    #[error("bad parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("bit strings differ in length ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
}

fn bad(name: &'static str, value: f64) -> BoundsError {
    BoundsError::BadParameter { name, value }
}

/// Which inequality an experiment exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LemmaId {
    /// Random test subset of size `a` out of `a + b` binary variables.
    SubsetSampling,
    /// Mean of independent variables in `[0, 1]`.
    Hoeffding,
}

/// Law of the binary variables.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ZDistribution {
    /// i.i.d. Bernoulli(p).
    Bernoulli(f64),
    /// Independent, with `P(Z_i = 1) = p[i]`.
    Product(Vec<f64>),
}

impl ZDistribution {
    pub fn p(&self, i: usize) -> f64 {
        match self {
            ZDistribution::Bernoulli(p) => *p,
            ZDistribution::Product(ps) => ps[i],
        }
    }

    fn validate(&self, n: usize) -> Result<(), BoundsError> {
        match self {
            ZDistribution::Bernoulli(p) if !(0.0..=1.0).contains(p) => Err(bad("p", *p)),
            ZDistribution::Product(ps) => {
                if ps.len() != n {
                    return Err(bad("distribution length", ps.len() as f64));
                }
                match ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    Some(p) => Err(bad("p", *p)),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    fn mean(&self, n: usize) -> f64 {
        (0..n).map(|i| self.p(i)).sum::<f64>() / n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentParams {
    pub a: Option<u64>,
    pub b: Option<u64>,
    pub n: Option<u64>,
    pub delta: Option<f64>,
    pub nu: f64,
    pub distribution: ZDistribution,
}

/// Outcome of one Monte Carlo experiment.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundExperiment {
    pub lemma: LemmaId,
    pub params: ExperimentParams,
    pub trials: u64,
    pub seed: u64,
    pub violations: u64,
    pub frequency: f64,
    pub bound: f64,
    pub band: f64,
    pub passed: bool,
    /// Whether the trial count was raised after a first failure.
    pub escalated: bool,
}

fn band(bound: f64, trials: u64) -> f64 {
    SIGMA_BAND * libm::sqrt((bound * (1.0 - bound)).max(0.0) / trials as f64)
}

fn slack(n: u64) -> f64 {
    1e-9 * n as f64
}

/// `e^{−2ba²ν²/((a+b)(a+1))}`.
pub fn subset_sampling_bound(a: u64, b: u64, nu: f64) -> f64 {
    let (a, b) = (a as f64, b as f64);
    libm::exp(-2.0 * b * a * a * nu * nu / ((a + b) * (a + 1.0)))
}

/// `e^{−2Nν²}`.
pub fn hoeffding_bound(n: u64, nu: f64) -> f64 {
    libm::exp(-2.0 * n as f64 * nu * nu)
}

/// The subset-sampling event for given sums.
fn sampling_event(sum_pi: u64, sum_rest: u64, a: u64, b: u64, delta: f64, nu: f64) -> bool {
    let n = a + b;
    sum_pi as f64 <= a as f64 * delta + slack(n) && sum_rest as f64 >= b as f64 * (delta + nu) - slack(n)
}

fn run_with_escalation(
    trials: u64,
    bound: f64,
    mut count: impl FnMut(u64, u64) -> u64,
) -> (u64, u64, bool, bool) {
    let violations = count(0, trials);
    let freq = violations as f64 / trials as f64;
    if freq <= bound + band(bound, trials) {
        return (trials, violations, true, false);
    }
    // Rerun on fresh trial indices.
    let more = trials * ESCALATION;
    let violations = count(trials, more);
    let passed = violations as f64 / more as f64 <= bound + band(bound, more);
    (more, violations, passed, true)
}

/// Monte Carlo estimate of `Pr[Σ_Π Z ≤ aδ ∧ Σ_{Π̄} Z ≥ b(δ+ν)]` with `Π` a
/// uniform `a`-subset independent of `Z`.
pub fn check_subset_sampling(
    a: u64,
    b: u64,
    delta: f64,
    nu: f64,
    dist: &ZDistribution,
    trials: u64,
    seed: u64,
) -> Result<BoundExperiment, BoundsError> {
    if a < 1 {
        return Err(bad("a", a as f64));
    }
    if b < 1 {
        return Err(bad("b", b as f64));
    }
    if !(nu > 0.0) {
        return Err(bad("nu", nu));
    }
    if trials == 0 {
        return Err(bad("trials", 0.0));
    }
    let n = (a + b) as usize;
    dist.validate(n)?;
    let bound = subset_sampling_bound(a, b, nu);
    let root = CounterRng::new(seed);
    let mut z = alloc::vec![0u8; n];
    let mut idx: Vec<usize> = (0..n).collect();
    let (trials_run, violations, passed, escalated) = run_with_escalation(trials, bound, |start, count| {
        let mut v = 0;
        for trial in start..start + count {
            let mut rng = root.stream(trial, DrawTag::Trial);
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = bernoulli(&mut rng, dist.p(i)) as u8;
            }
            for i in 0..a as usize {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
            }
            let sum_pi: u64 = idx[..a as usize].iter().map(|&i| z[i] as u64).sum();
            let total: u64 = z.iter().map(|&x| x as u64).sum();
            if sampling_event(sum_pi, total - sum_pi, a, b, delta, nu) {
                v += 1;
            }
        }
        v
    });
    Ok(BoundExperiment {
        lemma: LemmaId::SubsetSampling,
        params: ExperimentParams { a: Some(a), b: Some(b), n: None, delta: Some(delta), nu, distribution: dist.clone() },
        trials: trials_run,
        seed,
        violations,
        frequency: violations as f64 / trials_run as f64,
        bound,
        band: band(bound, trials_run),
        passed,
        escalated,
    })
}

/// Exact probability of the subset-sampling event by enumerating every
/// `Z ∈ {0,1}^{a+b}` and every `a`-subset. Requires `a + b ≤ 16`.
pub fn subset_sampling_exact(a: u64, b: u64, delta: f64, nu: f64, dist: &ZDistribution) -> Result<f64, BoundsError> {
    let n = (a + b) as usize;
    if n > 16 || a < 1 || b < 1 {
        return Err(bad("a + b", n as f64));
    }
    dist.validate(n)?;
    let f = subset_sampling_event_fractions(a, b, delta, nu);
    let mut total = 0.0;
    for (z, &fz) in f.iter().enumerate() {
        if fz == 0.0 {
            continue;
        }
        let mut pz = 1.0;
        for i in 0..n {
            let p = dist.p(i);
            pz *= if (z >> i) & 1 == 1 { p } else { 1.0 - p };
        }
        total += pz * fz;
    }
    Ok(total)
}

/// For each `z`, the fraction of `a`-subsets `Π` on which the event occurs.
fn subset_sampling_event_fractions(a: u64, b: u64, delta: f64, nu: f64) -> Vec<f64> {
    let n = (a + b) as usize;
    let subsets: Vec<u32> = (0u32..(1 << n)).filter(|s| s.count_ones() as u64 == a).collect();
    (0u32..(1 << n))
        .map(|z| {
            let total = z.count_ones() as u64;
            let hits = subsets
                .iter()
                .filter(|&&s| {
                    let sum_pi = (z & s).count_ones() as u64;
                    sampling_event(sum_pi, total - sum_pi, a, b, delta, nu)
                })
                .count();
            hits as f64 / subsets.len() as f64
        })
        .collect()
}

/// Result of sweeping every product distribution on a probability grid.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSweep {
    pub a: u64,
    pub b: u64,
    pub delta: f64,
    pub nu: f64,
    pub distributions: u64,
    pub max_probability: f64,
    pub argmax: Vec<f64>,
    pub bound: f64,
    pub holds: bool,
}

/// Exact event probability for every product distribution with marginals on
/// the grid `{0, 1/steps, …, 1}`; reports the worst case.
pub fn subset_sampling_grid_sweep(a: u64, b: u64, delta: f64, nu: f64, steps: u32) -> Result<GridSweep, BoundsError> {
    let n = (a + b) as usize;
    if n > 8 || a < 1 || b < 1 {
        return Err(bad("a + b", n as f64));
    }
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    let f = subset_sampling_event_fractions(a, b, delta, nu);
    let mut best = (f64::NEG_INFINITY, alloc::vec![0usize; n]);
    let mut choice = alloc::vec![0usize; n];
    // Contract the highest bit first; level d holds a tensor over the lower bits.
    fn recurse(t: &[f64], grid: &[f64], choice: &mut [usize], best: &mut (f64, Vec<usize>), count: &mut u64) {
        if t.len() == 1 {
            *count += 1;
            if t[0] > best.0 {
                best.0 = t[0];
                best.1 = choice.to_vec();
            }
            return;
        }
        let half = t.len() / 2;
        let bit = half.trailing_zeros() as usize;
        let mut next = alloc::vec![0.0; half];
        for (gi, &p) in grid.iter().enumerate() {
            for j in 0..half {
                next[j] = (1.0 - p) * t[j] + p * t[j + half];
            }
            choice[bit] = gi;
            recurse(&next, grid, choice, best, count);
        }
    }
    let mut count = 0;
    recurse(&f, &grid, &mut choice, &mut best, &mut count);
    let bound = subset_sampling_bound(a, b, nu);
    Ok(GridSweep {
        a,
        b,
        delta,
        nu,
        distributions: count,
        max_probability: best.0,
        argmax: best.1.iter().map(|&g| grid[g]).collect(),
        bound,
        holds: best.0 <= bound + 1e-12,
    })
}

/// Monte Carlo estimate of `Pr[X̄ − μ ≥ ν]` for independent Bernoulli variables.
pub fn check_hoeffding(n: u64, dist: &ZDistribution, nu: f64, trials: u64, seed: u64) -> Result<BoundExperiment, BoundsError> {
    if n < 1 {
        return Err(bad("N", 0.0));
    }
    if !(nu > 0.0) {
        return Err(bad("nu", nu));
    }
    if trials == 0 {
        return Err(bad("trials", 0.0));
    }
    dist.validate(n as usize)?;
    let mu = dist.mean(n as usize);
    let bound = hoeffding_bound(n, nu);
    let root = CounterRng::new(seed);
    let (trials_run, violations, passed, escalated) = run_with_escalation(trials, bound, |start, count| {
        let mut v = 0;
        for trial in start..start + count {
            let mut rng = root.stream(trial, DrawTag::Trial);
            let sum: u64 = (0..n as usize).map(|i| bernoulli(&mut rng, dist.p(i)) as u64).sum();
            if hoeffding_event(sum, n, mu, nu) {
                v += 1;
            }
        }
        v
    });
    Ok(BoundExperiment {
        lemma: LemmaId::Hoeffding,
        params: ExperimentParams { a: None, b: None, n: Some(n), delta: None, nu, distribution: dist.clone() },
        trials: trials_run,
        seed,
        violations,
        frequency: violations as f64 / trials_run as f64,
        bound,
        band: band(bound, trials_run),
        passed,
        escalated,
    })
}

fn hoeffding_event(sum: u64, n: u64, mu: f64, nu: f64) -> bool {
    sum as f64 - n as f64 * mu >= n as f64 * nu - slack(n)
}

/// Exact `Pr[X̄ − μ ≥ ν]` by enumerating all `2^N` outcomes (`N ≤ 20`).
pub fn hoeffding_exact(n: u64, dist: &ZDistribution, nu: f64) -> Result<f64, BoundsError> {
    if !(1..=20).contains(&n) {
        return Err(bad("N", n as f64));
    }
    dist.validate(n as usize)?;
    let mu = dist.mean(n as usize);
    let mut total = 0.0;
    for x in 0u32..(1 << n) {
        if !hoeffding_event(x.count_ones() as u64, n, mu, nu) {
            continue;
        }
        let mut p = 1.0;
        for i in 0..n as usize {
            let pi = dist.p(i);
            p *= if (x >> i) & 1 == 1 { pi } else { 1.0 - pi };
        }
        total += p;
    }
    Ok(total)
}

/// Both sides of `Σ1{X≠Y} = 2·Σ1{X=0 ∧ Y=1} + Σ1{Y=0} − Σ1{X=0}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CountingCheck {
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
}

pub fn verify_counting_identity(x: &[u8], y: &[u8]) -> Result<CountingCheck, BoundsError> {
    if x.len() != y.len() {
        return Err(BoundsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let count = |f: &dyn Fn(u8, u8) -> bool| x.iter().zip(y).filter(|(a, b)| f(**a, **b)).count() as i64;
    let lhs = count(&|a, b| a != b);
    let rhs = 2 * count(&|a, b| a == 0 && b == 1) + count(&|_, b| b == 0) - count(&|a, _| a == 0);
    Ok(CountingCheck { lhs, rhs, holds: lhs == rhs })
}

/// Checks the identity on all pairs of `bits`-bit strings; returns the number
/// of pairs checked and the number of failures.
pub fn counting_identity_exhaustive(bits: u32) -> (u64, u64) {
    let mask: u32 = if bits >= 32 { u32::MAX } else { (1 << bits) - 1 };
    let mut failures = 0;
    let mut checked = 0;
    for x in 0..=mask {
        for y in 0..=mask {
            let lhs = (x ^ y).count_ones() as i64;
            let x0 = !x & mask;
            let y0 = !y & mask;
            let rhs = 2 * (x0 & y).count_ones() as i64 + y0.count_ones() as i64 - x0.count_ones() as i64;
            checked += 1;
            if lhs != rhs {
                failures += 1;
            }
        }
        if mask == u32::MAX && x == mask {
            break;
        }
    }
    (checked, failures)
}

/// Observed vs. predicted frequency of one event.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrequencyCheck {
    pub observed: f64,
    pub expected: f64,
    /// `(observed − expected)/σ`.
    pub z_score: f64,
    pub passed: bool,
}

fn frequency_check(hits: u64, trials: u64, expected: f64) -> FrequencyCheck {
    let observed = hits as f64 / trials.max(1) as f64;
    let sigma = libm::sqrt((expected * (1.0 - expected)).max(0.0) / trials.max(1) as f64);
    let diff = observed - expected;
    let (z_score, passed) = if sigma > 0.0 {
        (diff / sigma, diff.abs() <= SIGMA_BAND * sigma)
    } else {
        (0.0, diff.abs() <= 1e-12)
    };
    FrequencyCheck { observed, expected, z_score, passed }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiftingReport {
    pub t_weight: f64,
    pub pa_x: f64,
    pub rounds: u64,
    pub seed: u64,
    /// Alice's outcomes `0`, `1`, `ξ₊`, `ξ₋`.
    pub outcomes: [FrequencyCheck; 4],
    pub kept: FrequencyCheck,
    pub z_given_kept: FrequencyCheck,
    pub passed: bool,
}

/// Closed-form sifting probabilities: `(Pr(0), Pr(1), Pr(ξ₊), Pr(ξ₋))`,
/// `Pr(D = 0)` and `Pr(Φ_A = 0 | D = 0)`.
pub fn sifting_formulas(t_weight: f64, pa_x: f64) -> ([f64; 4], f64, f64) {
    let pa_z = 1.0 - pa_x;
    let outcomes = [pa_z / 2.0, pa_z / 2.0, pa_x / (2.0 * t_weight), pa_x * (2.0 * t_weight - 1.0) / (2.0 * t_weight)];
    let kept = pa_z + pa_x / (2.0 * t_weight);
    let z_given_kept = if kept > 0.0 { pa_z / kept } else { 0.0 };
    (outcomes, kept, z_given_kept)
}

/// Runs the entanglement-based engine's Alice rounds and compares outcome
/// frequencies with [`sifting_formulas`] at 4σ.
pub fn verify_sifting_probabilities(triple: &SourceTriple, pa_x: f64, rounds: u64, seed: u64) -> Result<SiftingReport, BoundsError> {
    if !(0.0..=1.0).contains(&pa_x) {
        return Err(bad("pA_x", pa_x));
    }
    let pair = build_entangled_state(triple).map_err(|_| bad("T", triple.t))?;
    let root = CounterRng::new(seed);
    let mut counts = [0u64; 4];
    for i in 0..rounds {
        let r = eb_alice_round(i, pa_x, triple, &pair, &root);
        counts[2 * r.basis as usize + r.bit as usize] += 1;
    }
    let (expected, kept_p, z_kept_p) = sifting_formulas(triple.t, pa_x);
    let outcomes = [0, 1, 2, 3].map(|k| frequency_check(counts[k], rounds, expected[k]));
    let kept_n = counts[0] + counts[1] + counts[2];
    let kept = frequency_check(kept_n, rounds, kept_p);
    let z_given_kept = frequency_check(counts[0] + counts[1], kept_n, z_kept_p);
    let passed = outcomes.iter().all(|c| c.passed) && kept.passed && z_given_kept.passed;
    Ok(SiftingReport { t_weight: triple.t, pa_x, rounds, seed, outcomes, kept, z_given_kept, passed })
}

/// Per-round symbol: `0` kept with `z`, `1` kept with `x`, `2` discarded.
/// (`D = 1` with `Φ_A = 0` cannot happen.)
fn direct_symbol_probabilities(triple: &SourceTriple, pa_x: f64) -> Result<[f64; 3], BoundsError> {
    let pair = build_entangled_state(triple).map_err(|_| bad("T", triple.t))?;
    let z = pair.z_probabilities();
    let xi = pair.xi_probabilities(triple);
    let pa_z = 1.0 - pa_x;
    Ok([pa_z * (z[0] + z[1]), pa_x * xi[0], pa_x * xi[1]])
}

fn two_stage_symbol_probabilities(t_weight: f64, pa_x: f64) -> [f64; 3] {
    let (outcomes, kept, z_given_kept) = sifting_formulas(t_weight, pa_x);
    [kept * z_given_kept, kept * (1.0 - z_given_kept), outcomes[3]]
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TwoStageReport {
    pub rounds: u64,
    pub seed: u64,
    /// Largest absolute difference between the enumerated distributions
    /// (`M′ ≤ 4` only).
    pub exact_max_diff: Option<f64>,
    /// Number of `(D, Φ_A)` patterns enumerated.
    pub patterns: Option<u64>,
    /// Two-sample χ² statistic on per-round symbol counts (Monte Carlo).
    pub chi2: Option<f64>,
    pub chi2_critical: f64,
    pub total_variation: Option<f64>,
    pub tv_band: Option<f64>,
    pub passed: bool,
}

/// Compares the direct process (quantum measurement of `Ψ`) with the
/// two-stage description (discard first, then basis). Exact enumeration of
/// all `4^{M′}` patterns for `M′ ≤ 4`, Monte Carlo otherwise.
pub fn verify_two_stage_equivalence(triple: &SourceTriple, pa_x: f64, rounds: u64, seed: u64) -> Result<TwoStageReport, BoundsError> {
    if !(0.0..=1.0).contains(&pa_x) {
        return Err(bad("pA_x", pa_x));
    }
    if rounds == 0 {
        return Err(bad("rounds", 0.0));
    }
    let direct = direct_symbol_probabilities(triple, pa_x)?;
    let staged = two_stage_symbol_probabilities(triple.t, pa_x);
    if rounds <= 4 {
        // Symbols (D, Φ): 0 = (0,0), 1 = (0,1), 2 = (1,1), 3 = (1,0).
        let sym = |p: &[f64; 3], s: usize| if s == 3 { 0.0 } else { p[s] };
        let patterns = 4u64.pow(rounds as u32);
        let mut worst = 0.0f64;
        for pat in 0..patterns {
            let (mut pd, mut ps) = (1.0, 1.0);
            let mut rest = pat;
            for _ in 0..rounds {
                let s = (rest % 4) as usize;
                rest /= 4;
                pd *= sym(&direct, s);
                ps *= sym(&staged, s);
            }
            worst = worst.max((pd - ps).abs());
        }
        return Ok(TwoStageReport {
            rounds,
            seed,
            exact_max_diff: Some(worst),
            patterns: Some(patterns),
            chi2: None,
            chi2_critical: CHI2_DF2_999,
            total_variation: None,
            tv_band: None,
            passed: worst <= 1e-12,
        });
    }
    let pair = build_entangled_state(triple).map_err(|_| bad("T", triple.t))?;
    let root = CounterRng::new(seed);
    let mut a = [0u64; 3];
    for i in 0..rounds {
        let r = eb_alice_round(i, pa_x, triple, &pair, &root);
        a[if r.discard { 2 } else { r.basis as usize }] += 1;
    }
    let staged_root = CounterRng::new(seed ^ 0x005e_ed0f_7a6e);
    let (_, kept, z_given_kept) = sifting_formulas(triple.t, pa_x);
    let mut b = [0u64; 3];
    for i in 0..rounds {
        let mut rng = staged_root.stream(i, DrawTag::Auxiliary);
        let s = if !bernoulli(&mut rng, kept) {
            2
        } else if bernoulli(&mut rng, z_given_kept) {
            0
        } else {
            1
        };
        b[s] += 1;
    }
    let (chi2, df) = two_sample_chi2(&a, &b);
    let n = rounds as f64;
    let tv = 0.5 * (0..3).map(|k| (a[k] as f64 - b[k] as f64).abs() / n).sum::<f64>();
    let tv_band = 0.5 * (0..3).map(|k| SIGMA_BAND * libm::sqrt(2.0 * staged[k] * (1.0 - staged[k]) / n)).sum::<f64>();
    let critical = if df == 2 { CHI2_DF2_999 } else { chi2_critical_999(df) };
    Ok(TwoStageReport {
        rounds,
        seed,
        exact_max_diff: None,
        patterns: None,
        chi2: Some(chi2),
        chi2_critical: critical,
        total_variation: Some(tv),
        tv_band: Some(tv_band),
        passed: chi2 <= critical && tv <= tv_band,
    })
}

/// Two-sample χ² homogeneity statistic over categories with nonzero total;
/// returns the statistic and its degrees of freedom.
pub fn two_sample_chi2(a: &[u64], b: &[u64]) -> (f64, usize) {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    let mut stat = 0.0;
    let mut cats = 0;
    for (&x, &y) in a.iter().zip(b) {
        let tot = (x + y) as f64;
        if tot == 0.0 {
            continue;
        }
        cats += 1;
        let ea = tot * na as f64 / n;
        let eb = tot * nb as f64 / n;
        stat += sq(x as f64 - ea) / ea + sq(y as f64 - eb) / eb;
    }
    (stat, cats.max(1) - 1)
}

/// Goodness-of-fit χ² statistic of `counts` against `expected` probabilities.
pub fn chi2_statistic(counts: &[u64], expected: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(expected)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            sq(c as f64 - e) / e
        })
        .sum()
}

/// Approximate 0.999 quantile of χ² with `df` degrees of freedom
/// (Wilson–Hilferty).
pub fn chi2_critical_999(df: usize) -> f64 {
    let k = df as f64;
    let h = 2.0 / (9.0 * k);
    k * libm::pow(1.0 - h + Z_999 * libm::sqrt(h), 3.0)
}

fn sq(x: f64) -> f64 {
    x * x
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubsetEnumeration {
    pub m: u64,
    pub tuples: u64,
    pub expected_tuples: u64,
    pub max_deviation: f64,
    pub passed: bool,
}

fn count_tuples(m: u64, sizes: &SubsetSizes) -> u64 {
    let mut left = m;
    let mut total = 1.0;
    for s in [sizes.n1, sizes.k[0], sizes.k[1], sizes.k[2], sizes.k[3]] {
        total *= binomial(left, s);
        left -= s;
    }
    libm::round(total) as u64
}

/// Conditioned on the minimum-count check, the distribution of
/// `(Σ₁, Π₁..Π₄)` induced by i.i.d. basis choices and the per-class uniform
/// choice is computed exactly and compared with the uniform distribution over
/// all disjoint tuples of the given sizes. `m ≤ 10`.
pub fn subset_choice_exact(m: u64, sizes: &SubsetSizes, pa_z: f64, pb_z: f64) -> Result<SubsetEnumeration, BoundsError> {
    if m > 10 {
        return Err(bad("m", m as f64));
    }
    let class_p = [pa_z * pb_z, pa_z * (1.0 - pb_z), (1.0 - pa_z) * pb_z, (1.0 - pa_z) * (1.0 - pb_z)];
    // Label per round: 0 = unused, 1 = Σ₁, 2..=5 = Π₁..Π₄.
    let mut dist: BTreeMap<u64, f64> = BTreeMap::new();
    let mut p_min = 0.0;
    let assignments = 4u64.pow(m as u32);
    for asg in 0..assignments {
        let classes: Vec<usize> = (0..m).map(|i| ((asg >> (2 * i)) & 3) as usize).collect();
        let mut counts = [0u64; 4];
        let mut p = 1.0;
        for &c in &classes {
            counts[c] += 1;
            p *= class_p[c];
        }
        if p == 0.0 || !min_check(&counts, sizes) {
            continue;
        }
        p_min += p;
        let ways = binomial(counts[0], sizes.k[0])
            * binomial(counts[0] - sizes.k[0], sizes.n1)
            * binomial(counts[1], sizes.k[1])
            * binomial(counts[2], sizes.k[2])
            * binomial(counts[3], sizes.k[3]);
        let share = p / ways;
        let mut labels = alloc::vec![0u8; m as usize];
        enumerate_labelings(&classes, sizes, 0, &mut labels, &mut |lab| {
            let key = lab.iter().enumerate().fold(0u64, |acc, (i, &l)| acc + (l as u64) * 6u64.pow(i as u32));
            *dist.entry(key).or_insert(0.0) += share;
        });
    }
    let expected_tuples = count_tuples(m, sizes);
    let uniform = 1.0 / expected_tuples as f64;
    let max_deviation = dist.values().map(|v| (v / p_min - uniform).abs()).fold(0.0, f64::max);
    let tuples = dist.len() as u64;
    Ok(SubsetEnumeration {
        m,
        tuples,
        expected_tuples,
        max_deviation,
        passed: tuples == expected_tuples && max_deviation <= 1e-12,
    })
}

/// Visits every admissible labeling: `Π_c` inside class `c`, `Σ₁` inside Z-Z.
fn enumerate_labelings(classes: &[usize], sizes: &SubsetSizes, pos: usize, labels: &mut [u8], visit: &mut dyn FnMut(&[u8])) {
    let want = [0, sizes.n1, sizes.k[0], sizes.k[1], sizes.k[2], sizes.k[3]];
    let mut used = [0u64; 6];
    label_from(classes, &want, pos, labels, &mut used, visit);
}

fn label_from(classes: &[usize], want: &[u64; 6], pos: usize, labels: &mut [u8], used: &mut [u64; 6], visit: &mut dyn FnMut(&[u8])) {
    if pos == classes.len() {
        if (1..6).all(|l| used[l] == want[l]) {
            visit(labels);
        }
        return;
    }
    let c = classes[pos];
    for l in [0u8, 2 + c as u8, 1] {
        if l == 1 && c != 0 {
            continue;
        }
        if l != 0 && used[l as usize] == want[l as usize] {
            continue;
        }
        labels[pos] = l;
        used[l as usize] += 1;
        label_from(classes, want, pos + 1, labels, used, visit);
        used[l as usize] -= 1;
    }
    labels[pos] = 0;
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubsetMonteCarlo {
    pub samples: u64,
    pub bins: u64,
    pub chi2: f64,
    pub critical: f64,
    pub passed: bool,
}

/// Draws i.i.d. basis pairs for `m` rounds, keeps draws passing the
/// minimum-count check, runs the engine's subset chooser and tests the
/// resulting tuples for uniformity.
pub fn subset_choice_monte_carlo(
    m: u64,
    sizes: &SubsetSizes,
    pa_z: f64,
    pb_z: f64,
    samples: u64,
    seed: u64,
) -> Result<SubsetMonteCarlo, BoundsError> {
    if m > 10 {
        return Err(bad("m", m as f64));
    }
    let class_p = [pa_z * pb_z, pa_z * (1.0 - pb_z), (1.0 - pa_z) * pb_z, (1.0 - pa_z) * (1.0 - pb_z)];
    let root = CounterRng::new(seed);
    let mut counts: BTreeMap<Subsets, u64> = BTreeMap::new();
    let mut accepted = 0;
    let mut trial = 0u64;
    while accepted < samples {
        let mut rng = root.stream(trial, DrawTag::Trial);
        trial += 1;
        let sigma: Vec<(u64, usize)> = (0..m).map(|i| (i, crate::rng::categorical(&mut rng, &class_p))).collect();
        if let Some(s) = choose_subsets(&sigma, sizes, &mut rng) {
            *counts.entry(s).or_insert(0) += 1;
            accepted += 1;
        }
        if trial > samples.saturating_mul(1000) {
            return Err(bad("minimum-count acceptance", 0.0));
        }
    }
    let bins = count_tuples(m, sizes);
    let expected = samples as f64 / bins as f64;
    let seen: f64 = counts.values().map(|&c| sq(c as f64 - expected) / expected).sum();
    let unseen = (bins - counts.len() as u64) as f64 * expected;
    let chi2 = seen + unseen;
    let critical = chi2_critical_999(bins as usize - 1);
    Ok(SubsetMonteCarlo { samples, bins, chi2, critical, passed: chi2 <= critical })
}

/// The three terms of `ε(ν)` next to the experiments that bound them.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpsilonCrossCheck {
    pub terms: [f64; 3],
    pub experiments: Vec<BoundExperiment>,
    /// Largest relative gap between a finite-key term and the experiment's bound.
    pub max_bound_mismatch: f64,
    pub passed: bool,
}

/// Runs the experiment behind each term of `ε(ν)`: Hoeffding with `N = n₁`,
/// subset sampling with `(a, b) = (k₄, n₁(1/(2T) − ν))` and with
/// `(a, b) = (k₂, n₁)`. `n₁(1/(2T) − ν)` must be an integer.
#[allow(clippy::too_many_arguments)]
pub fn cross_check_epsilon_terms(
    n1: u64,
    k2: u64,
    k4: u64,
    t_weight: f64,
    nu: f64,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<EpsilonCrossCheck, BoundsError> {
    let terms = finite_key::epsilon_terms(nu, n1, k2, k4, t_weight).map_err(|_| bad("nu", nu))?;
    let b4f = n1 as f64 * (0.5 / t_weight - nu);
    let b4 = libm::round(b4f);
    if (b4 - b4f).abs() > 1e-9 || b4 < 1.0 {
        return Err(bad("n1(1/(2T) - nu)", b4f));
    }
    let p = (delta + nu / 2.0).min(1.0);
    let experiments = alloc::vec![
        check_hoeffding(n1, &ZDistribution::Bernoulli(0.5), nu, trials, seed)?,
        check_subset_sampling(k4, b4 as u64, delta, nu, &ZDistribution::Bernoulli(p), trials, seed.wrapping_add(1))?,
        check_subset_sampling(k2, n1, delta, nu, &ZDistribution::Bernoulli(p), trials, seed.wrapping_add(2))?,
    ];
    let max_bound_mismatch = terms
        .iter()
        .zip(&experiments)
        .map(|(t, e)| (t - e.bound).abs() / t.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let passed = max_bound_mismatch <= 1e-9 && experiments.iter().all(|e| e.passed);
    Ok(EpsilonCrossCheck { terms, experiments, max_bound_mismatch, passed })
}

/// Trials per point in [`standard_suite`].
pub const STANDARD_TRIALS: u64 = 100_000;

/// Eleven subset-sampling and Hoeffding experiments at `STANDARD_TRIALS` each.
pub fn standard_suite(seed: u64) -> Vec<BoundExperiment> {
    let sampling_points: [(u64, u64, f64, f64, f64); 6] = [
        (50, 50, 0.1, 0.2, 0.1),
        (20, 20, 0.1, 0.1, 0.15),
        (10, 30, 0.2, 0.1, 0.25),
        (30, 10, 0.0, 0.1, 0.05),
        (5, 5, 0.2, 0.2, 0.3),
        (100, 100, 0.05, 0.05, 0.075),
    ];
    let hoeffding_points: [(u64, f64, f64); 5] =
        [(100, 0.5, 0.1), (10, 0.3, 0.2), (50, 0.1, 0.05), (1000, 0.5, 0.03), (5, 0.5, 0.3)];
    let mut out = Vec::new();
    let mut s = seed;
    for (a, b, delta, nu, p) in sampling_points {
        out.push(check_subset_sampling(a, b, delta, nu, &ZDistribution::Bernoulli(p), STANDARD_TRIALS, s).expect("valid point"));
        s = s.wrapping_add(1);
    }
    for (n, p, nu) in hoeffding_points {
        out.push(check_hoeffding(n, &ZDistribution::Bernoulli(p), nu, STANDARD_TRIALS, s).expect("valid point"));
        s = s.wrapping_add(1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    #[test]
    fn counting_examples() {
        let c = verify_counting_identity(&[0, 1, 0, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!((c.lhs, c.rhs), (2, 2));
        let x = [0, 1, 1, 0, 1];
        assert!(verify_counting_identity(&x, &x).unwrap().holds);
        assert!(verify_counting_identity(&x, &x[..4]).is_err());
        assert_eq!(counting_identity_exhaustive(4), (256, 0));
    }

    #[test]
    fn subset_sampling_examples() {
        let e = check_subset_sampling(50, 50, 0.1, 0.2, &ZDistribution::Bernoulli(0.1), 20_000, 1).unwrap();
        assert!(e.passed);
        // b(δ + ν) > b: impossible event.
        let e = check_subset_sampling(5, 5, 0.5, 0.6, &ZDistribution::Bernoulli(0.9), 5_000, 2).unwrap();
        assert_eq!(e.violations, 0);
        assert!(check_subset_sampling(0, 5, 0.1, 0.1, &ZDistribution::Bernoulli(0.5), 10, 1).is_err());
    }

    #[test]
    fn hoeffding_examples() {
        let e = check_hoeffding(100, &ZDistribution::Bernoulli(0.5), 0.1, 20_000, 3).unwrap();
        assert!((e.bound - libm::exp(-2.0)).abs() < 1e-15);
        assert!(e.passed);
        let e = check_hoeffding(10, &ZDistribution::Bernoulli(0.5), 1.1, 1000, 3).unwrap();
        assert_eq!(e.violations, 0);
        for i in 0..=20 {
            let p = i as f64 / 20.0;
            if p >= 1.0 {
                continue;
            }
            let exact = hoeffding_exact(1, &ZDistribution::Bernoulli(p), 1.0 - p).unwrap();
            assert!((exact - p).abs() < 1e-15);
            assert!(exact <= libm::exp(-2.0 * (1.0 - p) * (1.0 - p)) + 1e-15);
        }
    }

    #[test]
    fn subset_sampling_exact_matches_brute_force() {
        let dist = ZDistribution::Product(alloc::vec![0.1, 0.5, 0.9, 0.3]);
        let exact = subset_sampling_exact(2, 2, 0.0, 0.5, &dist).unwrap();
        // Event: Π-sum = 0 and rest-sum ≥ 1.
        let mut brute = 0.0;
        for z in 0u32..16 {
            let pz: f64 = (0..4).map(|i| if (z >> i) & 1 == 1 { dist.p(i) } else { 1.0 - dist.p(i) }).product();
            let mut hits = 0;
            for s in [0b0011u32, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100] {
                if (z & s).count_ones() == 0 && (z & !s & 0xf).count_ones() >= 1 {
                    hits += 1;
                }
            }
            brute += pz * hits as f64 / 6.0;
        }
        assert!((exact - brute).abs() < 1e-15);
    }

    #[test]
    fn sifting_and_two_stage() {
        let tr = SourceTriple::ideal_bb84();
        let (o, kept, zk) = sifting_formulas(1.0, 2.0 / 3.0);
        assert!((o[3] - 1.0 / 3.0).abs() < 1e-15);
        assert!((kept - 2.0 / 3.0).abs() < 1e-15);
        assert!((zk - 0.5).abs() < 1e-15);
        let (o, _, _) = sifting_formulas(0.72, 0.5);
        assert!((o[2] - 0.5 / 1.44).abs() < 1e-15);
        assert!((o[3] - 0.5 * 0.44 / 1.44).abs() < 1e-15);
        let rep = verify_sifting_probabilities(&tr, 0.0, 2000, 1).unwrap();
        assert_eq!(rep.outcomes[3].observed, 0.0);
        assert!(rep.passed);
        let rep = verify_two_stage_equivalence(&tr, 0.5, 2, 1).unwrap();
        assert_eq!(rep.patterns, Some(16));
        assert!(rep.passed);
        let rep = verify_two_stage_equivalence(&tr, 0.0, 3, 1).unwrap();
        assert!(rep.passed);
        let t = SourceTriple::from_coefficients(C64::new(0.6, 0.0), C64::new(0.6, 0.0), C64::new(7.0 / 18.0, 0.0)).unwrap();
        assert!(verify_two_stage_equivalence(&t, 0.4, 4, 1).unwrap().passed);
    }

    #[test]
    fn chi2_critical_is_sane() {
        // Wilson–Hilferty at df = 2 is within 3% of the exact 13.8155.
        assert!((chi2_critical_999(2) - CHI2_DF2_999).abs() / CHI2_DF2_999 < 0.03);
        assert!((chi2_critical_999(100) - 149.449).abs() < 0.5);
    }
}
