//! Feasibility audit for sources that emit four states.
//!
//! A four-state source `γ₀, γ₁, γ₊, γ₋` hides the basis choice only if some
//! `p, q ∈ (0, 1)` give
//!
//! ```text
//! p|γ₀⟩⟨γ₀| + (1−p)|γ₁⟩⟨γ₁| = q|γ₊⟩⟨γ₊| + (1−q)|γ₋⟩⟨γ₋|.
//! ```
//!
//! With `γ₊ = aγ₀ + bγ₁` and `γ₋ = cγ₀ + dγ₁` this splits into
//!
//! * `cond_1`: `q|a|² + (1−q)|c|² = p`
//! * `cond_2`: `q|b|² + (1−q)|d|² = 1 − p`
//! * `cond_4`: `q·a*b + (1−q)·c*d = 0`, hence `q = c*d/(c*d − a*b)`
//!
//! (the remaining off-diagonal equation is the conjugate of `cond_4`).

use alloc::vec::Vec;

use crate::geometry::{AmbientState, GeometryError, StateLabel, SubspaceFrame, TAU_SPAN};
use crate::linalg::{Mat2, Qubit, C64, ONE, ZERO};

pub const TAU_AUDIT: f64 = 1e-9;
const TERNARY_ITERS: usize = 80;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AuditError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("the base quadruple of a sweep must be feasible (violated: {0})")]
    BaseInfeasible(&'static str),
    #[error("no feasible gamma_minus exists for q = {q}")]
    NoConstruction { q: f64 },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FourStateInput {
    pub gamma0: AmbientState,
    pub gamma1: AmbientState,
    pub gamma_plus: AmbientState,
    pub gamma_minus: AmbientState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Violation {
    Cond1,
    Cond2,
    Cond4,
    OperatorEquality,
}

impl Violation {
    pub fn id(self) -> &'static str {
        match self {
            Violation::Cond1 => "cond_1",
            Violation::Cond2 => "cond_2",
            Violation::Cond4 => "cond_4",
            Violation::OperatorEquality => "operator_equality",
        }
    }
}

/// How `q` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolutionPath {
    /// `q = c*d/(c*d − a*b)`.
    Formula,
    /// `a*b = c*d = 0`: `cond_4` holds for every `q`; `q = 1/2` is used.
    DegenerateZero,
    /// `a*b = c*d ≠ 0`: `cond_4` cannot hold.
    DegenerateNonzero,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AuditVerdict {
    /// Coefficients after rotating `γ₊`, `γ₋` so that `a`, `c` are real and
    /// non-negative.
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
    /// `⟨γ₀|γ₁⟩`.
    pub g: C64,
    pub q: C64,
    pub p: C64,
    pub feasible: bool,
    /// Operator-norm defect of the mixed-state equality: at the solved
    /// `(p, q)` when feasible, otherwise minimised over `[0, 1]²`.
    pub residual: f64,
    pub violated_condition: Option<Violation>,
    pub solution_path: SolutionPath,
}

/// `|Im z| ≤ τ(1 + |Re z|)`.
pub fn is_real(z: C64, tau: f64) -> bool {
    z.im.abs() <= tau * (1.0 + z.re.abs())
}

/// `z·e^{−i·arg(lead)}`, leaving `z` alone when `lead` vanishes.
fn unphase(lead: C64) -> C64 {
    let n = lead.norm();
    if n > 0.0 { lead.conj() / n } else { ONE }
}

struct Decomposed {
    g0: Qubit,
    g1: Qubit,
    coeffs: [C64; 4],
    g: C64,
}

fn decompose(input: &FourStateInput) -> Result<Decomposed, AuditError> {
    let dim = input.gamma0.dim();
    for (which, s) in [("gamma1", &input.gamma1), ("gamma_plus", &input.gamma_plus), ("gamma_minus", &input.gamma_minus)] {
        if s.dim() != dim {
            return Err(GeometryError::DimensionMismatch { which, expected: dim, found: s.dim() }.into());
        }
    }
    let frame = SubspaceFrame::gram_schmidt(
        &input.gamma0,
        &input.gamma1,
        [StateLabel::Gamma0, StateLabel::Gamma1],
        TAU_SPAN,
    )?;
    let (g1, _) = frame.project(input.gamma1.amplitudes());
    let g0 = [ONE, ZERO];
    let (g, s) = (g1[0], g1[1]);
    let solve = |which: &'static str, st: &AmbientState| -> Result<(C64, C64), AuditError> {
        let (v, residual) = frame.project(st.amplitudes());
        if residual > TAU_SPAN {
            return Err(GeometryError::OutOfSpan { which, residual, tolerance: TAU_SPAN }.into());
        }
        let y = v[1] / s;
        Ok((v[0] - g * y, y))
    };
    let (a, b) = solve("gamma_plus", &input.gamma_plus)?;
    let (c, d) = solve("gamma_minus", &input.gamma_minus)?;
    let (ra, rc) = (unphase(a), unphase(c));
    Ok(Decomposed { g0, g1, coeffs: [C64::new(a.norm(), 0.0), b * ra, C64::new(c.norm(), 0.0), d * rc], g })
}

fn combo(x: C64, y: C64, g0: &Qubit, g1: &Qubit) -> Qubit {
    [x * g0[0] + y * g1[0], x * g0[1] + y * g1[1]]
}

struct Operators {
    rho0: Mat2,
    rho1: Mat2,
    rho_plus: Mat2,
    rho_minus: Mat2,
}

impl Operators {
    fn defect(&self, p: f64, q: f64) -> f64 {
        let lhs = self.rho0.scale_real(p) + self.rho1.scale_real(1.0 - p);
        let rhs = self.rho_plus.scale_real(q) + self.rho_minus.scale_real(1.0 - q);
        (lhs - rhs).hermitian_op_norm()
    }

    /// The defect is convex in `(p, q)`, so nested ternary search finds its
    /// minimum over the unit square.
    fn min_defect(&self) -> f64 {
        let inner = |p: f64| ternary(|q| self.defect(p, q)).1;
        ternary(inner).1
    }
}

fn ternary(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..TERNARY_ITERS {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let x = 0.5 * (lo + hi);
    [(0.0, f(0.0)), (1.0, f(1.0)), (x, f(x))]
        .into_iter()
        .fold((x, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
}

/// Solves `cond_1`, `cond_2`, `cond_4` for `(p, q)` and checks the operator
/// equality at tolerance `tau`.
pub fn audit_four_states(input: &FourStateInput, tau: f64) -> Result<AuditVerdict, AuditError> {
    let Decomposed { g0, g1, coeffs: [a, b, c, d], g } = decompose(input)?;
    let ops = Operators {
        rho0: Mat2::projector(&g0),
        rho1: Mat2::projector(&g1),
        rho_plus: Mat2::projector(&combo(a, b, &g0, &g1)),
        rho_minus: Mat2::projector(&combo(c, d, &g0, &g1)),
    };
    let ab = a.conj() * b;
    let cd = c.conj() * d;
    let scale = 1.0 + ab.norm() + cd.norm();
    let (path, q) = if (cd - ab).norm() > tau * scale {
        (SolutionPath::Formula, cd / (cd - ab))
    } else if ab.norm() <= tau && cd.norm() <= tau {
        (SolutionPath::DegenerateZero, C64::new(0.5, 0.0))
    } else {
        (SolutionPath::DegenerateNonzero, C64::new(f64::NAN, f64::NAN))
    };
    let one = ONE;
    let p = q * a.norm_sqr() + (one - q) * c.norm_sqr();
    let cond2 = q * b.norm_sqr() + (one - q) * d.norm_sqr() - (one - p);

    let in_unit = |z: C64| is_real(z, tau) && z.re > 0.0 && z.re < 1.0;
    let violated = if path == SolutionPath::DegenerateNonzero || !in_unit(q) {
        Some(Violation::Cond4)
    } else if !in_unit(p) {
        Some(Violation::Cond1)
    } else if cond2.norm() > tau {
        Some(Violation::Cond2)
    } else if ops.defect(p.re, q.re) > tau {
        Some(Violation::OperatorEquality)
    } else {
        None
    };
    let residual = match violated {
        None => ops.defect(p.re, q.re),
        Some(_) => ops.min_defect(),
    };
    Ok(AuditVerdict {
        a,
        b,
        c,
        d,
        g,
        q,
        p,
        feasible: violated.is_none(),
        residual,
        violated_condition: violated,
        solution_path: path,
    })
}

/// Coefficients `(c, d)` of a `γ₋` that satisfies every condition for the
/// given `γ₊ = aγ₀ + bγ₁`, overlap `g` and mixing weight `q`.
///
/// `|c|²` and `|d|²` are the roots of `x² − Sx + P²` with
/// `S = (1 − qT)/(1 − q)` and `P = q|a||b|/(1 − q)`; `c` is real and
/// `d = −q·a*·b/((1 − q)c)`. When both roots are admissible, the one closer to
/// `prefer_c_sqr` (default: the larger if `|a| ≥ |b|`) becomes `|c|²`.
pub fn construct_gamma_minus(a: C64, b: C64, g: C64, q: f64, prefer_c_sqr: Option<f64>) -> Result<(C64, C64), AuditError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(AuditError::NoConstruction { q });
    }
    let t = a.norm_sqr() + b.norm_sqr();
    let s = (1.0 - q * t) / (1.0 - q);
    let pp = q * a.norm() * b.norm() / (1.0 - q);
    let disc = s * s - 4.0 * pp * pp;
    if disc < -1e-12 || s <= 0.0 {
        return Err(AuditError::NoConstruction { q });
    }
    let root = libm::sqrt(disc.max(0.0));
    let (hi, lo) = (0.5 * (s + root), 0.5 * (s - root));
    let c_sqr = match prefer_c_sqr {
        Some(x) => if (hi - x).abs() <= (lo - x).abs() { hi } else { lo },
        None => if a.norm() >= b.norm() { hi } else { lo },
    };
    let (c, d) = if c_sqr > 1e-300 {
        let c = libm::sqrt(c_sqr);
        (C64::new(c, 0.0), -(a.conj() * b) * (q / ((1.0 - q) * c)))
    } else {
        // a*b = 0 here, so d only needs the right modulus.
        (ZERO, C64::new(libm::sqrt(s), 0.0))
    };
    // Fix the norm against rounding: |c|² + |d|² + 2Re(c*d g) = 1.
    let n = libm::sqrt(c.norm_sqr() + d.norm_sqr() + 2.0 * (c.conj() * d * g).re);
    let (c, d) = (c / n, d / n);
    let p = q * a.norm_sqr() + (1.0 - q) * c.norm_sqr();
    if !(p > 0.0 && p < 1.0) {
        return Err(AuditError::NoConstruction { q });
    }
    Ok((c, d))
}

/// Ambient states `γ₀ = e₀`, `γ₁ = g·e₀ + √(1−|g|²)·e₁` in dimension `dim ≥ 2`.
pub fn canonical_pair(g: C64, dim: usize) -> (AmbientState, AmbientState) {
    let mut v0 = alloc::vec![ZERO; dim];
    let mut v1 = alloc::vec![ZERO; dim];
    v0[0] = ONE;
    v1[0] = g;
    v1[1] = C64::new(libm::sqrt((1.0 - g.norm_sqr()).max(0.0)), 0.0);
    (AmbientState::new(v0).expect("unit"), AmbientState::new(v1).expect("unit"))
}

fn lincomb(x: C64, g0: &AmbientState, y: C64, g1: &AmbientState) -> Vec<C64> {
    g0.amplitudes().iter().zip(g1.amplitudes()).map(|(u, v)| x * u + y * v).collect()
}

fn normalized(v: Vec<C64>) -> Result<AmbientState, AuditError> {
    let n = crate::linalg::norm(&v);
    Ok(AmbientState::named("gamma_minus", v.into_iter().map(|z| z / n).collect())?)
}

/// A feasible quadruple built forward from `(a, b, g, q)`.
pub fn construct_feasible(a: C64, b: C64, g: C64, q: f64, dim: usize) -> Result<FourStateInput, AuditError> {
    let (gamma0, gamma1) = canonical_pair(g, dim);
    let (c, d) = construct_gamma_minus(a, b, g, q, None)?;
    let gamma_plus = AmbientState::named("gamma_plus", lincomb(a, &gamma0, b, &gamma1))?;
    let gamma_minus = normalized(lincomb(c, &gamma0, d, &gamma1))?;
    Ok(FourStateInput { gamma0, gamma1, gamma_plus, gamma_minus })
}

/// The ideal BB84 quadruple in dimension 2.
pub fn ideal_bb84_quadruple() -> FourStateInput {
    let h = core::f64::consts::FRAC_1_SQRT_2;
    let s = |x: f64, y: f64| AmbientState::new(alloc::vec![C64::new(x, 0.0), C64::new(y, 0.0)]).expect("unit");
    FourStateInput { gamma0: s(1.0, 0.0), gamma1: s(0.0, 1.0), gamma_plus: s(h, h), gamma_minus: s(h, -h) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SweepAxis {
    /// `d → d·e^{iφ}`, then renormalise `γ₋`.
    DPhase,
    /// `|d| → |d|(1 + ε)`, then renormalise `γ₋`.
    DAmplitude,
    /// `q → q₀ + m`, with `γ₋` rebuilt to satisfy every condition.
    ConstrainedQ,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SweepPoint {
    pub magnitude: f64,
    pub residual: f64,
    pub feasible: bool,
    pub violated_condition: Option<Violation>,
}

/// Perturbs `γ₋` of a feasible quadruple along `axis` and audits each point.
pub fn perturbation_sweep(base: &FourStateInput, axis: SweepAxis, magnitudes: &[f64], tau: f64) -> Result<Vec<SweepPoint>, AuditError> {
    let v = audit_four_states(base, tau)?;
    if let Some(bad) = v.violated_condition {
        return Err(AuditError::BaseInfeasible(bad.id()));
    }
    let Decomposed { coeffs: [a, b, c, d], g, .. } = decompose(base)?;
    magnitudes
        .iter()
        .map(|&m| {
            let (c2, d2) = match axis {
                SweepAxis::DPhase => (c, d * C64::from_polar(1.0, m)),
                SweepAxis::DAmplitude => (c, d * (1.0 + m)),
                SweepAxis::ConstrainedQ => construct_gamma_minus(a, b, g, v.q.re + m, Some(c.norm_sqr()))?,
            };
            let gamma_minus = normalized(lincomb(c2, &base.gamma0, d2, &base.gamma1))?;
            let input = FourStateInput { gamma_minus, ..base.clone() };
            let r = audit_four_states(&input, tau)?;
            Ok(SweepPoint { magnitude: m, residual: r.residual, feasible: r.feasible, violated_condition: r.violated_condition })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(v: &[(f64, f64)]) -> AmbientState {
        AmbientState::new(v.iter().map(|&(r, i)| C64::new(r, i)).collect()).unwrap()
    }

    #[test]
    fn ideal_bb84_is_feasible() {
        let v = audit_four_states(&ideal_bb84_quadruple(), TAU_AUDIT).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((v.a - C64::new(h, 0.0)).norm() < 1e-12);
        assert!((v.d - C64::new(-h, 0.0)).norm() < 1e-12);
        assert!((v.q - C64::new(0.5, 0.0)).norm() < 1e-12);
        assert!((v.p - C64::new(0.5, 0.0)).norm() < 1e-12);
        assert!(v.feasible);
        assert!(v.residual <= 1e-12);
        assert_eq!(v.solution_path, SolutionPath::Formula);
    }

    #[test]
    fn phase_tilted_minus_violates_cond4() {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let mut q = ideal_bb84_quadruple();
        let e = C64::from_polar(h, core::f64::consts::FRAC_PI_4);
        q.gamma_minus = AmbientState::new(alloc::vec![C64::new(h, 0.0), -e]).unwrap();
        let v = audit_four_states(&q, TAU_AUDIT).unwrap();
        assert!(!v.feasible);
        assert_eq!(v.violated_condition, Some(Violation::Cond4));
        assert!(v.q.im.abs() > 0.1);
        assert!(v.residual > 1e-3);
    }

    #[test]
    fn degenerate_identical_sets() {
        let input = FourStateInput {
            gamma0: st(&[(1.0, 0.0), (0.0, 0.0)]),
            gamma1: st(&[(0.0, 0.0), (1.0, 0.0)]),
            gamma_plus: st(&[(1.0, 0.0), (0.0, 0.0)]),
            gamma_minus: st(&[(0.0, 0.0), (1.0, 0.0)]),
        };
        let v = audit_four_states(&input, TAU_AUDIT).unwrap();
        assert_eq!(v.solution_path, SolutionPath::DegenerateZero);
        assert!(v.feasible);
        assert_eq!(v.p, v.q);

        let same = FourStateInput { gamma_minus: input.gamma0.clone(), ..input.clone() };
        let v = audit_four_states(&same, TAU_AUDIT).unwrap();
        assert_eq!(v.violated_condition, Some(Violation::Cond1));
    }

    #[test]
    fn equal_nonzero_products_violate_cond4() {
        let mut q = ideal_bb84_quadruple();
        q.gamma_minus = q.gamma_plus.with_phase(0.3);
        let v = audit_four_states(&q, TAU_AUDIT).unwrap();
        assert_eq!(v.solution_path, SolutionPath::DegenerateNonzero);
        assert_eq!(v.violated_condition, Some(Violation::Cond4));
    }

    #[test]
    fn out_of_span_is_an_error() {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let input = FourStateInput {
            gamma0: st(&[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]),
            gamma1: st(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]),
            gamma_plus: st(&[(h, 0.0), (h, 0.0), (0.0, 0.0)]),
            gamma_minus: st(&[(h, 0.0), (0.0, 0.0), (h, 0.0)]),
        };
        assert!(matches!(
            audit_four_states(&input, TAU_AUDIT),
            Err(AuditError::Geometry(GeometryError::OutOfSpan { which: "gamma_minus", .. }))
        ));
    }

    #[test]
    fn forward_construction_is_accepted() {
        let a = C64::new(0.75, 0.0);
        let g = C64::new(0.1, 0.0);
        // Solve |a|² + |b|² + 2a·b·g = 1 for real b > 0.
        let b = -a.re * g.re + (a.re * a.re * g.re * g.re - a.re * a.re + 1.0).sqrt();
        let input = construct_feasible(a, C64::new(b, 0.0), g, 0.4, 4).unwrap();
        let v = audit_four_states(&input, TAU_AUDIT).unwrap();
        assert!(v.feasible, "{v:?}");
        assert!((v.q.re - 0.4).abs() < 1e-9);
    }

    #[test]
    fn sweeps() {
        let base = ideal_bb84_quadruple();
        let mags: Vec<f64> = (0..=30).map(|i| i as f64 * 0.01).collect();
        let pts = perturbation_sweep(&base, SweepAxis::DPhase, &mags, TAU_AUDIT).unwrap();
        assert!(pts[0].feasible && pts[0].residual < 1e-12);
        assert!(pts[1..].iter().all(|p| !p.feasible));
        assert!(pts.windows(2).all(|w| w[1].residual >= w[0].residual));
        let pts = perturbation_sweep(&base, SweepAxis::ConstrainedQ, &[-0.4, -0.2, -0.1, 0.0], TAU_AUDIT).unwrap();
        assert!(pts.iter().all(|p| p.feasible), "{pts:?}");
        let pts = perturbation_sweep(&base, SweepAxis::DAmplitude, &[0.0], TAU_AUDIT).unwrap();
        assert!(pts[0].feasible && pts[0].residual < 1e-15);
    }
}
