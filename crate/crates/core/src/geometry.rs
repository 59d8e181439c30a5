//! Source-state algebra.
//!
//! The three source states `γ₀, γ₁, γ₊` may live in any ambient Hilbert space
//! but must span a two-dimensional subspace. [`build_frame`] fixes an
//! orthonormal frame of that span (Gram–Schmidt seeded by `γ₀`, then `γ₁`) and
//! solves `γ₊ = a·γ₀ + b·γ₁`. Everything downstream works with 2-vectors in
//! that frame.

use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{self, qubit_inner, qubit_norm_sqr, Qubit, C64, ONE, ZERO};

/// Tolerance on input normalisation and on derived orthonormality.
pub const TAU_NORM: f64 = 1e-9;
/// Default tolerance on the out-of-span residual and on the Gram determinant.
pub const TAU_SPAN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("{which} has squared norm {norm_sqr}, expected 1 within {TAU_NORM}")]
    NotNormalized { which: &'static str, norm_sqr: f64 },
    #[error("{which} has no amplitudes")]
    EmptyState { which: &'static str },
    #[error("{which} has dimension {found}, expected {expected}")]
    DimensionMismatch { which: &'static str, expected: usize, found: usize },
    #[error("gamma0 and gamma1 are (nearly) parallel: Gram determinant {gram_det} <= {tolerance}")]
    DegenerateSpan { gram_det: f64, tolerance: f64 },
    #[error("{which} lies outside span(gamma0, gamma1): residual {residual} > {tolerance}")]
    OutOfSpan { which: &'static str, residual: f64, tolerance: f64 },
    #[error("T = |a|^2 + |b|^2 = {t} must exceed 1/2")]
    InvalidT { t: f64 },
    #[error("the two algebraic forms of the entangled state differ by {defect}")]
    RepresentationMismatch { defect: f64 },
}

/// Which input a frame vector or coefficient refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StateLabel {
    Gamma0,
    Gamma1,
    GammaPlus,
    GammaMinus,
}

impl StateLabel {
    pub fn name(self) -> &'static str {
        match self {
            StateLabel::Gamma0 => "gamma0",
            StateLabel::Gamma1 => "gamma1",
            StateLabel::GammaPlus => "gamma_plus",
            StateLabel::GammaMinus => "gamma_minus",
        }
    }
}

/// A pure state in the ambient space, unit norm after validation.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AmbientState {
    amplitudes: Vec<C64>,
}

impl AmbientState {
    /// Validates `‖ψ‖² = 1` within [`TAU_NORM`] and renormalises.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self, GeometryError> {
        Self::named("state", amplitudes)
    }

    pub fn named(which: &'static str, amplitudes: Vec<C64>) -> Result<Self, GeometryError> {
        if amplitudes.is_empty() {
            return Err(GeometryError::EmptyState { which });
        }
        let norm_sqr = linalg::norm_sqr(&amplitudes);
        if !norm_sqr.is_finite() || (norm_sqr - 1.0).abs() > TAU_NORM {
            return Err(GeometryError::NotNormalized { which, norm_sqr });
        }
        let inv = 1.0 / libm::sqrt(norm_sqr);
        Ok(AmbientState { amplitudes: amplitudes.into_iter().map(|z| z * inv).collect() })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// The same state multiplied by the global phase `e^{iθ}`.
    pub fn with_phase(&self, theta: f64) -> Self {
        let ph = C64::from_polar(1.0, theta);
        AmbientState { amplitudes: self.amplitudes.iter().map(|z| z * ph).collect() }
    }

    /// Standard basis vector `|index⟩` of an ambient space of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amplitudes = alloc::vec![ZERO; dim];
        amplitudes[index] = ONE;
        AmbientState { amplitudes }
    }
}

/// Orthonormal frame `(e0, e1)` of the span of the source states.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SubspaceFrame {
    pub e0: AmbientState,
    pub e1: AmbientState,
    /// Inputs that seeded Gram–Schmidt, in order.
    pub origin_labels: [StateLabel; 2],
}

impl SubspaceFrame {
    /// Gram–Schmidt on `(first, second)`.
    pub fn gram_schmidt(
        first: &AmbientState,
        second: &AmbientState,
        origin_labels: [StateLabel; 2],
        tau_span: f64,
    ) -> Result<Self, GeometryError> {
        if first.dim() != second.dim() {
            return Err(GeometryError::DimensionMismatch {
                which: origin_labels[1].name(),
                expected: first.dim(),
                found: second.dim(),
            });
        }
        let overlap = linalg::inner(first.amplitudes(), second.amplitudes());
        let rest = linalg::axpy_neg(second.amplitudes(), overlap, first.amplitudes());
        let gram_det = linalg::norm_sqr(&rest);
        if gram_det <= tau_span {
            return Err(GeometryError::DegenerateSpan { gram_det, tolerance: tau_span });
        }
        let inv = 1.0 / libm::sqrt(gram_det);
        let e1 = AmbientState { amplitudes: rest.into_iter().map(|z| z * inv).collect() };
        Ok(SubspaceFrame { e0: first.clone(), e1, origin_labels })
    }

    pub fn dim(&self) -> usize {
        self.e0.dim()
    }

    /// Frame coordinates of `v` and the norm of its out-of-span residual.
    pub fn project(&self, v: &[C64]) -> (Qubit, f64) {
        let c0 = linalg::inner(self.e0.amplitudes(), v);
        let c1 = linalg::inner(self.e1.amplitudes(), v);
        let residual: Vec<C64> = v
            .iter()
            .zip(self.e0.amplitudes().iter().zip(self.e1.amplitudes()))
            .map(|(x, (u0, u1))| x - c0 * u0 - c1 * u1)
            .collect();
        ([c0, c1], linalg::norm(&residual))
    }

    /// Ambient vector with the given frame coordinates.
    pub fn lift(&self, coords: &Qubit) -> Vec<C64> {
        self.e0
            .amplitudes()
            .iter()
            .zip(self.e1.amplitudes())
            .map(|(u0, u1)| coords[0] * u0 + coords[1] * u1)
            .collect()
    }
}

/// The source states reduced to frame coordinates, with every derived
/// quantity the security calculus needs.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SourceTriple {
    /// Coefficient of `γ₀` in `γ₊ = a·γ₀ + b·γ₁`.
    pub a: C64,
    /// Coefficient of `γ₁` in `γ₊ = a·γ₀ + b·γ₁`.
    pub b: C64,
    /// Gram overlap `⟨γ₀|γ₁⟩`.
    pub g: C64,
    /// `|a|² + |b|²`.
    pub t: f64,
    /// Ambient frame, absent when the triple was built from coefficients.
    pub frame: Option<SubspaceFrame>,
    pub gamma0: Qubit,
    pub gamma1: Qubit,
    pub gamma_plus: Qubit,
    pub gamma_minus: Qubit,
    /// `ξ₊` in Alice's qubit space `{|0⟩, |1⟩}`.
    pub xi_plus: Qubit,
    /// `ξ₋` in Alice's qubit space `{|0⟩, |1⟩}`.
    pub xi_minus: Qubit,
}

/// Reduces three ambient states to a [`SourceTriple`].
pub fn build_frame(
    gamma0: &AmbientState,
    gamma1: &AmbientState,
    gamma_plus: &AmbientState,
    tau_span: f64,
) -> Result<SourceTriple, GeometryError> {
    if gamma_plus.dim() != gamma0.dim() {
        return Err(GeometryError::DimensionMismatch {
            which: "gamma_plus",
            expected: gamma0.dim(),
            found: gamma_plus.dim(),
        });
    }
    let frame = SubspaceFrame::gram_schmidt(
        gamma0,
        gamma1,
        [StateLabel::Gamma0, StateLabel::Gamma1],
        tau_span,
    )?;
    let (g1, _) = frame.project(gamma1.amplitudes());
    let (plus, residual) = frame.project(gamma_plus.amplitudes());
    if residual > tau_span {
        return Err(GeometryError::OutOfSpan { which: "gamma_plus", residual, tolerance: tau_span });
    }
    // γ₁ = g·e0 + s·e1 with s real and positive by construction.
    let g = g1[0];
    let s = g1[1];
    let inv = 1.0 / libm::sqrt(qubit_norm_sqr(&plus));
    let plus = [plus[0] * inv, plus[1] * inv];
    let b = plus[1] / s;
    let a = plus[0] - g * b;
    let mut triple = assemble(a, b, g, [ONE, ZERO], [g, s], plus)?;
    triple.frame = Some(frame);
    Ok(triple)
}

impl SourceTriple {
    /// Builds a triple directly from `(a, b, g)` in the canonical frame
    /// `γ₀ = (1, 0)`, `γ₁ = (g, √(1−|g|²))`.
    pub fn from_coefficients(a: C64, b: C64, g: C64) -> Result<Self, GeometryError> {
        check_t(a.norm_sqr() + b.norm_sqr())?;
        let gram_det = 1.0 - g.norm_sqr();
        if gram_det <= TAU_SPAN {
            return Err(GeometryError::DegenerateSpan { gram_det, tolerance: TAU_SPAN });
        }
        let gamma1 = [g, C64::from(libm::sqrt(gram_det))];
        let plus = [a + b * g, b * gamma1[1]];
        let norm_sqr = qubit_norm_sqr(&plus);
        if (norm_sqr - 1.0).abs() > TAU_NORM {
            return Err(GeometryError::NotNormalized { which: "gamma_plus", norm_sqr });
        }
        assemble(a, b, g, [ONE, ZERO], gamma1, plus)
    }

    /// The ideal BB84 triple `|0⟩, |1⟩, |+⟩`.
    pub fn ideal_bb84() -> Self {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        Self::from_coefficients(C64::from(h), C64::from(h), ZERO).expect("ideal triple is valid")
    }

    /// `Re(a*·b·g)`; equals `(1 − T)/2` for a normalised `γ₊`.
    pub fn re_abg(&self) -> f64 {
        (self.a.conj() * self.b * self.g).re
    }

    /// Frame coordinates of the state with the given label.
    pub fn state(&self, label: StateLabel) -> Qubit {
        match label {
            StateLabel::Gamma0 => self.gamma0,
            StateLabel::Gamma1 => self.gamma1,
            StateLabel::GammaPlus => self.gamma_plus,
            StateLabel::GammaMinus => self.gamma_minus,
        }
    }
}

fn assemble(
    a: C64,
    b: C64,
    g: C64,
    gamma0: Qubit,
    gamma1: Qubit,
    gamma_plus: Qubit,
) -> Result<SourceTriple, GeometryError> {
    let t = a.norm_sqr() + b.norm_sqr();
    if !(t > 0.5) {
        return Err(GeometryError::InvalidT { t });
    }
    let mut triple = SourceTriple {
        a,
        b,
        g,
        t,
        frame: None,
        gamma0,
        gamma1,
        gamma_plus,
        gamma_minus: [ZERO, ZERO],
        xi_plus: [ZERO, ZERO],
        xi_minus: [ZERO, ZERO],
    };
    triple.gamma_minus = derive_gamma_minus(&triple)?;
    let (xp, xm) = derive_xi_basis(&triple)?;
    triple.xi_plus = xp;
    triple.xi_minus = xm;
    Ok(triple)
}

fn check_t(t: f64) -> Result<(), GeometryError> {
    if t > 0.5 {
        Ok(())
    } else {
        Err(GeometryError::InvalidT { t })
    }
}

/// `γ₋ = (b*·γ₀ − a*·γ₁)/√(2T − 1)` in frame coordinates.
pub fn derive_gamma_minus(triple: &SourceTriple) -> Result<Qubit, GeometryError> {
    let t = triple.a.norm_sqr() + triple.b.norm_sqr();
    check_t(t)?;
    let inv = 1.0 / libm::sqrt(2.0 * t - 1.0);
    let (bc, ac) = (triple.b.conj(), triple.a.conj());
    Ok([
        (bc * triple.gamma0[0] - ac * triple.gamma1[0]) * inv,
        (bc * triple.gamma0[1] - ac * triple.gamma1[1]) * inv,
    ])
}

/// `ξ₊ = (a*|0⟩ + b*|1⟩)/√T` and `ξ₋ = (b|0⟩ − a|1⟩)/√T`.
pub fn derive_xi_basis(triple: &SourceTriple) -> Result<(Qubit, Qubit), GeometryError> {
    let t = triple.a.norm_sqr() + triple.b.norm_sqr();
    check_t(t)?;
    let inv = 1.0 / libm::sqrt(t);
    Ok((
        [triple.a.conj() * inv, triple.b.conj() * inv],
        [triple.b * inv, -triple.a * inv],
    ))
}

/// Alice's qubit ⊗ frame coefficient grid: `grid[j][k]` multiplies `|j⟩_A ⊗ e_k`.
pub type PairGrid = [[C64; 2]; 2];

/// The per-round entangled state `Ψ` in both algebraic forms.
#[derive(Clone, Debug, PartialEq)]
pub struct EntangledPair {
    /// `(|0⟩γ₀ + |1⟩γ₁)/√2`.
    pub grid: PairGrid,
    /// `(ξ₊γ₊ + √(2T−1)·ξ₋γ₋)/√(2T)`.
    pub xi_grid: PairGrid,
    pub t: f64,
}

impl EntangledPair {
    pub fn norm_sqr(&self) -> f64 {
        self.grid.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Largest entrywise difference between the two forms.
    pub fn representation_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..2 {
            for k in 0..2 {
                worst = worst.max((self.grid[j][k] - self.xi_grid[j][k]).norm());
            }
        }
        worst
    }

    /// Projects Alice's qubit onto `alice`, returning the outcome probability
    /// and the normalised conditional state of the transmitted system.
    pub fn condition_on(&self, alice: &Qubit) -> (f64, Qubit) {
        let v = [
            alice[0].conj() * self.grid[0][0] + alice[1].conj() * self.grid[1][0],
            alice[0].conj() * self.grid[0][1] + alice[1].conj() * self.grid[1][1],
        ];
        let p = qubit_norm_sqr(&v);
        if p <= 0.0 {
            return (0.0, [ZERO, ZERO]);
        }
        let inv = 1.0 / libm::sqrt(p);
        (p, [v[0] * inv, v[1] * inv])
    }

    /// Outcome probabilities of a `z` measurement of Alice's qubit.
    pub fn z_probabilities(&self) -> [f64; 2] {
        [
            self.condition_on(&[ONE, ZERO]).0,
            self.condition_on(&[ZERO, ONE]).0,
        ]
    }

    /// Outcome probabilities `(ξ₊, ξ₋)` of Alice's conjugate measurement.
    pub fn xi_probabilities(&self, triple: &SourceTriple) -> [f64; 2] {
        [
            self.condition_on(&triple.xi_plus).0,
            self.condition_on(&triple.xi_minus).0,
        ]
    }
}

/// Builds `Ψ` and checks that its two algebraic forms agree within [`TAU_NORM`].
pub fn build_entangled_state(triple: &SourceTriple) -> Result<EntangledPair, GeometryError> {
    check_t(triple.t)?;
    let h = core::f64::consts::FRAC_1_SQRT_2;
    let grid = [
        [triple.gamma0[0] * h, triple.gamma0[1] * h],
        [triple.gamma1[0] * h, triple.gamma1[1] * h],
    ];
    let w_minus = libm::sqrt(2.0 * triple.t - 1.0);
    let inv = 1.0 / libm::sqrt(2.0 * triple.t);
    let mut xi_grid = [[ZERO; 2]; 2];
    for (j, row) in xi_grid.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = (triple.xi_plus[j] * triple.gamma_plus[k]
                + triple.xi_minus[j] * triple.gamma_minus[k] * w_minus)
                * inv;
        }
    }
    let pair = EntangledPair { grid, xi_grid, t: triple.t };
    let defect = pair.representation_defect();
    if defect > TAU_NORM {
        return Err(GeometryError::RepresentationMismatch { defect });
    }
    Ok(pair)
}

/// `c = max(|a|², |b|²)/T`, the largest squared overlap between Alice's `z`
/// and `ξ` basis vectors.
pub fn overlap_c(triple: &SourceTriple) -> f64 {
    triple.a.norm_sqr().max(triple.b.norm_sqr()) / triple.t
}

/// The same constant read off the four overlaps `|⟨j|ξ±⟩|²` directly.
pub fn overlap_c_from_xi(triple: &SourceTriple) -> f64 {
    let z: [Qubit; 2] = [[ONE, ZERO], [ZERO, ONE]];
    let mut c = 0.0f64;
    for zj in &z {
        for xi in [&triple.xi_plus, &triple.xi_minus] {
            c = c.max(qubit_inner(zj, xi).norm_sqr());
        }
    }
    c
}

/// Draws `(a, b, g)` with `γ₊ = aγ₀ + bγ₁` normalised. About half of the draws
/// violate `T > 1/2`; callers filter as needed.
pub fn random_coefficients<R: Rng + ?Sized>(rng: &mut R) -> (C64, C64, C64) {
    let r = 0.95 * rng.random::<f64>();
    let g = C64::from_polar(r, core::f64::consts::TAU * rng.random::<f64>());
    loop {
        let a = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let b = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n2 = a.norm_sqr() + b.norm_sqr() + 2.0 * (a.conj() * b * g).re;
        if n2 > 1e-3 {
            let inv = 1.0 / libm::sqrt(n2);
            return (a * inv, b * inv, g);
        }
    }
}
