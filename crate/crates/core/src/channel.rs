//! Channel models acting on the transmitted system and Bob's measurements.
//!
//! Everything is expressed in the two-dimensional source frame. A channel is a
//! set of Kraus operators, except [`ChannelModel::Loss`], which drops the
//! system with a fixed probability. Bob's measurement in each basis has three
//! outcomes `0`, `1` and `∅` (no detection).

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::RngCore;

use crate::linalg::{Mat2, Mat4, Qubit, C64, ONE, ZERO};
use crate::rng::{bernoulli, categorical};

/// Tolerance on completeness, loss coincidence and unitarity.
pub const TAU_POVM: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("bad channel parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("matrix is not unitary (defect {defect})")]
    NotUnitary { defect: f64 },
    #[error("replacement state is not normalised (squared norm {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PovmError {
    #[error("{basis:?}-basis operators are incomplete: |sum M^dagger M - I| = {defect}")]
    IncompletePovm { basis: Basis, defect: f64 },
    #[error("no-detection operators differ between bases by {defect}: loss must not depend on the basis")]
    CoincidenceViolation { defect: f64 },
    #[error("detection operator is singular (smallest eigenvalue {min_eigenvalue}); cannot rescale")]
    SingularDetection { min_eigenvalue: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 { Basis::Z } else { Basis::X }
    }

    pub fn bit(self) -> u8 {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
        }
    }

    /// Frame vectors of outcome `0` and `1`: `e0, e1` for `z`, `(e0 ± e1)/√2` for `x`.
    pub fn vectors(self) -> [Qubit; 2] {
        match self {
            Basis::Z => [[ONE, ZERO], [ZERO, ONE]],
            Basis::X => {
                let h = C64::from(core::f64::consts::FRAC_1_SQRT_2);
                [[h, h], [h, -h]]
            }
        }
    }
}

/// Per-round information available to the channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundContext {
    pub index: u64,
    /// The announced discard bit, known to Eve before she acts in the
    /// entanglement-based protocol. `None` in prepare-and-measure runs.
    pub discard: Option<bool>,
}

/// An i.i.d. channel/attack applied to every transmitted system.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ChannelModel {
    Identity,
    /// `ρ ↦ (1 − p)ρ + p·I/2`.
    Depolarizing { p: f64 },
    Unitary { u: Mat2 },
    /// The system is lost with probability `eta`.
    Loss { eta: f64 },
    /// Eve measures projectively in `basis` and resends her result.
    InterceptResend { basis: Basis },
    /// Every system is replaced by `state`.
    FixedReplace { state: Qubit },
    /// Different channels for kept and discarded rounds; uses the discard bit
    /// when it is known and `kept` otherwise.
    DiscardAware { kept: Box<ChannelModel>, discarded: Box<ChannelModel> },
}

/// Result of sending one system through a channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transmitted<S> {
    State(S),
    Lost,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        match self {
            ChannelModel::Depolarizing { p } if !(0.0..=1.0).contains(p) => {
                Err(ChannelError::BadParameter { name: "p", value: *p })
            }
            ChannelModel::Loss { eta } if !(0.0..=1.0).contains(eta) => {
                Err(ChannelError::BadParameter { name: "eta", value: *eta })
            }
            ChannelModel::Unitary { u } => {
                let defect = u.gram().max_abs_diff(&Mat2::identity());
                if defect > TAU_POVM { Err(ChannelError::NotUnitary { defect }) } else { Ok(()) }
            }
            ChannelModel::FixedReplace { state } => {
                let norm_sqr = crate::linalg::qubit_norm_sqr(state);
                if (norm_sqr - 1.0).abs() > TAU_POVM {
                    Err(ChannelError::NotNormalized { norm_sqr })
                } else {
                    Ok(())
                }
            }
            ChannelModel::DiscardAware { kept, discarded } => {
                kept.validate()?;
                discarded.validate()
            }
            _ => Ok(()),
        }
    }

    /// Whether the model can drop systems.
    pub fn is_lossy(&self) -> bool {
        match self {
            ChannelModel::Loss { eta } => *eta > 0.0,
            ChannelModel::DiscardAware { kept, discarded } => kept.is_lossy() || discarded.is_lossy(),
            _ => false,
        }
    }

    /// The model that acts in a round with the given context.
    pub fn resolve(&self, ctx: &RoundContext) -> &ChannelModel {
        match self {
            ChannelModel::DiscardAware { kept, discarded } => {
                if ctx.discard == Some(true) { discarded.resolve(ctx) } else { kept.resolve(ctx) }
            }
            other => other,
        }
    }

    /// Kraus operators of the trace-preserving part; empty for `Loss`,
    /// which acts as the identity on systems that survive.
    fn kraus(&self) -> Vec<Mat2> {
        match self {
            ChannelModel::Identity | ChannelModel::Loss { .. } | ChannelModel::DiscardAware { .. } => {
                alloc::vec![Mat2::identity()]
            }
            ChannelModel::Depolarizing { p } => {
                let i = C64::new(0.0, 1.0);
                let s = libm::sqrt(p / 4.0);
                alloc::vec![
                    Mat2::identity().scale_real(libm::sqrt(1.0 - 3.0 * p / 4.0)),
                    Mat2::new(ZERO, ONE, ONE, ZERO).scale_real(s),
                    Mat2::new(ZERO, -i, i, ZERO).scale_real(s),
                    Mat2::real_diag(1.0, -1.0).scale_real(s),
                ]
            }
            ChannelModel::Unitary { u } => alloc::vec![*u],
            ChannelModel::InterceptResend { basis } => {
                basis.vectors().iter().map(Mat2::projector).collect()
            }
            ChannelModel::FixedReplace { state } => {
                // |ψ⟩⟨e_k| for k = 0, 1.
                let e: [Qubit; 2] = [[ONE, ZERO], [ZERO, ONE]];
                e.iter().map(|ek| Mat2::outer(state, ek)).collect()
            }
        }
    }

    fn loss_probability(&self) -> f64 {
        match self {
            ChannelModel::Loss { eta } => *eta,
            _ => 0.0,
        }
    }

    /// Deterministic action on a density operator, ignoring loss.
    pub fn map_density(&self, rho: &Mat2) -> Mat2 {
        self.kraus().iter().fold(Mat2::zero(), |acc, k| acc + k.conjugate(rho))
    }

    /// Deterministic action `(I ⊗ 𝓔)` on a joint state, ignoring loss.
    pub fn map_joint(&self, rho: &Mat4) -> Mat4 {
        let mut out = Mat4::zero();
        for k in self.kraus() {
            out.accumulate(&rho.conjugate_b(&k));
        }
        out
    }
}

/// Sends `rho` through the channel; loss is sampled from `rng`.
pub fn apply_channel<R: RngCore + ?Sized>(
    rho: &Mat2,
    channel: &ChannelModel,
    ctx: &RoundContext,
    rng: &mut R,
) -> Transmitted<Mat2> {
    let ch = channel.resolve(ctx);
    if bernoulli(rng, ch.loss_probability()) {
        return Transmitted::Lost;
    }
    Transmitted::State(ch.map_density(rho))
}

/// Joint-state counterpart of [`apply_channel`], acting on the frame factor.
pub fn apply_channel_joint<R: RngCore + ?Sized>(
    rho: &Mat4,
    channel: &ChannelModel,
    ctx: &RoundContext,
    rng: &mut R,
) -> Transmitted<Mat4> {
    let ch = channel.resolve(ctx);
    if bernoulli(rng, ch.loss_probability()) {
        return Transmitted::Lost;
    }
    Transmitted::State(ch.map_joint(rho))
}

/// Bob's raw outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Outcome {
    Zero,
    One,
    /// No detection.
    Empty,
}

impl Outcome {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Outcome::Zero,
            1 => Outcome::One,
            _ => Outcome::Empty,
        }
    }

    pub fn bit(self) -> Option<u8> {
        match self {
            Outcome::Zero => Some(0),
            Outcome::One => Some(1),
            Outcome::Empty => None,
        }
    }
}

/// Measurement operators per basis, indexed `[0, 1, ∅]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeasurementModel {
    pub z: [Mat2; 3],
    pub x: [Mat2; 3],
}

impl MeasurementModel {
    /// Lossless projective measurements in the frame's `z` and `x` bases.
    pub fn ideal() -> Self {
        let proj = |b: Basis| {
            let v = b.vectors();
            [Mat2::projector(&v[0]), Mat2::projector(&v[1]), Mat2::zero()]
        };
        MeasurementModel { z: proj(Basis::Z), x: proj(Basis::X) }
    }

    /// Attaches basis-independent loss: detection operators are scaled by
    /// `√(1 − loss)` and `M^∅ = √loss·I`.
    pub fn with_uniform_loss(&self, loss: f64) -> Self {
        self.with_basis_loss(loss, loss)
    }

    /// Loss probability `loss_z` in the `z` basis and `loss_x` in the `x` basis.
    pub fn with_basis_loss(&self, loss_z: f64, loss_x: f64) -> Self {
        let attach = |ops: &[Mat2; 3], loss: f64| {
            let keep = libm::sqrt(1.0 - loss);
            [ops[0].scale_real(keep), ops[1].scale_real(keep), Mat2::identity().scale_real(libm::sqrt(loss))]
        };
        MeasurementModel { z: attach(&self.z, loss_z), x: attach(&self.x, loss_x) }
    }

    /// The ideal pair behind a uniform loss probability `loss`.
    pub fn uniform_loss(loss: f64) -> Self {
        Self::ideal().with_uniform_loss(loss)
    }

    pub fn operators(&self, basis: Basis) -> &[Mat2; 3] {
        match basis {
            Basis::Z => &self.z,
            Basis::X => &self.x,
        }
    }

    /// `tr(M†M ρ)` for each outcome.
    pub fn probabilities(&self, rho: &Mat2, basis: Basis) -> [f64; 3] {
        let ops = self.operators(basis);
        let mut p = [0.0; 3];
        for (pi, m) in p.iter_mut().zip(ops) {
            *pi = (m.gram() * *rho).trace().re.max(0.0);
        }
        p
    }
}

/// Defects measured by [`validate_povm`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PovmReport {
    pub completeness_defect_z: f64,
    pub completeness_defect_x: f64,
    pub coincidence_defect: f64,
}

/// Checks completeness in each basis and that the no-detection operators
/// coincide, `(M^{Z,∅})†M^{Z,∅} = (M^{X,∅})†M^{X,∅}`.
pub fn validate_povm(model: &MeasurementModel) -> Result<PovmReport, PovmError> {
    let completeness = |ops: &[Mat2; 3]| {
        ops.iter().fold(Mat2::zero(), |acc, m| acc + m.gram()).max_abs_diff(&Mat2::identity())
    };
    let report = PovmReport {
        completeness_defect_z: completeness(&model.z),
        completeness_defect_x: completeness(&model.x),
        coincidence_defect: model.z[2].gram().max_abs_diff(&model.x[2].gram()),
    };
    if report.completeness_defect_z > TAU_POVM {
        return Err(PovmError::IncompletePovm { basis: Basis::Z, defect: report.completeness_defect_z });
    }
    if report.completeness_defect_x > TAU_POVM {
        return Err(PovmError::IncompletePovm { basis: Basis::X, defect: report.completeness_defect_x });
    }
    if report.coincidence_defect > TAU_POVM {
        return Err(PovmError::CoincidenceViolation { defect: report.coincidence_defect });
    }
    Ok(report)
}

/// Two-outcome measurement obtained by conditioning on detection.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectedModel {
    pub z: [Mat2; 2],
    pub x: [Mat2; 2],
    /// `M^✓ = Σ_{t∈{0,1}} (M^{b,t})†M^{b,t}`, the same for both bases.
    pub detection: Mat2,
}

impl DetectedModel {
    pub fn operators(&self, basis: Basis) -> &[Mat2; 2] {
        match basis {
            Basis::Z => &self.z,
            Basis::X => &self.x,
        }
    }

    pub fn probabilities(&self, rho: &Mat2, basis: Basis) -> [f64; 2] {
        let ops = self.operators(basis);
        [(ops[0].gram() * *rho).trace().re.max(0.0), (ops[1].gram() * *rho).trace().re.max(0.0)]
    }
}

/// `M′^{b,t} = M^{b,t}·(M^✓)^{-1/2}` for `t ∈ {0, 1}`.
pub fn rescale_povm(model: &MeasurementModel) -> Result<DetectedModel, PovmError> {
    validate_povm(model)?;
    let detection = model.z[0].gram() + model.z[1].gram();
    let (vals, _) = detection.hermitian_eigen();
    if !(vals[0] > TAU_POVM) {
        return Err(PovmError::SingularDetection { min_eigenvalue: vals[0] });
    }
    let inv_sqrt = detection.hermitian_map(|v| 1.0 / libm::sqrt(v));
    let rescale = |ops: &[Mat2; 3]| [ops[0] * inv_sqrt, ops[1] * inv_sqrt];
    Ok(DetectedModel { z: rescale(&model.z), x: rescale(&model.x), detection })
}

/// Samples Bob's outcome with probabilities `tr(M†M ρ)`.
pub fn bob_measure<R: RngCore + ?Sized>(
    rho: &Mat2,
    basis: Basis,
    model: &MeasurementModel,
    rng: &mut R,
) -> Outcome {
    Outcome::from_index(categorical(rng, &model.probabilities(rho, basis)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SourceTriple;
    use crate::rng::{CounterRng, DrawTag};

    #[test]
    fn identity_returns_input() {
        let rho = Mat2::projector(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let mut rng = CounterRng::new(0).stream(0, DrawTag::Channel);
        let out = apply_channel(&rho, &ChannelModel::Identity, &RoundContext::default(), &mut rng);
        assert_eq!(out, Transmitted::State(rho));
    }

    #[test]
    fn full_depolarizing_is_maximally_mixed() {
        let rho = Mat2::projector(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let out = ChannelModel::Depolarizing { p: 1.0 }.map_density(&rho);
        assert!(out.max_abs_diff(&Mat2::real_diag(0.5, 0.5)) < 1e-15);
        let out = ChannelModel::Depolarizing { p: 0.3 }.map_density(&rho);
        let want = rho.scale_real(0.7) + Mat2::real_diag(0.15, 0.15);
        assert!(out.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn channels_preserve_trace() {
        let rho = Mat2::projector(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let theta = 0.4;
        let u = Mat2::new(
            C64::from(libm::cos(theta)),
            C64::from(-libm::sin(theta)),
            C64::from(libm::sin(theta)),
            C64::from(libm::cos(theta)),
        );
        for ch in [
            ChannelModel::Identity,
            ChannelModel::Depolarizing { p: 0.37 },
            ChannelModel::Unitary { u },
            ChannelModel::InterceptResend { basis: Basis::X },
            ChannelModel::FixedReplace { state: [ONE, ZERO] },
        ] {
            ch.validate().unwrap();
            assert!((ch.map_density(&rho).trace().re - 1.0).abs() < 1e-15, "{ch:?}");
        }
    }

    #[test]
    fn bad_parameters() {
        assert!(ChannelModel::Depolarizing { p: 1.5 }.validate().is_err());
        assert!(ChannelModel::Loss { eta: -0.1 }.validate().is_err());
        let not_u = Mat2::real_diag(1.0, 0.5);
        assert!(matches!(ChannelModel::Unitary { u: not_u }.validate(), Err(ChannelError::NotUnitary { .. })));
    }

    #[test]
    fn discard_aware_sees_context() {
        let ch = ChannelModel::DiscardAware {
            kept: Box::new(ChannelModel::Identity),
            discarded: Box::new(ChannelModel::FixedReplace { state: [ONE, ZERO] }),
        };
        let ctx = RoundContext { index: 3, discard: Some(true) };
        assert_eq!(ch.resolve(&ctx), &ChannelModel::FixedReplace { state: [ONE, ZERO] });
        assert_eq!(ch.resolve(&RoundContext::default()), &ChannelModel::Identity);
    }

    #[test]
    fn ideal_measurement_examples() {
        let tr = SourceTriple::ideal_bb84();
        let rho = Mat2::projector(&tr.gamma0);
        let m = MeasurementModel::ideal();
        let pz = m.probabilities(&rho, Basis::Z);
        assert!((pz[0] - 1.0).abs() < 1e-15 && pz[1].abs() < 1e-15);
        let px = m.probabilities(&rho, Basis::X);
        assert!((px[0] - 0.5).abs() < 1e-15 && (px[1] - 0.5).abs() < 1e-15);
        let mut rng = CounterRng::new(9).stream(0, DrawTag::BobOutcome);
        assert!((0..1000).all(|_| bob_measure(&rho, Basis::Z, &m, &mut rng) == Outcome::Zero));
    }

    #[test]
    fn povm_validation_and_rescaling() {
        let ideal = MeasurementModel::ideal();
        validate_povm(&ideal).unwrap();
        let r = rescale_povm(&ideal).unwrap();
        for b in [Basis::Z, Basis::X] {
            for t in 0..2 {
                assert!(r.operators(b)[t].max_abs_diff(&ideal.operators(b)[t]) < 1e-12);
            }
        }

        let lossy = MeasurementModel::uniform_loss(0.2);
        validate_povm(&lossy).unwrap();
        let r = rescale_povm(&lossy).unwrap();
        for b in [Basis::Z, Basis::X] {
            for t in 0..2 {
                assert!(r.operators(b)[t].max_abs_diff(&ideal.operators(b)[t]) < 1e-12);
            }
        }

        let biased = MeasurementModel::ideal().with_basis_loss(0.1, 0.3);
        assert!(matches!(validate_povm(&biased), Err(PovmError::CoincidenceViolation { .. })));
        assert!(rescale_povm(&biased).is_err());

        let mut broken = MeasurementModel::ideal();
        broken.x[0] = broken.x[0].scale_real(0.5);
        assert!(matches!(validate_povm(&broken), Err(PovmError::IncompletePovm { basis: Basis::X, .. })));

        assert!(matches!(
            rescale_povm(&MeasurementModel::uniform_loss(1.0)),
            Err(PovmError::SingularDetection { .. })
        ));
    }
}
