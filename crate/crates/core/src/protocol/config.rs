use crate::finite_key::{KeyTarget, SecurityInputs};
use crate::geometry::{overlap_c, SourceTriple};

use super::ec::EcMode;

/// Tolerance on probability pairs summing to one.
const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: &'static str },
    #[error("n1 + k1 + k2 + k3 + k4 = {used} exceeds m = {m}")]
    TooManyRounds { used: u64, m: u64 },
    #[error("nu0 = {nu0} must lie in (0, 1/(2T)) = (0, {limit})")]
    Nu0OutOfRange { nu0: f64, limit: f64 },
    #[error("the entanglement-based run needs a lossless channel; loss belongs in the measurement model")]
    LossyChannel,
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Povm(#[from] crate::channel::PovmError),
}

fn invalid(field: &'static str, reason: &'static str) -> ConfigError {
    ConfigError::Invalid { field, reason }
}

/// Public parameters of one protocol run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolConfig {
    /// Total rounds `M` (`M′` for the entanglement-based protocol).
    #[cfg_attr(feature = "serde", serde(rename = "M"))]
    pub rounds: u64,
    /// Required successful rounds `m`.
    #[cfg_attr(feature = "serde", serde(rename = "m"))]
    pub required: u64,
    #[cfg_attr(feature = "serde", serde(rename = "pA_z"))]
    pub pa_z: f64,
    #[cfg_attr(feature = "serde", serde(rename = "pA_x"))]
    pub pa_x: f64,
    #[cfg_attr(feature = "serde", serde(rename = "pB_z"))]
    pub pb_z: f64,
    #[cfg_attr(feature = "serde", serde(rename = "pB_x"))]
    pub pb_x: f64,
    pub n1: u64,
    pub k1: u64,
    pub k2: u64,
    pub k3: u64,
    pub k4: u64,
    pub delta: f64,
    pub delta_mismatch: f64,
    /// Error-correction leakage in bits.
    pub r: u64,
    /// Verification-hash length in bits.
    pub t: u32,
    /// Final key length.
    #[cfg_attr(feature = "serde", serde(rename = "key_length"))]
    pub ell: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub ec_mode: EcMode,
}

/// Zero-rate threshold used by [`ProtocolConfig::calibrated`]: one half plus
/// three standard Hoeffding deviations at confidence `1 − 10⁻³`, capped at 1.
pub fn default_delta_mismatch(k2: u64) -> f64 {
    (0.5 + 3.0 * libm::sqrt(libm::log(1000.0) / (2.0 * k2 as f64))).min(1.0)
}

impl ProtocolConfig {
    /// Uniform bases on both sides, `δ_mm` from [`default_delta_mismatch`],
    /// `r = 0`, `t = 64` and oracle error correction.
    #[allow(clippy::too_many_arguments)]
    pub fn calibrated(rounds: u64, required: u64, n1: u64, k: [u64; 4], delta: f64, ell: u64, seed: u64) -> Self {
        ProtocolConfig {
            rounds,
            required,
            pa_z: 0.5,
            pa_x: 0.5,
            pb_z: 0.5,
            pb_x: 0.5,
            n1,
            k1: k[0],
            k2: k[1],
            k3: k[2],
            k4: k[3],
            delta,
            delta_mismatch: default_delta_mismatch(k[1].min(k[2])),
            r: 0,
            t: 64,
            ell,
            seed,
            ec_mode: EcMode::Oracle,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ProtocolConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rounds == 0 {
            return Err(invalid("M", "must be positive"));
        }
        if self.required == 0 {
            return Err(invalid("m", "must be positive"));
        }
        check_pair("pA", self.pa_z, self.pa_x)?;
        check_pair("pB", self.pb_z, self.pb_x)?;
        let used = self.n1 + self.k1 + self.k2 + self.k3 + self.k4;
        if used > self.required {
            return Err(ConfigError::TooManyRounds { used, m: self.required });
        }
        if !(0.0..=0.5).contains(&self.delta) {
            return Err(invalid("delta", "must lie in [0, 1/2]"));
        }
        if !(0.0..=1.0).contains(&self.delta_mismatch) {
            return Err(invalid("delta_mismatch", "must lie in [0, 1]"));
        }
        if self.t == 0 {
            return Err(invalid("t", "the verification hash needs at least one bit"));
        }
        if self.ell > self.n1 {
            return Err(invalid("key_length", "cannot exceed n1"));
        }
        Ok(())
    }

    /// Finite-key inputs matching this configuration and source.
    pub fn security_inputs(&self, triple: &SourceTriple) -> SecurityInputs {
        SecurityInputs {
            n1: self.n1,
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            k4: self.k4,
            delta: self.delta,
            delta_mismatch: self.delta_mismatch,
            t_weight: triple.t,
            c: overlap_c(triple),
            r: self.r,
            hash_bits: self.t,
            target: KeyTarget::KeyLength(self.ell),
        }
    }
}

fn check_pair(field: &'static str, z: f64, x: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&z) || !(0.0..=1.0).contains(&x) {
        return Err(invalid(field, "probabilities must lie in [0, 1]"));
    }
    if (z + x - 1.0).abs() > PROB_SUM_TOL {
        return Err(invalid(field, "z and x probabilities must sum to 1"));
    }
    Ok(())
}

/// Parameters of the entanglement-based protocol derived from a
/// prepare-and-measure configuration.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EbConfig {
    /// `M′` rounded up, `p′ᴬ` and `p′ᴮ = pᴮ`; every other field is copied.
    pub config: ProtocolConfig,
    pub nu0: f64,
    /// `m/(1/(2T) − ν₀)` before rounding.
    pub rounds_exact: f64,
    /// `M′ − rounds_exact`.
    pub surplus: f64,
    /// `2T − 1` is so small that `γ₋` is numerically ill-defined.
    pub degenerate: bool,
}

/// Threshold on `2T − 1` below which a mapping is flagged degenerate.
pub const DEGENERATE_GAP: f64 = 1e-6;

/// `p′ᴬ_z = pᴬ_z/(pᴬ_z + 2T·pᴬ_x)`, `p′ᴬ_x = 2T·pᴬ_x/(pᴬ_z + 2T·pᴬ_x)`,
/// `p′ᴮ = pᴮ` and `M′ = ⌈m/(1/(2T) − ν₀)⌉`.
pub fn map_pm_to_eb(config: &ProtocolConfig, t_weight: f64, nu0: f64) -> Result<EbConfig, ConfigError> {
    if !(t_weight > 0.5) {
        return Err(invalid("T", "requires |a|^2 + |b|^2 > 1/2"));
    }
    let limit = 0.5 / t_weight;
    if !(nu0 > 0.0 && nu0 < limit) {
        return Err(ConfigError::Nu0OutOfRange { nu0, limit });
    }
    let denom = config.pa_z + 2.0 * t_weight * config.pa_x;
    let rounds_exact = config.required as f64 / (limit - nu0);
    // Absorb rounding noise such as 15000/0.4 = 37500.000000000004.
    let nearest = libm::round(rounds_exact);
    let rounds = if (rounds_exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        libm::ceil(rounds_exact)
    };
    let mut mapped = config.clone();
    mapped.pa_z = config.pa_z / denom;
    mapped.pa_x = 2.0 * t_weight * config.pa_x / denom;
    mapped.rounds = rounds as u64;
    Ok(EbConfig {
        config: mapped,
        nu0,
        rounds_exact,
        surplus: rounds - rounds_exact,
        degenerate: 2.0 * t_weight - 1.0 < DEGENERATE_GAP,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ProtocolConfig {
        ProtocolConfig::calibrated(20_000, 15_000, 3000, [500; 4], 0.05, 1000, 1)
    }

    #[test]
    fn mapping_examples() {
        let eb = map_pm_to_eb(&base(), 1.0, 0.1).unwrap();
        assert!((eb.config.pa_z - 1.0 / 3.0).abs() < 1e-15);
        assert!((eb.config.pa_x - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(eb.config.pb_z, 0.5);
        assert_eq!(eb.config.rounds, 37_500);
        assert!(!eb.degenerate);

        let eb = map_pm_to_eb(&base(), 0.5 + 1e-9, 0.1).unwrap();
        assert!(eb.degenerate);
        assert!(eb.config.rounds >= 15_000);
        assert!(map_pm_to_eb(&base(), 1.0, 0.5).is_err());
        assert!(map_pm_to_eb(&base(), 1.0, 0.0).is_err());
    }

    #[test]
    fn rounds_never_undershoot() {
        let eb = map_pm_to_eb(&base(), 0.9, 0.07).unwrap();
        assert!(eb.config.rounds as f64 >= eb.rounds_exact);
        assert!(eb.surplus >= 0.0 && eb.surplus < 1.0);
    }

    #[test]
    fn validation() {
        base().validate().unwrap();
        let mut c = base();
        c.pa_x = 0.6;
        assert!(c.validate().is_err());
        let mut c = base();
        c.n1 = 20_000;
        assert!(matches!(c.validate(), Err(ConfigError::TooManyRounds { .. })));
        let mut c = base();
        c.t = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn calibrated_threshold() {
        let d = default_delta_mismatch(500);
        assert!((d - (0.5 + 3.0 * libm::sqrt(libm::log(1000.0) / 1000.0))).abs() < 1e-15);
        assert!(d > 0.74 && d < 0.76);
    }
}
