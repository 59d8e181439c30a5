//! Input files: source states, security and protocol configurations,
//! channel descriptions.
//!
//! JSON is the default; a `.toml` extension selects TOML. Complex numbers are
//! `[re, im]` pairs.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tristate_core::audit::FourStateInput;
use tristate_core::channel::{ChannelModel, MeasurementModel};
use tristate_core::finite_key::{KeyTarget, SecurityInputs};
use tristate_core::geometry::{build_frame, AmbientState, GeometryError, SourceTriple, TAU_SPAN};
use tristate_core::protocol::{EbOrdering, ProtocolConfig};
use tristate_core::C64;

/// Reads a JSON or TOML file into `T`; parse errors carry the path and the
/// line and column of the offending token.
pub fn read_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| anyhow!("{}: {}", path.display(), e.to_string().trim_end()))
    } else {
        serde_json::from_str(&text).map_err(|e| anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    }
}

/// A state file, either as ambient vectors or as the coefficients `(a, b, g)`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub dim: Option<usize>,
    pub gamma0: Option<Vec<C64>>,
    pub gamma1: Option<Vec<C64>>,
    pub gamma_plus: Option<Vec<C64>>,
    pub gamma_minus: Option<Vec<C64>>,
    pub a: Option<C64>,
    pub b: Option<C64>,
    pub g: Option<C64>,
    pub tau_span: Option<f64>,
}

fn source_error(e: GeometryError) -> anyhow::Error {
    anyhow!("source states do not meet the protocol's requirements: {e}")
}

impl StateFile {
    pub fn load(path: &Path) -> Result<Self> {
        let file: StateFile = read_file(path)?;
        file.check_shape().with_context(|| format!("{}", path.display()))?;
        Ok(file)
    }

    fn is_coefficient_form(&self) -> bool {
        self.a.is_some() || self.b.is_some() || self.g.is_some()
    }

    fn check_shape(&self) -> Result<()> {
        let ambient = self.gamma0.is_some() || self.gamma1.is_some() || self.gamma_plus.is_some();
        match (ambient, self.is_coefficient_form()) {
            (true, true) => bail!("give either gamma0/gamma1/gamma_plus or a/b/g, not both"),
            (false, false) => bail!("no states: expected gamma0, gamma1, gamma_plus or a, b, g"),
            (false, true) if self.a.is_none() || self.b.is_none() || self.g.is_none() => {
                bail!("coefficient form needs all of a, b, g")
            }
            (true, false) if self.gamma0.is_none() || self.gamma1.is_none() || self.gamma_plus.is_none() => {
                bail!("ambient form needs all of gamma0, gamma1, gamma_plus")
            }
            _ => Ok(()),
        }
    }

    fn ambient(&self, which: &'static str, v: &Option<Vec<C64>>) -> Result<AmbientState> {
        let v = v.clone().ok_or_else(|| anyhow!("missing {which}"))?;
        if let Some(dim) = self.dim {
            if v.len() != dim {
                bail!("{which} has {} amplitudes but dim = {dim}", v.len());
            }
        }
        AmbientState::named(which, v).map_err(source_error)
    }

    /// The source triple with all derived quantities.
    pub fn triple(&self) -> Result<SourceTriple> {
        if self.is_coefficient_form() {
            let (a, b, g) = (self.a.unwrap(), self.b.unwrap(), self.g.unwrap());
            return SourceTriple::from_coefficients(a, b, g).map_err(source_error);
        }
        let g0 = self.ambient("gamma0", &self.gamma0)?;
        let g1 = self.ambient("gamma1", &self.gamma1)?;
        let gp = self.ambient("gamma_plus", &self.gamma_plus)?;
        build_frame(&g0, &g1, &gp, self.tau_span.unwrap_or(TAU_SPAN)).map_err(source_error)
    }

    /// The four states for the auditor; needs the ambient form with `gamma_minus`.
    pub fn four_states(&self) -> Result<FourStateInput> {
        if self.is_coefficient_form() {
            bail!("the four-state audit needs ambient vectors, not coefficients");
        }
        if self.gamma_minus.is_none() {
            bail!("the four-state audit needs gamma_minus");
        }
        Ok(FourStateInput {
            gamma0: self.ambient("gamma0", &self.gamma0)?,
            gamma1: self.ambient("gamma1", &self.gamma1)?,
            gamma_plus: self.ambient("gamma_plus", &self.gamma_plus)?,
            gamma_minus: self.ambient("gamma_minus", &self.gamma_minus)?,
        })
    }
}

/// Round counts, thresholds and targets for the key-length computation.
/// `T` and `c` come from the state file.
#[derive(Clone, Debug, Deserialize, serde::Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SecurityConfig {
    pub n1: u64,
    pub k1: u64,
    pub k2: u64,
    pub k3: u64,
    pub k4: u64,
    pub delta: f64,
    pub delta_mismatch: f64,
    pub r: u64,
    pub t: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_target: Option<f64>,
}

impl SecurityConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let c: SecurityConfig = read_file(path)?;
        c.target().with_context(|| format!("{}", path.display()))?;
        Ok(c)
    }

    pub fn target(&self) -> Result<KeyTarget> {
        match (self.key_length, self.epsilon_target) {
            (Some(l), None) => Ok(KeyTarget::KeyLength(l)),
            (None, Some(e)) => Ok(KeyTarget::EpsilonTarget(e)),
            _ => bail!("set exactly one of key_length and epsilon_target"),
        }
    }

    pub fn inputs(&self, triple: &SourceTriple) -> Result<SecurityInputs> {
        let k = [self.k1, self.k2, self.k3, self.k4];
        let inp = SecurityInputs::for_source(triple, self.n1, k, self.delta, self.delta_mismatch, self.r, self.t, self.target()?);
        inp.validate()?;
        Ok(inp)
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum VariantChoice {
    #[default]
    PrepareMeasure,
    EntanglementBased,
}

/// A protocol configuration plus the options that select the variant.
#[derive(Clone, Debug, Deserialize)]
pub struct SimulationConfig {
    #[serde(flatten)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub variant: VariantChoice,
    #[serde(default)]
    pub ordering: EbOrdering,
    /// `ν₀` for the round-count mapping of the entanglement-based run.
    #[serde(default = "default_nu0")]
    pub nu0: f64,
}

fn default_nu0() -> f64 {
    0.1
}

impl SimulationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_file(path)
    }
}

/// Bob's detector.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementSpec {
    #[default]
    Ideal,
    /// Basis-independent loss probability.
    UniformLoss { loss: f64 },
    BasisLoss { loss_z: f64, loss_x: f64 },
    /// Explicit operators `[M⁰, M¹, M^∅]` per basis.
    Operators(Box<MeasurementModel>),
}

impl MeasurementSpec {
    pub fn model(&self) -> MeasurementModel {
        match self {
            MeasurementSpec::Ideal => MeasurementModel::ideal(),
            MeasurementSpec::UniformLoss { loss } => MeasurementModel::uniform_loss(*loss),
            MeasurementSpec::BasisLoss { loss_z, loss_x } => MeasurementModel::ideal().with_basis_loss(*loss_z, *loss_x),
            MeasurementSpec::Operators(m) => (**m).clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "identity")]
    pub channel: ChannelModel,
    #[serde(default)]
    pub measurement: MeasurementSpec,
}

fn identity() -> ChannelModel {
    ChannelModel::Identity
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { channel: ChannelModel::Identity, measurement: MeasurementSpec::Ideal }
    }
}

impl ChannelConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let c: ChannelConfig = read_file(path)?;
        c.channel.validate().with_context(|| format!("{}", path.display()))?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_state(json: &str) -> Result<StateFile> {
        let f: StateFile = serde_json::from_str(json)?;
        f.check_shape()?;
        Ok(f)
    }

    #[test]
    fn coefficient_form_builds_the_ideal_triple() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let f = parse_state(&format!(r#"{{"a": [{h}, 0], "b": [{h}, 0], "g": [0, 0]}}"#)).unwrap();
        let t = f.triple().unwrap();
        assert!((t.t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_forms_are_rejected() {
        let err = parse_state(r#"{"a": [1, 0], "b": [0, 0], "g": [0, 0], "gamma0": [[1, 0]]}"#).unwrap_err();
        assert!(err.to_string().contains("not both"));
    }

    #[test]
    fn dimension_must_match() {
        let f = parse_state(r#"{"dim": 3, "gamma0": [[1,0],[0,0]], "gamma1": [[0,0],[1,0]], "gamma_plus": [[1,0],[0,0]]}"#).unwrap();
        assert!(f.triple().unwrap_err().to_string().contains("dim = 3"));
    }

    #[test]
    fn security_config_needs_one_target() {
        let both = r#"{"n1":1,"k1":1,"k2":1,"k3":1,"k4":1,"delta":0.1,"delta_mismatch":0.5,"r":0,"t":8,"key_length":1,"epsilon_target":0.1}"#;
        let c: SecurityConfig = serde_json::from_str(both).unwrap();
        assert!(c.target().is_err());
    }

    #[test]
    fn channel_config_defaults_to_a_perfect_link() {
        let c: ChannelConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c.channel, ChannelModel::Identity);
        assert_eq!(c.measurement.model(), MeasurementModel::ideal());
        let c: ChannelConfig =
            serde_json::from_str(r#"{"channel": {"kind": "depolarizing", "p": 0.1}, "measurement": {"kind": "uniform_loss", "loss": 0.2}}"#)
                .unwrap();
        assert_eq!(c.channel, ChannelModel::Depolarizing { p: 0.1 });
        assert_eq!(c.measurement.model(), MeasurementModel::uniform_loss(0.2));
    }

    #[test]
    fn explicit_operators_round_trip() {
        let m = MeasurementModel::uniform_loss(0.3);
        let mut v = serde_json::to_value(&m).unwrap();
        v["kind"] = "operators".into();
        let spec: MeasurementSpec = serde_json::from_value(v).unwrap();
        assert_eq!(spec.model(), m);
    }

    #[test]
    fn simulation_config_reads_toml() {
        let text = r#"
            M = 100
            m = 60
            pA_z = 0.5
            pA_x = 0.5
            pB_z = 0.5
            pB_x = 0.5
            n1 = 20
            k1 = 5
            k2 = 5
            k3 = 5
            k4 = 5
            delta = 0.1
            delta_mismatch = 0.9
            r = 10
            t = 16
            key_length = 4
            variant = "entanglement_based"
            ordering = "immediate"
        "#;
        let c: SimulationConfig = toml::from_str(text).unwrap();
        assert_eq!(c.protocol.rounds, 100);
        assert_eq!(c.protocol.seed, 0);
        assert_eq!(c.variant, VariantChoice::EntanglementBased);
        assert_eq!(c.ordering, EbOrdering::Immediate);
        assert_eq!(c.nu0, 0.1);
    }
}
