use alloc::vec::Vec;

use crate::channel::Outcome;

use super::config::ProtocolConfig;
use super::ec::EcOutcome;

/// Which protocol produced a transcript.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    PrepareMeasure,
    EntanglementBased,
}

/// When Alice measures her `z`-basis qubits in the entanglement-based run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EbOrdering {
    /// Right after generating the pair, before transmission.
    Immediate,
    /// After Bob's measurement, on the post-channel joint state.
    #[default]
    Deferred,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FlagState {
    Passed,
    Aborted,
    /// An earlier stage aborted.
    NotReached,
}

impl FlagState {
    fn from_bool(ok: bool) -> Self {
        if ok { FlagState::Passed } else { FlagState::Aborted }
    }

    pub fn passed(self) -> bool {
        self == FlagState::Passed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Flags {
    pub sift: FlagState,
    pub min: FlagState,
    pub pe: FlagState,
    pub ec: FlagState,
}

impl Flags {
    pub(crate) fn initial() -> Self {
        Flags {
            sift: FlagState::NotReached,
            min: FlagState::NotReached,
            pe: FlagState::NotReached,
            ec: FlagState::NotReached,
        }
    }

    pub(crate) fn set(&mut self, stage: usize, ok: bool) {
        let s = FlagState::from_bool(ok);
        match stage {
            0 => self.sift = s,
            1 => self.min = s,
            2 => self.pe = s,
            _ => self.ec = s,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.sift.passed() && self.min.passed() && self.pe.passed() && self.ec.passed()
    }

    /// Name of the first stage that aborted, if any.
    pub fn first_abort(&self) -> Option<&'static str> {
        [("sift", self.sift), ("min", self.min), ("pe", self.pe), ("ec", self.ec)]
            .into_iter()
            .find(|(_, s)| *s == FlagState::Aborted)
            .map(|(n, _)| n)
    }
}

/// One round as seen by Alice and Bob (secret and public parts together).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundRecord {
    pub index: u64,
    /// `Φ_A`: `0` for `z`, `1` for `x`.
    pub alice_basis: u8,
    /// `R_i`. In prepare-and-measure `x` rounds this is the bit Alice's state
    /// encodes, always `0`; in the entanglement-based run it is her outcome
    /// (`ξ₊ ↦ 0`, `ξ₋ ↦ 1`).
    pub alice_bit: u8,
    /// `D_i`, present only in entanglement-based runs.
    pub discard: Option<bool>,
    /// `Φ_B`: `0` for `z`, `1` for `x`.
    pub bob_basis: u8,
    /// `U_i`.
    pub bob_outcome: Outcome,
}

impl RoundRecord {
    /// Basis pair index: `0` Z-Z, `1` Z-X, `2` X-Z, `3` X-X.
    pub fn class(&self) -> usize {
        2 * self.alice_basis as usize + self.bob_basis as usize
    }

    pub fn in_omega(&self) -> bool {
        self.discard != Some(true) && self.bob_outcome != Outcome::Empty
    }
}

/// `Π₁..Π₄` and `Σ₁`, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Subsets {
    pub pi: [Vec<u64>; 4],
    pub sigma1: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Substrings {
    /// Alice's `V¹..V⁴`.
    pub v: [Vec<u8>; 4],
    /// Bob's `W¹..W⁴`.
    pub w: [Vec<u8>; 4],
    pub x1: Vec<u8>,
    pub y1: Vec<u8>,
}

/// What Bob computes in parameter estimation.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestStatistics {
    pub errors_zz: u64,
    pub errors_xx: u64,
    pub zeros_zx: u64,
    pub zeros_xz: u64,
    pub error_rate_zz: f64,
    pub error_rate_xx: f64,
    pub zero_rate_zx: f64,
    pub zero_rate_xz: f64,
}

/// Full record of one run.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transcript {
    pub variant: Variant,
    pub ordering: Option<EbOrdering>,
    pub config: ProtocolConfig,
    pub records: Vec<RoundRecord>,
    pub omega: Vec<u64>,
    pub sigma: Option<Vec<u64>>,
    /// Rounds of each basis pair in `Σ`.
    pub class_counts: Option<[u64; 4]>,
    pub subsets: Option<Subsets>,
    pub substrings: Option<Substrings>,
    pub statistics: Option<TestStatistics>,
    pub flags: Flags,
    pub ec: Option<EcOutcome>,
    pub pa_seed: Option<u64>,
    pub key_a: Option<Vec<u8>>,
    pub key_b: Option<Vec<u8>>,
}

/// The part of a run an eavesdropper sees on the classical channel.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PublishedTranscript {
    pub variant: Variant,
    pub seed: u64,
    pub bob_basis: Vec<u8>,
    pub discard: Option<Vec<u8>>,
    pub omega: Vec<u64>,
    pub sigma: Option<Vec<u64>>,
    pub subsets: Option<Subsets>,
    pub v1: Option<Vec<u8>>,
    pub v4: Option<Vec<u8>>,
    pub ec_transcript: Option<Vec<u8>>,
    pub ec_tag: Option<Vec<u8>>,
    pub ec_code_seed: Option<u64>,
    pub ec_hash_seed: Option<u64>,
    pub pa_seed: Option<u64>,
    pub flags: Flags,
}

impl Transcript {
    pub fn succeeded(&self) -> bool {
        self.flags.all_passed()
    }

    pub fn keys_agree(&self) -> bool {
        matches!((&self.key_a, &self.key_b), (Some(a), Some(b)) if a == b)
    }

    pub fn published(&self) -> PublishedTranscript {
        let discard = match self.variant {
            Variant::EntanglementBased => Some(
                self.records.iter().map(|r| r.discard.unwrap_or(false) as u8).collect(),
            ),
            Variant::PrepareMeasure => None,
        };
        PublishedTranscript {
            variant: self.variant,
            seed: self.config.seed,
            bob_basis: self.records.iter().map(|r| r.bob_basis).collect(),
            discard,
            omega: self.omega.clone(),
            sigma: self.sigma.clone(),
            subsets: self.subsets.clone(),
            v1: self.substrings.as_ref().map(|s| s.v[0].clone()),
            v4: self.substrings.as_ref().map(|s| s.v[3].clone()),
            ec_transcript: self.ec.as_ref().map(|e| e.ec_transcript.clone()),
            ec_tag: self.ec.as_ref().map(|e| e.ec_tag.clone()),
            ec_code_seed: self.ec.as_ref().map(|e| e.code_seed),
            ec_hash_seed: self.ec.as_ref().map(|e| e.hash_seed),
            pa_seed: self.pa_seed,
            flags: self.flags,
        }
    }
}
