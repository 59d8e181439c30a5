//! Round-by-round execution of the prepare-and-measure protocol and of its
//! entanglement-based counterpart.
//!
//! Both runs produce [`RoundRecord`]s and then share one classical pipeline:
//! sifting, the minimum-count check, subset choice, parameter estimation,
//! error correction and privacy amplification. Every random draw comes from
//! a [`CounterRng`] stream addressed by `(seed, round, tag)`.

mod config;
pub mod ec;
pub mod pa;
mod transcript;

use alloc::vec::Vec;

use rand::Rng;

use crate::channel::{
    apply_channel, apply_channel_joint, bob_measure, rescale_povm, validate_povm, Basis, ChannelModel,
    DetectedModel, MeasurementModel, Outcome, RoundContext, Transmitted,
};
use crate::geometry::{build_entangled_state, EntangledPair, SourceTriple};
use crate::linalg::{Mat2, Mat4};
use crate::rng::{bernoulli, categorical, CounterRng, DrawTag};

pub use config::{default_delta_mismatch, map_pm_to_eb, ConfigError, EbConfig, ProtocolConfig, DEGENERATE_GAP};
pub use ec::{error_correct, EcError, EcMode, EcOutcome};
pub use pa::{privacy_amplify, PaError, Toeplitz};
pub use transcript::{
    EbOrdering, FlagState, Flags, PublishedTranscript, RoundRecord, Subsets, Substrings, TestStatistics,
    Transcript, Variant,
};

/// Sizes `(k₁, k₂, k₃, k₄, n₁)` of `Π₁..Π₄` and `Σ₁`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubsetSizes {
    pub k: [u64; 4],
    pub n1: u64,
}

impl SubsetSizes {
    pub fn of(config: &ProtocolConfig) -> Self {
        SubsetSizes { k: [config.k1, config.k2, config.k3, config.k4], n1: config.n1 }
    }

    /// Rounds of each basis pair the minimum-count check requires.
    pub fn minimum(&self) -> [u64; 4] {
        [self.n1 + self.k[0], self.k[1], self.k[2], self.k[3]]
    }
}

/// Whether `Σ` has enough rounds of every basis pair.
pub fn min_check(class_counts: &[u64; 4], sizes: &SubsetSizes) -> bool {
    class_counts.iter().zip(sizes.minimum()).all(|(have, need)| *have >= need)
}

/// Draws `Π₁..Π₄` uniformly from the rounds of each basis pair and `Σ₁`
/// uniformly from the Z-Z rounds outside `Π₁`. `sigma` lists `(round, class)`
/// pairs in order. Returns `None` when the minimum-count check fails.
pub fn choose_subsets<R: Rng + ?Sized>(sigma: &[(u64, usize)], sizes: &SubsetSizes, rng: &mut R) -> Option<Subsets> {
    let mut by_class: [Vec<u64>; 4] = Default::default();
    for &(i, c) in sigma {
        by_class[c].push(i);
    }
    let counts = [0, 1, 2, 3].map(|c| by_class[c].len() as u64);
    if !min_check(&counts, sizes) {
        return None;
    }
    let mut pi: [Vec<u64>; 4] = Default::default();
    let mut sigma1 = Vec::new();
    for c in 0..4 {
        let pool = &mut by_class[c];
        let k = sizes.k[c] as usize;
        partial_shuffle(pool, k, rng);
        pi[c] = pool[..k].to_vec();
        if c == 0 {
            let n1 = sizes.n1 as usize;
            let rest = &mut pool[k..];
            partial_shuffle(rest, n1, rng);
            sigma1 = rest[..n1].to_vec();
        }
    }
    for p in pi.iter_mut() {
        p.sort_unstable();
    }
    sigma1.sort_unstable();
    Some(Subsets { pi, sigma1 })
}

/// Moves a uniform random `k`-subset (in random order) to the front.
fn partial_shuffle<T, R: Rng + ?Sized>(v: &mut [T], k: usize, rng: &mut R) {
    for i in 0..k.min(v.len()) {
        let j = rng.random_range(i..v.len());
        v.swap(i, j);
    }
}

/// Validated inputs shared by both runs.
fn check_common(config: &ProtocolConfig, channel: &ChannelModel) -> Result<(), ConfigError> {
    config.validate()?;
    channel.validate()?;
    if config.ec_mode == EcMode::Syndrome && config.n1 as usize > ec::SYNDROME_MAX_LEN {
        return Err(ConfigError::Invalid { field: "ec_mode", reason: "syndrome mode supports n1 <= 2048" });
    }
    Ok(())
}

/// One prepare-and-measure round.
pub fn pm_round(
    index: u64,
    config: &ProtocolConfig,
    triple: &SourceTriple,
    channel: &ChannelModel,
    povm: &MeasurementModel,
    root: &CounterRng,
) -> RoundRecord {
    let alice_basis = bernoulli(&mut root.stream(index, DrawTag::AliceBasis), config.pa_x) as u8;
    let alice_bit = if alice_basis == 0 { bernoulli(&mut root.stream(index, DrawTag::AliceBit), 0.5) as u8 } else { 0 };
    let bob_basis = bernoulli(&mut root.stream(index, DrawTag::BobBasis), config.pb_x) as u8;
    let prepared = match (alice_basis, alice_bit) {
        (0, 0) => triple.gamma0,
        (0, _) => triple.gamma1,
        _ => triple.gamma_plus,
    };
    let ctx = RoundContext { index, discard: None };
    let rho = Mat2::projector(&prepared);
    let bob_outcome = match apply_channel(&rho, channel, &ctx, &mut root.stream(index, DrawTag::Channel)) {
        Transmitted::Lost => Outcome::Empty,
        Transmitted::State(out) => {
            bob_measure(&out, Basis::from_bit(bob_basis), povm, &mut root.stream(index, DrawTag::BobOutcome))
        }
    };
    RoundRecord { index, alice_basis, alice_bit, discard: None, bob_basis, bob_outcome }
}

/// Runs the prepare-and-measure protocol.
pub fn run_prepare_measure(
    config: &ProtocolConfig,
    triple: &SourceTriple,
    channel: &ChannelModel,
    povm: &MeasurementModel,
) -> Result<Transcript, ConfigError> {
    check_common(config, channel)?;
    validate_povm(povm)?;
    let root = CounterRng::new(config.seed);
    let records = (0..config.rounds).map(|i| pm_round(i, config, triple, channel, povm, &root)).collect();
    Ok(finish(Variant::PrepareMeasure, None, config, records, &root))
}

/// Alice's side of an entanglement-based round with immediate measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AliceRound {
    pub basis: u8,
    /// Outcome bit: `z` result, or `0` for `ξ₊` and `1` for `ξ₋`.
    pub bit: u8,
    pub discard: bool,
}

/// Samples Alice's basis and measures her half of `Ψ` right away.
pub fn eb_alice_round(
    index: u64,
    pa_x: f64,
    triple: &SourceTriple,
    pair: &EntangledPair,
    root: &CounterRng,
) -> AliceRound {
    let basis = bernoulli(&mut root.stream(index, DrawTag::AliceBasis), pa_x) as u8;
    let probs = if basis == 0 { pair.z_probabilities() } else { pair.xi_probabilities(triple) };
    let bit = categorical(&mut root.stream(index, DrawTag::AliceOutcome), &probs) as u8;
    AliceRound { basis, bit, discard: basis == 1 && bit == 1 }
}

fn alice_vector(triple: &SourceTriple, basis: u8, bit: u8) -> crate::linalg::Qubit {
    use crate::linalg::{ONE, ZERO};
    match (basis, bit) {
        (0, 0) => [ONE, ZERO],
        (0, _) => [ZERO, ONE],
        (_, 0) => triple.xi_plus,
        _ => triple.xi_minus,
    }
}

fn detect<R: rand::RngCore + ?Sized>(rho: &Mat2, basis: Basis, model: &DetectedModel, rng: &mut R) -> Outcome {
    Outcome::from_index(categorical(rng, &model.probabilities(rho, basis)))
}

/// One entanglement-based round.
#[allow(clippy::too_many_arguments)]
pub fn eb_round(
    index: u64,
    config: &ProtocolConfig,
    triple: &SourceTriple,
    pair: &EntangledPair,
    channel: &ChannelModel,
    detected: &DetectedModel,
    ordering: EbOrdering,
    root: &CounterRng,
) -> RoundRecord {
    let bob_basis = bernoulli(&mut root.stream(index, DrawTag::BobBasis), config.pb_x) as u8;
    let basis_b = Basis::from_bit(bob_basis);
    let alice = eb_alice_round(index, config.pa_x, triple, pair, root);
    let ctx = RoundContext { index, discard: Some(alice.discard) };
    if alice.discard {
        return RoundRecord {
            index,
            alice_basis: alice.basis,
            alice_bit: alice.bit,
            discard: Some(true),
            bob_basis,
            bob_outcome: Outcome::Empty,
        };
    }
    let record = |alice_bit, bob_outcome| RoundRecord {
        index,
        alice_basis: alice.basis,
        alice_bit,
        discard: Some(false),
        bob_basis,
        bob_outcome,
    };
    let mut channel_rng = root.stream(index, DrawTag::Channel);
    let mut bob_rng = root.stream(index, DrawTag::BobOutcome);
    if alice.basis == 1 || ordering == EbOrdering::Immediate {
        let (_, b_state) = pair.condition_on(&alice_vector(triple, alice.basis, alice.bit));
        let rho = Mat2::projector(&b_state);
        let outcome = match apply_channel(&rho, channel, &ctx, &mut channel_rng) {
            Transmitted::Lost => Outcome::Empty,
            Transmitted::State(out) => detect(&out, basis_b, detected, &mut bob_rng),
        };
        return record(alice.bit, outcome);
    }
    // Deferred: the pair travels, Bob measures, then Alice measures `z`.
    let joint = Mat4::pure(&pair.grid);
    let joint = match apply_channel_joint(&joint, channel, &ctx, &mut channel_rng) {
        Transmitted::Lost => return record(0, Outcome::Empty),
        Transmitted::State(j) => j,
    };
    let ops = detected.operators(basis_b);
    let branches = [joint.conjugate_b(&ops[0]), joint.conjugate_b(&ops[1])];
    let probs = [branches[0].trace(), branches[1].trace()];
    let t = categorical(&mut bob_rng, &probs);
    let rho_a = branches[t].trace_b();
    let za = [rho_a.0[0][0].re.max(0.0), rho_a.0[1][1].re.max(0.0)];
    let bit = categorical(&mut root.stream(index, DrawTag::AliceOutcome), &za) as u8;
    record(bit, Outcome::from_index(t))
}

/// Runs the entanglement-based protocol with Bob's measurement conditioned on
/// detection.
pub fn run_entanglement_based(
    eb: &EbConfig,
    triple: &SourceTriple,
    channel: &ChannelModel,
    povm: &MeasurementModel,
    ordering: EbOrdering,
) -> Result<Transcript, ConfigError> {
    let config = &eb.config;
    check_common(config, channel)?;
    let limit = 0.5 / triple.t;
    if !(eb.nu0 > 0.0 && eb.nu0 < limit) {
        return Err(ConfigError::Nu0OutOfRange { nu0: eb.nu0, limit });
    }
    if channel.is_lossy() {
        return Err(ConfigError::LossyChannel);
    }
    let detected = rescale_povm(povm)?;
    let pair = build_entangled_state(triple).map_err(|_| ConfigError::Invalid {
        field: "source",
        reason: "the two forms of the entangled state disagree",
    })?;
    let root = CounterRng::new(config.seed);
    let records = (0..config.rounds)
        .map(|i| eb_round(i, config, triple, &pair, channel, &detected, ordering, &root))
        .collect();
    Ok(finish(Variant::EntanglementBased, Some(ordering), config, records, &root))
}

/// Bits Bob reads from his outcomes (`∅` never reaches this point).
fn bob_bit(r: &RoundRecord) -> u8 {
    r.bob_outcome.bit().unwrap_or(0)
}

/// The classical stages shared by both protocols.
pub fn finish(
    variant: Variant,
    ordering: Option<EbOrdering>,
    config: &ProtocolConfig,
    records: Vec<RoundRecord>,
    root: &CounterRng,
) -> Transcript {
    let omega: Vec<u64> = records.iter().filter(|r| r.in_omega()).map(|r| r.index).collect();
    let mut tr = Transcript {
        variant,
        ordering,
        config: config.clone(),
        records,
        omega,
        sigma: None,
        class_counts: None,
        subsets: None,
        substrings: None,
        statistics: None,
        flags: Flags::initial(),
        ec: None,
        pa_seed: None,
        key_a: None,
        key_b: None,
    };

    let m = config.required as usize;
    if tr.omega.len() < m {
        tr.flags.set(0, false);
        return tr;
    }
    tr.flags.set(0, true);
    let sigma: Vec<u64> = tr.omega[..m].to_vec();
    let classed: Vec<(u64, usize)> = sigma.iter().map(|&i| (i, tr.records[i as usize].class())).collect();
    let mut counts = [0u64; 4];
    for &(_, c) in &classed {
        counts[c] += 1;
    }
    tr.sigma = Some(sigma);
    tr.class_counts = Some(counts);

    let sizes = SubsetSizes::of(config);
    let subsets = match choose_subsets(&classed, &sizes, &mut root.stream(0, DrawTag::Subsets)) {
        Some(s) => s,
        None => {
            tr.flags.set(1, false);
            return tr;
        }
    };
    tr.flags.set(1, true);

    let alice = |ix: &[u64]| -> Vec<u8> { ix.iter().map(|&i| tr.records[i as usize].alice_bit).collect() };
    let bob = |ix: &[u64]| -> Vec<u8> { ix.iter().map(|&i| bob_bit(&tr.records[i as usize])).collect() };
    let subs = Substrings {
        v: [0, 1, 2, 3].map(|c| alice(&subsets.pi[c])),
        w: [0, 1, 2, 3].map(|c| bob(&subsets.pi[c])),
        x1: alice(&subsets.sigma1),
        y1: bob(&subsets.sigma1),
    };
    tr.subsets = Some(subsets);

    let errors = |v: &[u8], w: &[u8]| v.iter().zip(w).filter(|(a, b)| a != b).count() as u64;
    let zeros = |w: &[u8]| w.iter().filter(|&&b| b == 0).count() as u64;
    let rate = |n: u64, k: u64| if k == 0 { 0.0 } else { n as f64 / k as f64 };
    let stats = TestStatistics {
        errors_zz: errors(&subs.v[0], &subs.w[0]),
        errors_xx: errors(&subs.v[3], &subs.w[3]),
        zeros_zx: zeros(&subs.w[1]),
        zeros_xz: zeros(&subs.w[2]),
        error_rate_zz: rate(errors(&subs.v[0], &subs.w[0]), config.k1),
        error_rate_xx: rate(errors(&subs.v[3], &subs.w[3]), config.k4),
        zero_rate_zx: rate(zeros(&subs.w[1]), config.k2),
        zero_rate_xz: rate(zeros(&subs.w[2]), config.k3),
    };
    // "Exceeds" is strict, compared on counts to avoid rounding in the rates.
    let exceeds = |count: u64, threshold: f64, k: u64| count as f64 > threshold * k as f64;
    let pe_ok = !exceeds(stats.errors_zz, config.delta, config.k1)
        && !exceeds(stats.errors_xx, config.delta, config.k4)
        && !exceeds(stats.zeros_zx, config.delta_mismatch, config.k2)
        && !exceeds(stats.zeros_xz, config.delta_mismatch, config.k3);
    tr.statistics = Some(stats);
    tr.flags.set(2, pe_ok);
    if !pe_ok {
        tr.substrings = Some(subs);
        return tr;
    }

    let ec_seed = root.derive_seed(1, DrawTag::EcCode);
    let ec = error_correct(&subs.x1, &subs.y1, config.r, config.t, ec_seed, config.ec_mode)
        .expect("lengths and budget validated");
    tr.flags.set(3, ec.verified);
    if ec.verified {
        let pa_seed = root.derive_seed(1, DrawTag::PaHash);
        let ell = config.ell as usize;
        tr.key_a = Some(privacy_amplify(&subs.x1, ell, pa_seed).expect("ell <= n1 validated"));
        tr.key_b = Some(privacy_amplify(&ec.corrected, ell, pa_seed).expect("ell <= n1 validated"));
        tr.pa_seed = Some(pa_seed);
    }
    tr.ec = Some(ec);
    tr.substrings = Some(subs);
    tr
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ProtocolConfig {
        ProtocolConfig::calibrated(2000, 1500, 300, [50; 4], 0.05, 100, 3)
    }

    #[test]
    fn ideal_run_succeeds() {
        let tr = run_prepare_measure(
            &small(),
            &SourceTriple::ideal_bb84(),
            &ChannelModel::Identity,
            &MeasurementModel::ideal(),
        )
        .unwrap();
        assert!(tr.succeeded(), "{:?}", tr.flags);
        assert!(tr.keys_agree());
        assert_eq!(tr.key_a.as_ref().unwrap().len(), 100);
        let stats = tr.statistics.unwrap();
        assert_eq!(stats.errors_zz + stats.errors_xx, 0);
    }

    #[test]
    fn too_few_rounds_abort_sifting() {
        let mut cfg = small();
        cfg.rounds = 1000;
        let tr = run_prepare_measure(
            &cfg,
            &SourceTriple::ideal_bb84(),
            &ChannelModel::Identity,
            &MeasurementModel::ideal(),
        )
        .unwrap();
        assert_eq!(tr.flags.sift, FlagState::Aborted);
        assert_eq!(tr.flags.pe, FlagState::NotReached);
        assert!(tr.sigma.is_none() && tr.key_a.is_none());
        assert!(tr.published().sigma.is_none());
    }

    #[test]
    fn noisy_channel_aborts_parameter_estimation() {
        let tr = run_prepare_measure(
            &small(),
            &SourceTriple::ideal_bb84(),
            &ChannelModel::Depolarizing { p: 0.3 },
            &MeasurementModel::ideal(),
        )
        .unwrap();
        assert_eq!(tr.flags.pe, FlagState::Aborted);
        let p = tr.published();
        assert!(p.ec_transcript.is_none() && p.ec_tag.is_none() && p.pa_seed.is_none());
    }

    #[test]
    fn runs_are_reproducible() {
        let run = || {
            run_prepare_measure(
                &small(),
                &SourceTriple::ideal_bb84(),
                &ChannelModel::Depolarizing { p: 0.02 },
                &MeasurementModel::uniform_loss(0.1),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn eb_orderings_agree_on_ideal_runs() {
        let triple = SourceTriple::ideal_bb84();
        let eb = map_pm_to_eb(&small(), triple.t, 0.1).unwrap();
        for ordering in [EbOrdering::Immediate, EbOrdering::Deferred] {
            let tr = run_entanglement_based(&eb, &triple, &ChannelModel::Identity, &MeasurementModel::ideal(), ordering)
                .unwrap();
            assert!(tr.succeeded(), "{ordering:?}: {:?}", tr.flags);
            assert!(tr.keys_agree());
        }
    }

    #[test]
    fn eb_rejects_bad_inputs() {
        let triple = SourceTriple::ideal_bb84();
        let mut eb = map_pm_to_eb(&small(), triple.t, 0.1).unwrap();
        let lossy = ChannelModel::Loss { eta: 0.1 };
        assert_eq!(
            run_entanglement_based(&eb, &triple, &lossy, &MeasurementModel::ideal(), EbOrdering::Deferred),
            Err(ConfigError::LossyChannel)
        );
        eb.nu0 = 0.5;
        assert!(matches!(
            run_entanglement_based(&eb, &triple, &ChannelModel::Identity, &MeasurementModel::ideal(), EbOrdering::Deferred),
            Err(ConfigError::Nu0OutOfRange { .. })
        ));
    }

    #[test]
    fn subsets_are_disjoint_and_sized() {
        let tr = run_prepare_measure(
            &small(),
            &SourceTriple::ideal_bb84(),
            &ChannelModel::Identity,
            &MeasurementModel::ideal(),
        )
        .unwrap();
        let s = tr.subsets.unwrap();
        let sigma = tr.sigma.unwrap();
        let mut all: Vec<u64> = s.pi.iter().flatten().chain(&s.sigma1).copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
        assert!(all.iter().all(|i| sigma.binary_search(i).is_ok()));
        for (c, p) in s.pi.iter().enumerate() {
            assert_eq!(p.len() as u64, [50, 50, 50, 50][c]);
            assert!(p.iter().all(|&i| tr.records[i as usize].class() == c));
        }
        assert!(s.sigma1.iter().all(|&i| tr.records[i as usize].class() == 0));
    }
}
