use rand::RngCore;
use tristate_core::bounds::{chi2_critical_999, chi2_statistic, two_sample_chi2};
use tristate_core::channel::{rescale_povm, ChannelModel, MeasurementModel};
use tristate_core::geometry::{build_entangled_state, SourceTriple};
use tristate_core::protocol::ec::verification_tag;
use tristate_core::protocol::{
    eb_round, error_correct, map_pm_to_eb, pm_round, privacy_amplify, run_entanglement_based, run_prepare_measure,
    EbOrdering, EcMode, ProtocolConfig, RoundRecord,
};
use tristate_core::rng::{CounterRng, DrawTag};

fn bits(n: usize, seed: u64) -> Vec<u8> {
    let mut s = CounterRng::new(seed).stream(0, DrawTag::Auxiliary);
    (0..n).map(|_| (s.next_u32() & 1) as u8).collect()
}

fn small_config(seed: u64) -> ProtocolConfig {
    ProtocolConfig::calibrated(4000, 3000, 600, [100; 4], 0.05, 200, seed)
}

#[test]
fn syndrome_decoding_meets_its_calibration() {
    let mut ok = 0;
    for seed in 0..100 {
        let x = bits(1024, seed);
        let mut noise = CounterRng::new(seed).stream(1, DrawTag::Auxiliary);
        let y: Vec<u8> = x.iter().map(|&b| b ^ (noise.next_u32().is_multiple_of(100) as u8)).collect();
        let out = error_correct(&x, &y, 300, 64, seed, EcMode::Syndrome).unwrap();
        if out.verified && out.corrected == x {
            ok += 1;
        }
    }
    assert!(ok >= 95, "{ok}/100");
}

#[test]
fn verification_tags_rarely_collide() {
    let mut collisions = 0;
    for seed in 0..1_000_000u64 {
        let x = bits(128, 2 * seed);
        let mut y = x.clone();
        y[(seed % 128) as usize] ^= 1;
        if verification_tag(&x, 64, seed) == verification_tag(&y, 64, seed) {
            collisions += 1;
        }
    }
    assert_eq!(collisions, 0);

    let trials = 100_000u64;
    let mut short = 0;
    for seed in 0..trials {
        let x = bits(128, 2 * seed);
        let y = bits(128, 2 * seed + 1);
        if x != y && verification_tag(&x, 8, seed) == verification_tag(&y, 8, seed) {
            short += 1;
        }
    }
    let p = 1.0 / 256.0;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((short as f64 / trials as f64 - p).abs() <= 4.0 * sigma);
}

#[test]
fn amplified_keys_are_uniform_over_seeds() {
    let x = bits(64, 99);
    let mut counts = vec![0u64; 1 << 16];
    for seed in 0..100_000u64 {
        let k = privacy_amplify(&x, 16, seed).unwrap();
        let v = k.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        counts[v] += 1;
    }
    let chi2 = chi2_statistic(&counts, &vec![1.0 / 65536.0; 1 << 16]);
    assert!(chi2 <= chi2_critical_999(65535), "{chi2}");
}

#[test]
fn ideal_runs_agree_and_public_view_excludes_keys() {
    let tr = SourceTriple::ideal_bb84();
    for seed in 0..10 {
        let t = run_prepare_measure(&small_config(seed), &tr, &ChannelModel::Identity, &MeasurementModel::ideal()).unwrap();
        assert!(t.succeeded(), "{:?}", t.flags);
        assert!(t.keys_agree());
        let key = t.key_a.clone().unwrap();
        assert_eq!(key.len(), 200);
        let p = t.published();
        let sub = t.substrings.as_ref().unwrap();
        assert_eq!(p.v1.as_ref(), Some(&sub.v[0]));
        assert_eq!(p.v4.as_ref(), Some(&sub.v[3]));
        assert_eq!(p.ec_tag.as_ref().map(|t| t.len()), Some(64));
        let sigma1 = &t.subsets.as_ref().unwrap().sigma1;
        assert!(sigma1.iter().all(|i| !t.subsets.as_ref().unwrap().pi.iter().any(|pi| pi.contains(i))));
    }
}

#[test]
fn entanglement_based_runs_complete() {
    let tr = SourceTriple::ideal_bb84();
    for ordering in [EbOrdering::Immediate, EbOrdering::Deferred] {
        for seed in 0..5 {
            let eb = map_pm_to_eb(&small_config(seed), tr.t, 0.1).unwrap();
            let t = run_entanglement_based(&eb, &tr, &ChannelModel::Identity, &MeasurementModel::ideal(), ordering).unwrap();
            assert!(t.succeeded() && t.keys_agree());
        }
    }
}

fn joint_symbol(r: &RoundRecord) -> Option<usize> {
    if r.discard == Some(true) {
        return None;
    }
    let prep = if r.alice_basis == 0 { r.alice_bit as usize } else { 2 };
    let out = r.bob_outcome.bit()? as usize;
    Some(prep * 4 + r.bob_basis as usize * 2 + out)
}

#[test]
fn mapped_protocols_share_kept_round_statistics() {
    let tr = SourceTriple::from_coefficients(
        tristate_core::C64::new(0.6, 0.0),
        tristate_core::C64::new(0.6, 0.0),
        tristate_core::C64::new(7.0 / 18.0, 0.0),
    )
    .unwrap();
    let pm = small_config(11);
    let eb = map_pm_to_eb(&pm, tr.t, 0.1).unwrap();
    let channel = ChannelModel::Depolarizing { p: 0.2 };
    let povm = MeasurementModel::ideal();
    let detected = rescale_povm(&povm).unwrap();
    let pair = build_entangled_state(&tr).unwrap();
    let rounds = 100_000;
    let mut a = [0u64; 12];
    let root = CounterRng::new(1);
    for i in 0..rounds {
        if let Some(s) = joint_symbol(&pm_round(i, &pm, &tr, &channel, &povm, &root)) {
            a[s] += 1;
        }
    }
    for ordering in [EbOrdering::Immediate, EbOrdering::Deferred] {
        let mut b = [0u64; 12];
        let root = CounterRng::new(2);
        for i in 0..rounds {
            if let Some(s) = joint_symbol(&eb_round(i, &eb.config, &tr, &pair, &channel, &detected, ordering, &root)) {
                b[s] += 1;
            }
        }
        let (chi2, df) = two_sample_chi2(&a, &b);
        assert!(chi2 <= chi2_critical_999(df), "{ordering:?}: {chi2} on {df}");
    }
}
