use proptest::prelude::*;
use rand::Rng;
use tristate_core::audit::{
    audit_four_states, construct_feasible, ideal_bb84_quadruple, perturbation_sweep, FourStateInput, SweepAxis,
    Violation, TAU_AUDIT,
};
use tristate_core::geometry::{random_coefficients, AmbientState};
use tristate_core::rng::{CounterRng, DrawTag};
use tristate_core::C64;

/// A feasible quadruple from random `(a, b, g)` and `q`, retrying until the
/// construction exists.
fn random_feasible(seed: u64, dim: usize) -> (FourStateInput, f64) {
    let root = CounterRng::new(seed);
    for attempt in 0.. {
        let mut rng = root.stream(attempt, DrawTag::Auxiliary);
        let (a, b, g) = random_coefficients(&mut rng);
        let q = rng.random_range(0.02..0.98);
        if let Ok(input) = construct_feasible(a, b, g, q, dim) {
            return (input, q);
        }
    }
    unreachable!()
}

#[test]
fn forward_constructions_are_accepted() {
    for seed in 0..1000 {
        let (input, q) = random_feasible(seed, 2 + (seed % 5) as usize);
        let v = audit_four_states(&input, TAU_AUDIT).unwrap();
        assert!(v.feasible, "seed {seed}: {v:?}");
        assert!(v.residual <= 1e-9);
        assert!((v.q.re - q).abs() < 1e-7, "seed {seed}: {} vs {q}", v.q.re);
        assert!(v.a.im == 0.0 && v.a.re >= 0.0 && v.c.im == 0.0 && v.c.re >= 0.0);
    }
}

#[test]
fn phase_perturbations_of_d_are_rejected() {
    let mags: Vec<f64> = (1..=30).map(|i| i as f64 * 0.01).collect();
    for p in perturbation_sweep(&ideal_bb84_quadruple(), SweepAxis::DPhase, &mags, TAU_AUDIT).unwrap() {
        assert!(!p.feasible);
        assert_eq!(p.violated_condition, Some(Violation::Cond4));
    }
}

#[test]
fn sweeping_a_feasible_non_ideal_source() {
    let (base, _) = random_feasible(7, 3);
    let pts = perturbation_sweep(&base, SweepAxis::DPhase, &[0.0, 0.05, 0.1, 0.2], TAU_AUDIT).unwrap();
    assert!(pts[0].feasible);
    assert!(pts[1..].iter().all(|p| !p.feasible));
    assert!(pts.windows(2).all(|w| w[1].residual >= w[0].residual));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn verdict_ignores_global_phases(seed in 0u64..10_000, phases in prop::array::uniform4(0.0..6.3f64), tilt in 0.0..0.5f64) {
        let (mut input, _) = random_feasible(seed, 3);
        if tilt > 0.25 {
            // Also cover infeasible inputs.
            input = perturbation_input(&input, tilt);
        }
        let base = audit_four_states(&input, TAU_AUDIT).unwrap();
        let moved = FourStateInput {
            gamma0: input.gamma0.with_phase(phases[0]),
            gamma1: input.gamma1.with_phase(phases[1]),
            gamma_plus: input.gamma_plus.with_phase(phases[2]),
            gamma_minus: input.gamma_minus.with_phase(phases[3]),
        };
        let v = audit_four_states(&moved, TAU_AUDIT).unwrap();
        prop_assert_eq!(v.feasible, base.feasible);
        prop_assert_eq!(v.violated_condition, base.violated_condition);
        prop_assert!((v.residual - base.residual).abs() < 1e-7);
        if base.feasible {
            prop_assert!((v.q - base.q).norm() < 1e-9);
            prop_assert!((v.p - base.p).norm() < 1e-9);
        }
    }

    #[test]
    fn verdict_respects_relabeling(seed in 0u64..10_000) {
        let (input, _) = random_feasible(seed, 2);
        let base = audit_four_states(&input, TAU_AUDIT).unwrap();
        let swapped = FourStateInput { gamma0: input.gamma1.clone(), gamma1: input.gamma0.clone(), ..input.clone() };
        let v = audit_four_states(&swapped, TAU_AUDIT).unwrap();
        prop_assert!(v.feasible && base.feasible);
        prop_assert!((v.p.re - (1.0 - base.p.re)).abs() < 1e-8);
        prop_assert!((v.q.re - base.q.re).abs() < 1e-8);
        prop_assert!((v.a.norm() - base.b.norm()).abs() < 1e-9);
        prop_assert!((v.c.norm() - base.d.norm()).abs() < 1e-9);
    }
}

/// Multiplies the part of `γ₋` orthogonal to `γ₀` by `e^{iφ}`.
fn perturbation_input(input: &FourStateInput, phi: f64) -> FourStateInput {
    let d = input.gamma_minus.amplitudes();
    let g0 = input.gamma0.amplitudes();
    let o: C64 = g0.iter().zip(d).map(|(u, v)| u.conj() * v).sum();
    let rot = C64::from_polar(1.0, phi);
    let v: Vec<_> = g0.iter().zip(d).map(|(u, x)| o * u + (x - o * u) * rot).collect();
    FourStateInput { gamma_minus: AmbientState::new(v).unwrap(), ..input.clone() }
}
