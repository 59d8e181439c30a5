use proptest::prelude::*;
use rand::Rng;
use tristate_core::geometry::{
    build_entangled_state, build_frame, derive_gamma_minus, derive_xi_basis, overlap_c, overlap_c_from_xi,
    random_coefficients, AmbientState, SourceTriple, TAU_SPAN,
};
use tristate_core::linalg::{norm_sqr, qubit_inner, qubit_norm_sqr};
use tristate_core::rng::{CounterRng, DrawTag};
use tristate_core::C64;

fn triple_from_seed(seed: u64) -> SourceTriple {
    let mut rng = CounterRng::new(seed).stream(0, DrawTag::Auxiliary);
    let (a, b, g) = random_coefficients(&mut rng);
    SourceTriple::from_coefficients(a, b, g).expect("random coefficients are valid")
}

/// Orthonormal pair in `C^dim` from Gram–Schmidt on random vectors.
fn random_isometry(dim: usize, seed: u64) -> (Vec<C64>, Vec<C64>) {
    let mut rng = CounterRng::new(seed).stream(1, DrawTag::Auxiliary);
    let mut draw = || -> Vec<C64> {
        (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    };
    let u = draw();
    let n = norm_sqr(&u).sqrt();
    let u: Vec<C64> = u.iter().map(|z| z / n).collect();
    let v = draw();
    let o: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
    let v: Vec<C64> = v.iter().zip(&u).map(|(b, a)| b - o * a).collect();
    let n = norm_sqr(&v).sqrt();
    (u, v.iter().map(|z| z / n).collect())
}

fn embed(coords: &[C64; 2], frame: &(Vec<C64>, Vec<C64>)) -> AmbientState {
    let v = frame.0.iter().zip(&frame.1).map(|(u, w)| coords[0] * u + coords[1] * w).collect();
    AmbientState::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn derived_states_are_consistent(seed in any::<u64>()) {
        let tr = triple_from_seed(seed);
        prop_assert!(tr.t > 0.5);
        prop_assert!((tr.re_abg() - (1.0 - tr.t) / 2.0).abs() < 1e-12);
        let gm = derive_gamma_minus(&tr).unwrap();
        prop_assert!((qubit_norm_sqr(&gm) - 1.0).abs() < 1e-10);
        let (xp, xm) = derive_xi_basis(&tr).unwrap();
        prop_assert!(qubit_inner(&xp, &xm).norm() < 1e-10);
        prop_assert!((qubit_norm_sqr(&xp) - 1.0).abs() < 1e-10);
        let pair = build_entangled_state(&tr).unwrap();
        prop_assert!(pair.representation_defect() < 1e-10);
        let z = pair.z_probabilities();
        prop_assert!((z[0] - 0.5).abs() < 1e-10 && (z[1] - 0.5).abs() < 1e-10);
        let xi = pair.xi_probabilities(&tr);
        prop_assert!((xi[0] - 1.0 / (2.0 * tr.t)).abs() < 1e-10);
        prop_assert!((overlap_c(&tr) - overlap_c_from_xi(&tr)).abs() < 1e-10);
        prop_assert!(overlap_c(&tr) >= 0.5 - 1e-12 && overlap_c(&tr) <= 1.0 + 1e-12);
    }

    #[test]
    fn recovery_in_any_ambient_dimension(seed in any::<u64>(), dim in 2usize..=16) {
        let tr = triple_from_seed(seed);
        let frame = random_isometry(dim, seed);
        let g0 = embed(&tr.gamma0, &frame);
        let g1 = embed(&tr.gamma1, &frame);
        let gp = embed(&tr.gamma_plus, &frame);
        let back = build_frame(&g0, &g1, &gp, TAU_SPAN).unwrap();
        prop_assert!((back.a - tr.a).norm() < 1e-9);
        prop_assert!((back.b - tr.b).norm() < 1e-9);
        prop_assert!((back.g - tr.g).norm() < 1e-9);
        prop_assert!((back.t - tr.t).abs() < 1e-9);
    }

    #[test]
    fn global_phases_leave_constants_unchanged(seed in any::<u64>(), t0 in 0.0..6.3f64, t1 in 0.0..6.3f64, tp in 0.0..6.3f64) {
        let tr = triple_from_seed(seed);
        let frame = random_isometry(3, seed ^ 7);
        let g0 = embed(&tr.gamma0, &frame);
        let g1 = embed(&tr.gamma1, &frame);
        let gp = embed(&tr.gamma_plus, &frame);
        let base = build_frame(&g0, &g1, &gp, TAU_SPAN).unwrap();
        let moved = build_frame(&g0.with_phase(t0), &g1.with_phase(t1), &gp.with_phase(tp), TAU_SPAN).unwrap();
        prop_assert!((base.t - moved.t).abs() < 1e-9);
        prop_assert!((overlap_c(&base) - overlap_c(&moved)).abs() < 1e-9);
        prop_assert!((base.g.norm() - moved.g.norm()).abs() < 1e-9);
    }
}

#[test]
fn admissibility_equivalence_on_a_random_population() {
    // T > 1/2 ⟺ Re(a*bg) < 1/4, via the normalisation T + 2Re(a*bg) = 1.
    for seed in 0..1000 {
        let tr = triple_from_seed(seed);
        assert_eq!(tr.t > 0.5, tr.re_abg() < 0.25);
        assert!((tr.t + 2.0 * tr.re_abg() - 1.0).abs() < 1e-12);
    }
}
