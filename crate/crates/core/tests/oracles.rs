//! Cross-engine agreement against the dense and Clifford oracles on the
//! small geometries.

use std::f64::consts::FRAC_PI_2;

use hexmpo::bptns::{bp_regauge, evolve_tns, local_expectation, BpOpts, BpRunOpts};
use hexmpo::circuits::{build_program, CircuitSpec, Variant};
use hexmpo::clifford::{conjugate_circuit, Direction, Pauli, PauliString};
use hexmpo::exact::{self, StateVector};
use hexmpo::heisenberg::{evolve_operator, HeisenbergOpts};
use hexmpo::lattice::{build_single_hexagon_12, build_two_hexagon_21, snake_order, Lattice};
use hexmpo::schrodinger::{evolve_state, MpsOpts};
use proptest::prelude::*;

fn letter(k: u8) -> Pauli {
    [Pauli::X, Pauli::Y, Pauli::Z][k as usize % 3]
}

fn dense(lat: &Lattice, spec: &CircuitSpec, p: &PauliString) -> f64 {
    let psi = exact::evolve(&StateVector::up(lat.site_count).unwrap(), lat, spec).unwrap();
    psi.expect_pauli(p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn heisenberg_matches_dense(theta in 0.0..FRAC_PI_2, theta_j in -FRAC_PI_2..0.0, site in 0usize..12, k in 0u8..3, d in 0usize..4, nc in any::<bool>()) {
        let lat = build_single_hexagon_12();
        let variant = if nc { Variant::NonCommuting } else { Variant::Standard };
        let spec = CircuitSpec::new(theta_j, theta, d).with_variant(variant);
        let p = PauliString::single(12, site, letter(k));
        let run = evolve_operator(&lat, &p, &spec, &HeisenbergOpts::with_chi(256)).unwrap();
        let want = dense(&lat, &spec, &p);
        prop_assert!((run.expect_up(d).unwrap() - want).abs() < 1e-9);
        prop_assert!((run.log.recompute() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mps_matches_dense(theta in 0.0..FRAC_PI_2, site in 0usize..21, d in 0usize..4) {
        let lat = build_two_hexagon_21();
        let spec = CircuitSpec::new(-FRAC_PI_2, theta, d);
        let run = evolve_state(&lat, &spec, &MpsOpts::with_chi(1024)).unwrap();
        let want = exact::z_expectation(&lat, &spec, site).unwrap();
        prop_assert!((run.expect_z(site).unwrap() - want).abs() < 1e-9);
        prop_assert!((run.state.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clifford_points_match_dense(qh in 0u8..4, site in 0usize..21, d in 0usize..5) {
        let lat = build_two_hexagon_21();
        let spec = CircuitSpec::new(-FRAC_PI_2, f64::from(qh) * FRAC_PI_2, d);
        let prog = build_program(&spec, &lat, &snake_order(&lat).unwrap()).unwrap();
        let z = PauliString::single(21, site, Pauli::Z);
        let s = conjugate_circuit(&z, &prog, Direction::Heisenberg).unwrap();
        prop_assert!((s.expect_up().re - dense(&lat, &spec, &z)).abs() < 1e-10);
    }
}

#[test]
fn bptns_exact_before_the_loop_closes() {
    // the 12-site ring needs six rounds before correlations wrap around
    let lat = build_single_hexagon_12();
    for theta in [0.4, 1.1] {
        for d in 1..=2 {
            let spec = CircuitSpec::new(-FRAC_PI_2, theta, d);
            let tns = evolve_tns(&lat, &spec, &BpRunOpts::with_chi(64)).unwrap();
            let (g, m) = bp_regauge(&tns, &BpOpts::default()).unwrap();
            for site in [0, 5] {
                let got = local_expectation(&g, &m, &PauliString::single(12, site, Pauli::Z)).unwrap();
                let want = exact::z_expectation(&lat, &spec, site).unwrap();
                assert!((got - want).abs() < 1e-8, "theta={theta} d={d} site={site}: {got} vs {want}");
            }
        }
    }
}
