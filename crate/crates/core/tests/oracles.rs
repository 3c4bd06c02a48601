use lattice_modular::kernels::{c_minus_half, entanglement_entropy, entropy_from_deltas, mn_kernels};
use lattice_modular::oracles::{oracle_reduced_density_matrix, oracle_single_mode};
use lattice_modular::{build_harmonic_chain, restrict_correlators, vacuum_state, Boundary, Error, Region};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn one_site_kernels_match_extended_precision() {
    for (n, mass, bc) in [(4, 1.0, Boundary::Dirichlet), (6, 0.3, Boundary::Periodic), (9, 2.0, Boundary::Dirichlet)] {
        let state = vacuum_state(&build_harmonic_chain(n, mass, 1.0, bc).unwrap()).unwrap();
        for site in [0, n / 2] {
            let rc = restrict_correlators(&state, &Region::new(vec![site], n).unwrap()).unwrap();
            let k = mn_kernels(&rc).unwrap();
            let o = oracle_single_mode(rc.x_r[(0, 0)], rc.p_r[(0, 0)]).unwrap();
            assert!(rel(k.m[(0, 0)], o.m) <= 1e-12, "M: {} vs {}", k.m[(0, 0)], o.m);
            assert!(rel(k.n[(0, 0)], o.n) <= 1e-12, "N: {} vs {}", k.n[(0, 0)], o.n);
            assert!(rel(k.c_minus_half[0], o.c_minus_half) <= 1e-12);
            assert!(rel(entanglement_entropy(&k), o.entropy) <= 1e-12);
            assert!(rel(k.l_block[(0, 1)], o.l_2x2[0][1]) <= 1e-12);
            assert!(rel(k.l_block[(1, 0)], o.l_2x2[1][0]) <= 1e-12);
        }
    }
}

#[test]
fn two_site_fock_entropy_matches_correlators() {
    for mass in [0.5, 1.0, 2.0] {
        let model = build_harmonic_chain(2, mass, 1.0, Boundary::Dirichlet).unwrap();
        let fock = oracle_reduced_density_matrix(&model, 24).unwrap();
        assert!(fock.convergence_change <= 1e-6);
        assert!((fock.trace - 1.0).abs() <= 1e-8);
        let state = vacuum_state(&model).unwrap();
        let rc = restrict_correlators(&state, &Region::new(vec![0], 2).unwrap()).unwrap();
        let deltas = c_minus_half(&rc).unwrap();
        let s = entropy_from_deltas(&deltas);
        assert!((fock.entropy - s).abs() <= 1e-6, "m = {mass}: {} vs {s}", fock.entropy);
        // thermal spectrum with ratio (c - 1/2)/(c + 1/2)
        let q = deltas[0] / (deltas[0] + 1.0);
        let ratio = fock.occupation_spectrum[1] / fock.occupation_spectrum[0];
        assert!((ratio - q).abs() <= 1e-8, "m = {mass}: ratio {ratio} vs {q}");
    }
}

#[test]
fn decoupled_sites_carry_no_entanglement() {
    let model = build_harmonic_chain(2, 1.0, 1e-8, Boundary::Dirichlet).unwrap();
    let fock = oracle_reduced_density_matrix(&model, 8).unwrap();
    assert!(fock.entropy.abs() <= 1e-12);
    let state = vacuum_state(&model).unwrap();
    let rc = restrict_correlators(&state, &Region::new(vec![1], 2).unwrap()).unwrap();
    assert!(entropy_from_deltas(&c_minus_half(&rc).unwrap()) <= 1e-12);
    assert!(matches!(mn_kernels(&rc), Err(Error::ModularDivergence { .. })));
}
