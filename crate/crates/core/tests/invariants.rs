//! Cross-module invariants: norm preservation, exact symmetries, commutation,
//! and the independently coded series/tail oracles.

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::PI;

use qudit_optics::cv::{apply_cross_kerr, codeword_subspace, tensor, KerrPhase};
use qudit_optics::fock::{
    apply_phase_rotation, coherent_state, overlap, partial_exp_sum, poisson_tail_above,
    truncation_dim, FockVector, TruncationPolicy,
};
use qudit_optics::measurement::phase_bin;
use qudit_optics::qudit::QuditDims;

fn arb_fock(max_len: usize) -> impl Strategy<Value = FockVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..max_len).prop_filter_map(
        "nonzero vector",
        |pairs| {
            let amps: Vec<C64> = pairs.iter().map(|&(re, im)| C64::new(re, im)).collect();
            let norm_sqr: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            if norm_sqr < 1e-12 {
                None
            } else {
                let n = norm_sqr.sqrt();
                Some(FockVector::from_amplitudes(amps.into_iter().map(|a| a / n).collect()))
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn phase_rotation_preserves_the_norm(state in arb_fock(48), theta in -20.0f64..20.0) {
        let rotated = apply_phase_rotation(&state, theta);
        prop_assert!((rotated.norm_sqr() - state.norm_sqr()).abs() < 1e-14);
    }

    #[test]
    fn overlap_has_exact_conjugate_symmetry(a in arb_fock(32), b in arb_fock(32)) {
        // Bit-exact: every term of <a|b> is the conjugate of the matching
        // term of <b|a>, and the summation order is the same.
        let ab = overlap(&a, &b);
        let ba = overlap(&b, &a);
        prop_assert_eq!(ab, ba.conj());
    }

    #[test]
    fn phase_bin_is_rotation_equivariant(
        r in 0.5f64..20.0,
        theta in 0.0f64..(2.0 * PI),
        d in 2usize..9,
    ) {
        let dims = QuditDims::new(d).unwrap();
        // Stay clear of bin boundaries so float rounding of the rotation
        // cannot flip the sector; boundaries sit at half-integer sector_pos.
        let sector_pos = d as f64 * theta / (2.0 * PI);
        let boundary_dist = (sector_pos + 0.5).fract();
        prop_assume!(boundary_dist > 1e-6 && boundary_dist < 1.0 - 1e-6);

        let z = C64::from_polar(r, theta);
        let l0 = phase_bin(z.re, z.im, dims, 0.0).unwrap();
        let w = C64::from_polar(1.0, 2.0 * PI / d as f64);
        let zr = z * w;
        let l1 = phase_bin(zr.re, zr.im, dims, 0.0).unwrap();
        prop_assert_eq!(l1, (l0 + 1) % d);
    }

    #[test]
    fn cross_kerr_preserves_norm_for_any_phase(chi_t in -10.0f64..10.0) {
        let a = coherent_state(C64::new(1.2, 0.3), 24).unwrap();
        let b = coherent_state(C64::new(0.4, -1.0), 24).unwrap();
        let t = tensor(&[a, b]).unwrap();
        let out = apply_cross_kerr(&t, 0, 1, KerrPhase::radians(chi_t)).unwrap();
        prop_assert!((out.norm_sqr() - t.norm_sqr()).abs() < 1e-14);
    }

    #[test]
    fn partial_sums_tile_the_exponential_on_random_inputs(x in 0.0f64..200.0, d in 1usize..33) {
        let total: f64 = (0..d).map(|k| partial_exp_sum(k, d, x).unwrap()).sum();
        prop_assert!((total / x.exp() - 1.0).abs() < 1e-12);
    }
}

/// Independent Poisson tail oracle: log-domain term-by-term summation from
/// above, with statrs supplying ln Gamma.
fn poisson_tail_oracle(x: f64, n_max: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if x <= 0.0 {
        return 0.0;
    }
    let mut tail = 0.0;
    let stop = ((x + 40.0 * x.sqrt()) as usize).max(n_max + 200);
    for n in (n_max + 1)..=stop {
        let ln_t = -x + n as f64 * x.ln() - ln_gamma(n as f64 + 1.0);
        if ln_t > -745.0 {
            tail += ln_t.exp();
        }
    }
    tail
}

#[test]
fn production_tail_matches_the_log_domain_oracle() {
    for (x, n_max) in [(25.0, 73), (25.0, 40), (16.0, 56), (4.0, 28), (36.0, 40), (0.25, 9)] {
        let got = poisson_tail_above(x, n_max);
        let want = poisson_tail_oracle(x, n_max);
        let scale = want.max(1e-300);
        assert!(
            (got - want).abs() / scale < 1e-6 || (got - want).abs() < 1e-12,
            "x={x} n_max={n_max}: {got} vs {want}"
        );
    }
}

#[test]
fn coherent_states_from_the_policy_carry_negligible_tails() {
    let policy = TruncationPolicy::default();
    for alpha in [C64::new(2.0, 0.0), C64::new(0.0, 5.0), C64::new(4.0, 3.0)] {
        let n_max = truncation_dim(alpha, &policy).unwrap();
        let v = coherent_state(alpha, n_max).unwrap();
        let tail = poisson_tail_oracle(alpha.norm_sqr(), n_max);
        assert!(tail <= policy.tail_tolerance);
        assert!((v.norm_sqr() + tail - 1.0).abs() < 1e-10);
    }
}

#[test]
fn number_sectors_are_orthogonal_no_matter_the_alpha() {
    for (d, alpha) in [(2usize, 1.0), (4, 2.0), (4, 5.0), (8, 5.0)] {
        let dims = QuditDims::new(d).unwrap();
        let a = C64::new(alpha, 0.0);
        let n_max = truncation_dim(a, &TruncationPolicy::default()).unwrap();
        let basis = codeword_subspace(dims, a, n_max).unwrap();
        for i in 0..d {
            for j in 0..d {
                let ov = overlap(&basis.number_kets()[i], &basis.number_kets()[j]);
                if i == j {
                    assert!((ov.re - 1.0).abs() < 1e-12);
                } else {
                    // Disjoint photon-number support: exactly zero.
                    assert_eq!(ov, C64::ZERO);
                }
            }
        }
    }
}

#[test]
fn phase_gap_shrinks_as_alpha_grows() {
    let dims = QuditDims::new(4).unwrap();
    let policy = TruncationPolicy::default();
    let mut previous = f64::INFINITY;
    for alpha in [2.0, 3.0, 4.0, 5.0, 6.0] {
        let a = C64::new(alpha, 0.0);
        let n_max = truncation_dim(a, &policy).unwrap();
        let basis = codeword_subspace(dims, a, n_max).unwrap();
        let gap = basis.max_phase_gap();
        assert!(gap < previous + 1e-9, "alpha = {alpha}: gap {gap} vs previous {previous}");
        previous = gap;
    }
}

#[test]
fn kerr_bell_decode_fidelity_is_monotone_in_alpha() {
    use qudit_optics::cv::decode_cv;
    use qudit_optics::protocols::{bell_pair_cv, bell_pair_ideal};
    for d in [4usize, 8] {
        let dims = QuditDims::new(d).unwrap();
        let policy = TruncationPolicy::default();
        let ideal = bell_pair_ideal(dims).unwrap();
        let mut previous = 0.0f64;
        for alpha in [2.0, 3.0, 4.0, 5.0, 6.0] {
            let a = C64::new(alpha, 0.0);
            let n_max = truncation_dim(a, &policy).unwrap();
            let bell = bell_pair_cv(dims, a, n_max).unwrap();
            let basis = codeword_subspace(dims, a, n_max).unwrap();
            let (decoded, _) = decode_cv(&bell, &basis).unwrap();
            let fid = decoded.fidelity(&ideal);
            assert!(
                fid > previous - 1e-9,
                "d = {d}, alpha = {alpha}: fidelity {fid} dropped below {previous}"
            );
            previous = fid;
        }
        assert!(previous > 1.0 - 1e-6, "d = {d}: final fidelity {previous}");
    }
}
