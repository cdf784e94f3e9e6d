//! Property tests for the algebraic invariants: these hold for every state
//! and observable, so they are fuzzed rather than spot-checked.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;

use pcsft::correlation::{analytic_product_moment, fourth_moment_oracle};
use pcsft::covariance::{
    decompose, entangled, is_psd, min_epsilon, naive_covariance, regularized_covariance,
    BlockCovariance, PSD_TOL,
};
use pcsft::hilbert::{
    random_state, random_unit_vector, tensor_product, SCHMIDT_TOL,
};
use pcsft::oracle::{center, product_average_routes, qm_covariance};
use pcsft::sampling::{factorize_covariance, sample_fields, sample_range, FACTOR_TOL};
use pcsft::{BipartiteState, SymOperator};

fn dims_and_rank() -> impl Strategy<Value = ((usize, usize), usize)> {
    (1usize..=5, 1usize..=5)
        .prop_flat_map(|(n1, n2)| (Just((n1, n2)), 1..=n1.min(n2)))
}

fn random_observable(dim: usize, seed: u64) -> SymOperator {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    SymOperator::random(dim, &mut rng)
}

fn random_psd_block(dims: (usize, usize), seed: u64) -> BlockCovariance {
    let total = dims.0 + dims.1;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let g = SymOperator::random(total, &mut rng);
    let full = g.matrix() * g.matrix().transpose();
    BlockCovariance::from_full(&full, dims, 0.0).expect("G G^T is a symmetric block matrix")
}

proptest! {
    #[test]
    fn reduced_density_spectra_coincide(
        ((dims, rank), seed) in (dims_and_rank(), any::<u64>())
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let rho1 = psi.reduced_density(pcsft::Side::One);
        let rho2 = psi.reduced_density(pcsft::Side::Two);
        let mut ev1: Vec<f64> =
            rho1.matrix().clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        let mut ev2: Vec<f64> =
            rho2.matrix().clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev1.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev2.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for i in 0..ev1.len().min(ev2.len()) {
            prop_assert!((ev1[i] - ev2[i]).abs() <= 1e-10);
        }
        for &extra in ev1.iter().skip(ev2.len()).chain(ev2.iter().skip(ev1.len())) {
            prop_assert!(extra.abs() <= 1e-10);
        }
    }

    #[test]
    fn schmidt_roundtrip_and_normalization(
        ((dims, rank), seed) in (dims_and_rank(), any::<u64>())
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let form = psi.schmidt(SCHMIDT_TOL).unwrap();
        prop_assert_eq!(form.rank(), rank);
        let err = (form.reconstruct() - psi.coeffs())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(err <= 1e-10, "roundtrip error {}", err);
        let total: f64 = form.alphas().iter().map(|a| a * a).sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn tensor_products_have_rank_one(
        (n1, n2, seed) in (1usize..=5, 1usize..=5, any::<u64>())
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let psi = tensor_product(
            &random_unit_vector(n1, &mut rng),
            &random_unit_vector(n2, &mut rng),
        )
        .unwrap();
        prop_assert_eq!(psi.schmidt(SCHMIDT_TOL).unwrap().rank(), 1);
    }

    #[test]
    fn product_average_routes_agree(
        ((dims, rank), seed) in (dims_and_rank(), any::<u64>())
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let a1 = random_observable(dims.0, seed ^ 0x9e37_79b9);
        let a2 = random_observable(dims.1, seed ^ 0x7f4a_7c15);
        let routes = product_average_routes(&a1, &a2, &psi).unwrap();
        prop_assert!(
            routes.max_deviation() <= 1e-10 * (1.0 + routes.tensor_route.abs())
        );
    }

    #[test]
    fn centering_is_idempotent_and_covariance_swaps(
        ((dims, rank), seed) in (dims_and_rank(), any::<u64>())
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let a1 = random_observable(dims.0, seed.wrapping_add(1));
        let a2 = random_observable(dims.1, seed.wrapping_add(2));

        let once = center(&a1, &psi, pcsft::Side::One).unwrap();
        let twice = center(once.centered(), &psi, pcsft::Side::One).unwrap();
        let dev = (once.centered().matrix() - twice.centered().matrix())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(dev <= 1e-12);

        let forward = qm_covariance(&a1, &a2, &psi).unwrap();
        let swapped = qm_covariance(&a2, &a1, &psi.swap()).unwrap();
        prop_assert!((forward - swapped).abs() <= 1e-10 * (1.0 + forward.abs()));
    }

    #[test]
    fn factorizable_states_have_zero_quantum_covariance(
        (n1, n2, seed) in (1usize..=5, 1usize..=5, any::<u64>())
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let psi = tensor_product(
            &random_unit_vector(n1, &mut rng),
            &random_unit_vector(n2, &mut rng),
        )
        .unwrap();
        let a1 = SymOperator::random(n1, &mut rng);
        let a2 = SymOperator::random(n2, &mut rng);
        prop_assert!(qm_covariance(&a1, &a2, &psi).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn eps_star_routes_agree_and_spectrum_shifts(
        ((dims, rank), seed, margin) in (dims_and_rank(), any::<u64>(), 0.0f64..1.0)
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let report = min_epsilon(&psi).unwrap();
        prop_assert!((report.eps_star - report.eps_star_closed_form).abs() <= 1e-10);
        prop_assert!(report.eps_star >= -1e-12);

        let naive = naive_covariance(&psi);
        let eps = report.eps_star + margin;
        let reg = regularized_covariance(&psi, eps).unwrap();
        prop_assert!(
            (reg.lambda_min() - (naive.lambda_min() + eps)).abs() <= 1e-10,
            "shift property violated: {} vs {} + {}",
            reg.lambda_min(),
            naive.lambda_min(),
            eps
        );
        // Off-diagonal block is unchanged by the background.
        let dev = (reg.d12() - naive.d12())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(dev == 0.0);
    }

    #[test]
    fn insufficient_background_is_rejected(
        ((dims, rank), seed) in (dims_and_rank(), any::<u64>())
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let report = min_epsilon(&psi).unwrap();
        // Only meaningful when eps_star is clearly positive.
        if report.eps_star > 1e-6 {
            prop_assert!(regularized_covariance(&psi, 0.5 * report.eps_star).is_err());
        }
    }

    #[test]
    fn entanglement_criterion_matches_schmidt_rank(
        ((dims, rank), seed) in (dims_and_rank(), any::<u64>())
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let verdict = entangled(&psi, PSD_TOL).unwrap();
        prop_assert_eq!(verdict, rank >= 2);
        // decompose succeeds exactly for the separable class.
        prop_assert_eq!(decompose(&psi, 0.3).is_ok(), !verdict);
    }

    #[test]
    fn factorization_reconstructs_covariance(
        ((dims, rank), seed, margin) in (dims_and_rank(), any::<u64>(), 0.0f64..0.5)
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let eps = min_epsilon(&psi).unwrap().eps_star + margin;
        let cov = regularized_covariance(&psi, eps).unwrap();
        let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
        let err = (factor.root() * factor.root().transpose() - cov.full_matrix())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(err <= 1e-8 * cov.lambda_max().max(1.0));
        for &clipped in factor.clip_report() {
            prop_assert!(clipped.abs() <= FACTOR_TOL * cov.lambda_max().max(1.0));
        }
    }

    #[test]
    fn moment_formula_matches_isserlis_oracle(
        (n1, n2, seed) in (1usize..=3, 1usize..=3, any::<u64>())
    ) {
        let d = random_psd_block((n1, n2), seed);
        let a1 = random_observable(n1, seed.wrapping_add(10));
        let a2 = random_observable(n2, seed.wrapping_add(20));
        let lhs = analytic_product_moment(&d, &a1, &a2).unwrap();
        let rhs = fourth_moment_oracle(&d, &a1, &a2).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn half_classical_covariance_equals_product_average(
        ((dims, rank), seed) in (dims_and_rank(), any::<u64>())
    ) {
        // The sampling-free chain: 1/2 (T00 covariance) = <A1 (x) A2>.
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let eps = min_epsilon(&psi).unwrap().eps_star + 0.05;
        let cov = regularized_covariance(&psi, eps).unwrap();
        let a1 = random_observable(dims.0, seed.wrapping_add(3));
        let a2 = random_observable(dims.1, seed.wrapping_add(4));
        let moment = analytic_product_moment(&cov, &a1, &a2).unwrap();
        let m1 = (cov.d11().matrix() * a1.matrix()).trace();
        let m2 = (cov.d22().matrix() * a2.matrix()).trace();
        let half_cov = 0.5 * (moment - m1 * m2);
        let product = product_average_routes(&a1, &a2, &psi).unwrap().tensor_route;
        prop_assert!((half_cov - product).abs() <= 1e-10 * (1.0 + product.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chunked_sampling_matches_sequential(
        ((dims, rank), seed, split) in (dims_and_rank(), any::<u64>(), 1usize..199)
    ) {
        let psi = random_state(dims, seed, Some(rank)).unwrap();
        let eps = min_epsilon(&psi).unwrap().eps_star + 0.1;
        let cov = regularized_covariance(&psi, eps).unwrap();
        let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
        let n = 200;
        let full = sample_fields(&factor, n, seed);
        let head = sample_range(&factor, 0, split, seed);
        let tail = sample_range(&factor, split, n - split, seed);
        for j in 0..dims.0 {
            for k in 0..split {
                prop_assert_eq!(full.phi1()[(k, j)], head.phi1()[(k, j)]);
            }
            for k in split..n {
                prop_assert_eq!(full.phi1()[(k, j)], tail.phi1()[(k - split, j)]);
            }
        }
    }
}

#[test]
fn psd_check_handles_semidefinite_matrices() {
    // Rank-1 PSD matrix: Cholesky would fail here, the eigenvalue test must not.
    let ones = DMatrix::from_element(3, 3, 1.0);
    let check = is_psd(&ones, PSD_TOL).unwrap();
    assert!(check.psd);
    assert!(check.lambda_min.abs() <= 1e-12);
}

#[test]
fn loader_rejects_malformed_state_payloads() {
    for bad in [
        "not json",
        r#"{"dims":[2,2]}"#,
        r#"{"dims":[0,2],"coeffs":[]}"#,
        r#"{"dims":[1,2],"coeffs":[0.9,"x"]}"#,
        r#"{"dims":[1,1],"coeffs":[0.5]}"#,
    ] {
        assert!(
            pcsft::hilbert::state_from_json(bad).is_err(),
            "accepted: {bad}"
        );
    }
}

#[test]
fn state_normalization_tolerance_boundary() {
    // Inside the loader tolerance: accepted and renormalized.
    let c = BipartiteState::from_unnormalized(DMatrix::from_element(1, 1, 1.0)).unwrap();
    assert_eq!(c.coeffs()[(0, 0)], 1.0);
    let json = format!(r#"{{"dims":[1,1],"coeffs":[{}]}}"#, 1.0 + 5e-7);
    assert!(pcsft::hilbert::state_from_json(&json).is_ok());
    let json = format!(r#"{{"dims":[1,1],"coeffs":[{}]}}"#, 1.0 + 5e-6);
    assert!(pcsft::hilbert::state_from_json(&json).is_err());
}
