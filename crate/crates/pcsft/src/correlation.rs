//! Classical correlations of prequantum variables and their quantum
//! counterparts.
//!
//! Quadratic forms `f_A(phi) = (A phi, phi)` of the field components are the
//! prequantum variables matching quantum observables. For a zero-mean
//! Gaussian field with block covariance `D`, their product moment obeys
//!
//! ```text
//! E f_A1(phi1) f_A2(phi2) = Tr(D11 A1) Tr(D22 A2) + 2 Tr(D12 A2 D21 A1)
//! ```
//!
//! so when `D12` is the operator representation of a state, half the
//! covariance of the two forms equals the quantum product average, and after
//! centering the observables it equals the quantum covariance. The functions
//! here estimate the left sides by Monte Carlo, evaluate the right sides
//! analytically, and package the comparison into reports. A brute-force
//! Isserlis expansion (`fourth_moment_oracle`) provides an independent check
//! of the moment formula itself.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::covariance::{regularized_covariance, BlockCovariance};
use crate::error::{Error, Result};
use crate::hilbert::{BipartiteState, HVector, Side, SymOperator, SCHMIDT_TOL};
use crate::oracle;
use crate::sampling::{factorize_covariance, sample_fields, SampleBatch, FACTOR_TOL};

/// Acceptance threshold in standard errors for statistical comparisons.
pub const Z_THRESHOLD: f64 = 5.0;
/// Number of batches used by the batch-means standard error.
const SE_BATCHES: usize = 200;

/// Which correspondence identity a report checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Identity {
    /// Half the covariance of quadratic forms vs the quantum product average.
    Q1,
    /// Centered version: half the covariance vs the quantum covariance.
    T4,
    /// Factorizable suppression: both sides vanish.
    T3,
    /// Calibrated mean on side 1 vs the quantum average.
    Yy1,
    /// Calibrated mean on side 2 vs the quantum average.
    Yy2,
    /// Bilinear probe of the off-diagonal block (subquantum correlation).
    Cross,
}

impl std::fmt::Display for Identity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Identity::Q1 => "Q1",
            Identity::T4 => "T4",
            Identity::T3 => "T3",
            Identity::Yy1 => "YY1",
            Identity::Yy2 => "YY2",
            Identity::Cross => "CROSS",
        };
        f.write_str(s)
    }
}

/// One identity check: a Monte Carlo estimate against its analytic value,
/// with the exact quantum reference alongside.
///
/// `pass` compares the estimate to `analytic_classical` at
/// [`Z_THRESHOLD`] standard errors. For every identity except `CROSS` the
/// analytic classical value and the quantum value agree to rounding; `CROSS`
/// deliberately pairs a nonzero classical correlation with the quantum
/// covariance of the matching projector observables, which vanishes for
/// factorizable states.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub identity: Identity,
    pub classical_value: f64,
    pub standard_error: f64,
    pub analytic_classical: f64,
    pub quantum_value: f64,
    pub z_score: f64,
    pub pass: bool,
    pub n: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl CorrelationReport {
    fn build(
        identity: Identity,
        classical_value: f64,
        standard_error: f64,
        analytic_classical: f64,
        quantum_value: f64,
        n: usize,
        seed: u64,
        epsilon: f64,
    ) -> Self {
        let diff = (classical_value - analytic_classical).abs();
        let z_score = if diff == 0.0 {
            0.0
        } else if standard_error > 0.0 {
            diff / standard_error
        } else {
            f64::INFINITY
        };
        Self {
            identity,
            classical_value,
            standard_error,
            analytic_classical,
            quantum_value,
            z_score,
            pass: z_score <= Z_THRESHOLD,
            n,
            seed,
            epsilon,
        }
    }

    /// |analytic classical - quantum|; the sampling-free part of the check.
    pub fn algebraic_deviation(&self) -> f64 {
        (self.analytic_classical - self.quantum_value).abs()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// `(A phi, phi)`.
pub fn quadratic_form(a: &SymOperator, phi: &HVector) -> Result<f64> {
    if a.dim() != phi.len() {
        return Err(Error::DimensionMismatch(format!(
            "quadratic form: operator is {0}x{0}, vector has length {1}",
            a.dim(),
            phi.len()
        )));
    }
    Ok(a.apply(phi).dot(phi))
}

/// Values of `f_A` along the rows of a sample matrix.
fn quadratic_series(samples: &DMatrix<f64>, a: &SymOperator) -> Vec<f64> {
    let (n, d) = (samples.nrows(), samples.ncols());
    let m = a.matrix();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut total = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += m[(i, j)] * samples[(k, j)];
            }
            total += samples[(k, i)] * row;
        }
        out.push(total);
    }
    out
}

fn check_pair(d: &BlockCovariance, a1: &SymOperator, a2: &SymOperator) -> Result<()> {
    let (n1, n2) = d.dims();
    if a1.dim() != n1 || a2.dim() != n2 {
        return Err(Error::DimensionMismatch(format!(
            "observables {}x{} and {}x{} do not match covariance dims ({n1}, {n2})",
            a1.dim(),
            a1.dim(),
            a2.dim(),
            a2.dim()
        )));
    }
    Ok(())
}

/// Gaussian product moment `E f_A1(phi1) f_A2(phi2)` for a field with block
/// covariance `D`: `Tr(D11 A1) Tr(D22 A2) + 2 Tr(D12 A2 D21 A1)`.
pub fn analytic_product_moment(
    d: &BlockCovariance,
    a1: &SymOperator,
    a2: &SymOperator,
) -> Result<f64> {
    check_pair(d, a1, a2)?;
    let means = (d.d11().matrix() * a1.matrix()).trace() * (d.d22().matrix() * a2.matrix()).trace();
    let cross = (d.d12() * a2.matrix() * d.d21() * a1.matrix()).trace();
    Ok(means + 2.0 * cross)
}

/// The same moment by explicit Isserlis expansion,
/// `E phi_a phi_b phi_c phi_d = d_ab d_cd + d_ac d_bd + d_ad d_bc`,
/// summed over all index quadruples. Never invokes the closed formula, so it
/// serves as its independent oracle. Capped at total dimension 12.
pub fn fourth_moment_oracle(
    d: &BlockCovariance,
    a1: &SymOperator,
    a2: &SymOperator,
) -> Result<f64> {
    check_pair(d, a1, a2)?;
    let (n1, n2) = d.dims();
    if n1 + n2 > 12 {
        return Err(Error::InvalidArgument(format!(
            "fourth-moment oracle capped at total dimension 12, got {}",
            n1 + n2
        )));
    }
    let c = d.full_matrix();
    let m1 = a1.matrix();
    let m2 = a2.matrix();
    let mut total = 0.0;
    for a in 0..n1 {
        for b in 0..n1 {
            for i in 0..n2 {
                for j in 0..n2 {
                    let (ci, cj) = (n1 + i, n1 + j);
                    total += m1[(a, b)]
                        * m2[(i, j)]
                        * (c[(a, b)] * c[(ci, cj)]
                            + c[(a, ci)] * c[(b, cj)]
                            + c[(a, cj)] * c[(b, ci)]);
                }
            }
        }
    }
    Ok(total)
}

/// Standard error of the mean of `series` by batch means over
/// [`SE_BATCHES`] batches (fewer when the series is short). Robust to the
/// heavy fourth-moment tails of quadratic-form series.
pub fn batch_means_se(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let batches = SE_BATCHES.min(n);
    let per_batch = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let chunk = &series[b * per_batch..(b + 1) * per_batch];
            chunk.iter().sum::<f64>() / per_batch as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var =
        means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (var / batches as f64).sqrt()
}

/// Sample covariance of the quadratic-form series `f_A1(phi1)`, `f_A2(phi2)`
/// with its batch-means standard error.
pub fn empirical_quadratic_covariance(
    batch: &SampleBatch,
    a1: &SymOperator,
    a2: &SymOperator,
) -> Result<(f64, f64)> {
    let n = batch.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance estimation needs n >= 2, got {n}"
        )));
    }
    let (n1, n2) = batch.dims();
    if a1.dim() != n1 || a2.dim() != n2 {
        return Err(Error::DimensionMismatch(format!(
            "observables {}x{} and {}x{} do not match batch dims ({n1}, {n2})",
            a1.dim(),
            a1.dim(),
            a2.dim(),
            a2.dim()
        )));
    }
    let f1 = quadratic_series(batch.phi1(), a1);
    let f2 = quadratic_series(batch.phi2(), a2);
    let m1 = f1.iter().sum::<f64>() / n as f64;
    let m2 = f2.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = f1
        .iter()
        .zip(&f2)
        .map(|(&x, &y)| (x - m1) * (y - m2))
        .collect();
    let cov = centered.iter().sum::<f64>() / (n as f64 - 1.0);
    let se = batch_means_se(&centered);
    Ok((cov, se))
}

fn sampled_batch(psi: &BipartiteState, eps: f64, n: usize, seed: u64) -> Result<(BlockCovariance, SampleBatch)> {
    let cov = regularized_covariance(psi, eps)?;
    let factor = factorize_covariance(&cov, FACTOR_TOL)?;
    let batch = sample_fields(&factor, n, seed);
    Ok((cov, batch))
}

/// Verify `1/2 cov(f_A1, f_A2) = <A1 (x) A2>_Psi` on a fresh batch from
/// `D(eps)`. The analytic classical value comes from the moment formula, so
/// the report carries a zero-variance cross-check of the same identity.
pub fn verify_q1(
    psi: &BipartiteState,
    eps: f64,
    a1: &SymOperator,
    a2: &SymOperator,
    n: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    let (cov, batch) = sampled_batch(psi, eps, n, seed)?;
    let (c, se) = empirical_quadratic_covariance(&batch, a1, a2)?;
    let product_moment = analytic_product_moment(&cov, a1, a2)?;
    let mean1 = (cov.d11().matrix() * a1.matrix()).trace();
    let mean2 = (cov.d22().matrix() * a2.matrix()).trace();
    let analytic = 0.5 * (product_moment - mean1 * mean2);
    let quantum = oracle::qm_average_product(a1, a2, psi)?;
    Ok(CorrelationReport::build(
        Identity::Q1,
        0.5 * c,
        0.5 * se,
        analytic,
        quantum,
        n,
        seed,
        eps,
    ))
}

fn centered_covariance_report(
    identity: Identity,
    psi: &BipartiteState,
    eps: f64,
    a1: &SymOperator,
    a2: &SymOperator,
    n: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    let a01 = oracle::center(a1, psi, Side::One)?;
    let a02 = oracle::center(a2, psi, Side::Two)?;
    let (cov, batch) = sampled_batch(psi, eps, n, seed)?;
    let (c, se) = empirical_quadratic_covariance(&batch, a01.centered(), a02.centered())?;
    let product_moment = analytic_product_moment(&cov, a01.centered(), a02.centered())?;
    let mean1 = (cov.d11().matrix() * a01.centered().matrix()).trace();
    let mean2 = (cov.d22().matrix() * a02.centered().matrix()).trace();
    let analytic = 0.5 * (product_moment - mean1 * mean2);
    let quantum = oracle::qm_covariance(a1, a2, psi)?;
    Ok(CorrelationReport::build(
        identity,
        0.5 * c,
        0.5 * se,
        analytic,
        quantum,
        n,
        seed,
        eps,
    ))
}

/// Verify the centered correspondence
/// `1/2 cov(f_A01, f_A02) = cov(A1, A2)_Psi`.
pub fn verify_t4(
    psi: &BipartiteState,
    eps: f64,
    a1: &SymOperator,
    a2: &SymOperator,
    n: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    centered_covariance_report(Identity::T4, psi, eps, a1, a2, n, seed)
}

/// Factorizable suppression: on a product state both the quantum covariance
/// and the classical covariance of centered quadratic forms vanish. Rejects
/// entangled input.
pub fn verify_t3(
    psi: &BipartiteState,
    eps: f64,
    a1: &SymOperator,
    a2: &SymOperator,
    n: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    if psi.schmidt(SCHMIDT_TOL)?.rank() != 1 {
        return Err(Error::InvalidArgument(
            "factorizable-suppression check needs a factorizable state".into(),
        ));
    }
    centered_covariance_report(Identity::T3, psi, eps, a1, a2, n, seed)
}

/// Calibrated average: `E f_A(phi_side) - eps Tr A` against `<A>_Psi`.
/// `batch` must come from `D(eps)` of `psi` for the subtraction to mean
/// anything.
pub fn calibrated_average(
    batch: &SampleBatch,
    a: &SymOperator,
    psi: &BipartiteState,
    eps: f64,
    side: Side,
) -> Result<CorrelationReport> {
    let n = batch.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "calibrated average needs n >= 2, got {n}"
        )));
    }
    let (b1, b2) = batch.dims();
    let (p1, p2) = psi.dims();
    if (b1, b2) != (p1, p2) {
        return Err(Error::DimensionMismatch(format!(
            "batch dims ({b1}, {b2}) do not match state dims ({p1}, {p2})"
        )));
    }
    let samples = match side {
        Side::One => batch.phi1(),
        Side::Two => batch.phi2(),
    };
    if a.dim() != samples.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "observable is {0}x{0}, side {side} has dimension {1}",
            a.dim(),
            samples.ncols()
        )));
    }
    let series = quadratic_series(samples, a);
    let mean = series.iter().sum::<f64>() / n as f64;
    let se = batch_means_se(&series);
    let classical = mean - eps * a.trace();
    // The raw mean is Tr((rho + eps I) A); subtracting the background term
    // leaves the quantum average.
    let rho = psi.reduced_density(side);
    let analytic = ((rho.matrix() * a.matrix()).trace() + eps * a.trace()) - eps * a.trace();
    let quantum = oracle::qm_average_single(a, psi, side)?;
    let identity = match side {
        Side::One => Identity::Yy1,
        Side::Two => Identity::Yy2,
    };
    Ok(CorrelationReport::build(
        identity, classical, se, analytic, quantum, n, batch.seed(), eps,
    ))
}

/// Bilinear probe of the off-diagonal covariance block:
/// `E (u, phi1)(v, phi2)` against `(Psi_hat v, u)`.
///
/// This is the detector of subquantum correlations invisible to quadratic
/// observables: the analytic value is nonzero for every state, while the
/// quantum covariance of the matching projector pair (`u u^T`, `v v^T`),
/// reported as `quantum_value`, vanishes for factorizable states.
pub fn cross_linear_correlation(
    batch: &SampleBatch,
    psi: &BipartiteState,
    u: &HVector,
    v: &HVector,
) -> Result<CorrelationReport> {
    let n = batch.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross correlation needs n >= 2, got {n}"
        )));
    }
    let (n1, n2) = batch.dims();
    if u.len() != n1 || v.len() != n2 {
        return Err(Error::DimensionMismatch(format!(
            "probes of length {} and {} do not match batch dims ({n1}, {n2})",
            u.len(),
            v.len()
        )));
    }
    if psi.dims() != (n1, n2) {
        return Err(Error::DimensionMismatch(format!(
            "state dims {:?} do not match batch dims ({n1}, {n2})",
            psi.dims()
        )));
    }
    let phi1 = batch.phi1();
    let phi2 = batch.phi2();
    let series: Vec<f64> = (0..n)
        .map(|k| {
            let x: f64 = (0..n1).map(|j| phi1[(k, j)] * u[j]).sum();
            let y: f64 = (0..n2).map(|j| phi2[(k, j)] * v[j]).sum();
            x * y
        })
        .collect();
    let classical = series.iter().sum::<f64>() / n as f64;
    let se = batch_means_se(&series);
    let analytic = (psi.as_operator() * v).dot(u);
    let proj_u = SymOperator::new(u * u.transpose())?;
    let proj_v = SymOperator::new(v * v.transpose())?;
    let quantum = oracle::qm_covariance(&proj_u, &proj_v, psi)?;
    Ok(CorrelationReport::build(
        Identity::Cross,
        classical,
        se,
        analytic,
        quantum,
        n,
        batch.seed(),
        batch.epsilon(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{auto_epsilon, naive_covariance};
    use crate::hilbert::{random_state, random_unit_vector, tensor_product};
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn bell_state() -> BipartiteState {
        BipartiteState::new(DMatrix::identity(2, 2) / 2.0f64.sqrt()).unwrap()
    }

    fn sz() -> SymOperator {
        SymOperator::from_diagonal(&[1.0, -1.0])
    }

    #[test]
    fn quadratic_form_basics() {
        let phi = DVector::from_vec(vec![3.0, 2.0]);
        assert_abs_diff_eq!(
            quadratic_form(&SymOperator::identity(2), &phi).unwrap(),
            13.0
        );
        assert_abs_diff_eq!(quadratic_form(&SymOperator::zeros(2), &phi).unwrap(), 0.0);
        assert_abs_diff_eq!(quadratic_form(&sz(), &phi).unwrap(), 5.0);
        assert!(quadratic_form(&SymOperator::identity(3), &phi).is_err());
    }

    #[test]
    fn product_moment_reduces_to_mean_product_when_uncorrelated() {
        // D12 = 0: the moment is the product of the single means.
        let cov = crate::covariance::background_covariance((2, 3), 0.7).unwrap();
        let mut rng = rng::seeded(31);
        let a1 = SymOperator::random(2, &mut rng);
        let a2 = SymOperator::random(3, &mut rng);
        let expected = (0.7 * a1.trace()) * (0.7 * a2.trace());
        assert_abs_diff_eq!(
            analytic_product_moment(&cov, &a1, &a2).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn product_moment_identity_pair_traces() {
        // A1 = A2 = I on D(eps): (1 + n1 eps)(1 + n2 eps) + 2.
        let psi = bell_state();
        let eps = 0.4;
        let cov = regularized_covariance(&psi, eps).unwrap();
        let id = SymOperator::identity(2);
        let expected = (1.0 + 2.0 * eps) * (1.0 + 2.0 * eps) + 2.0;
        assert_abs_diff_eq!(
            analytic_product_moment(&cov, &id, &id).unwrap(),
            expected,
            epsilon = 1e-10
        );
    }

    #[test]
    fn oracle_matches_scalar_isserlis_identity() {
        // 1x1 blocks: E x^2 y^2 = ab + 2 c^2.
        let (a, b, c) = (1.3, 0.8, 0.5);
        let full = DMatrix::from_row_slice(2, 2, &[a, c, c, b]);
        let cov = BlockCovariance::from_full(&full, (1, 1), 0.0).unwrap();
        let one = SymOperator::identity(1);
        let expected = a * b + 2.0 * c * c;
        assert_abs_diff_eq!(
            fourth_moment_oracle(&cov, &one, &one).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            analytic_product_moment(&cov, &one, &one).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn oracle_agrees_with_moment_formula_on_random_covariances() {
        let mut rng = rng::seeded(55);
        for trial in 0..25 {
            let n1 = 1 + (trial % 3);
            let n2 = 1 + (trial % 4);
            let total = n1 + n2;
            // Random PSD matrix G G^T.
            let mut g = DMatrix::zeros(total, total);
            let mut buf = vec![0.0; total * total];
            rng::fill_standard_normal(&mut rng, &mut buf);
            for i in 0..total {
                for j in 0..total {
                    g[(i, j)] = buf[i * total + j];
                }
            }
            let full = &g * g.transpose();
            let cov = BlockCovariance::from_full(&full, (n1, n2), 0.0).unwrap();
            let a1 = SymOperator::random(n1, &mut rng);
            let a2 = SymOperator::random(n2, &mut rng);
            let lhs = analytic_product_moment(&cov, &a1, &a2).unwrap();
            let rhs = fourth_moment_oracle(&cov, &a1, &a2).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
                "trial {trial}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn oracle_rejects_large_dimensions() {
        let cov = crate::covariance::background_covariance((7, 6), 1.0).unwrap();
        let a1 = SymOperator::identity(7);
        let a2 = SymOperator::identity(6);
        assert!(fourth_moment_oracle(&cov, &a1, &a2).is_err());
    }

    #[test]
    fn empirical_covariance_zero_observable_is_exact_zero() {
        let cov = regularized_covariance(&bell_state(), 0.3).unwrap();
        let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
        let batch = sample_fields(&factor, 1000, 3);
        let (c, _) = empirical_quadratic_covariance(&batch, &SymOperator::zeros(2), &sz()).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn q1_on_bell_state_with_sz_pair() {
        let report = verify_q1(&bell_state(), 0.3, &sz(), &sz(), 40_000, 12).unwrap();
        assert_abs_diff_eq!(report.quantum_value, 1.0, epsilon = 1e-12);
        assert!(report.algebraic_deviation() <= 1e-10);
        assert!(report.pass, "z = {}", report.z_score);
        assert!((report.classical_value - 1.0).abs() <= 5.0 * report.standard_error);
    }

    #[test]
    fn q1_with_identity_observable_matches_single_average() {
        let psi = random_state((2, 2), 61, None).unwrap();
        let eps = auto_epsilon(&psi).unwrap();
        let mut rng = rng::seeded(62);
        let a2 = SymOperator::random(2, &mut rng);
        let report = verify_q1(&psi, eps, &SymOperator::identity(2), &a2, 40_000, 63).unwrap();
        let expected = oracle::qm_average_single(&a2, &psi, Side::Two).unwrap();
        assert_abs_diff_eq!(report.quantum_value, expected, epsilon = 1e-12);
        assert!(report.pass);
    }

    #[test]
    fn q1_analytic_route_matches_trace_route_exactly() {
        // No sampling: 1/2 (T00 covariance) = Tr(Psi_hat A2 Psi_hat^T A1).
        for seed in 0..20 {
            let psi = random_state((3, 2), seed, None).unwrap();
            let mut rng = rng::seeded(1000 + seed);
            let a1 = SymOperator::random(3, &mut rng);
            let a2 = SymOperator::random(2, &mut rng);
            let cov = regularized_covariance(&psi, auto_epsilon(&psi).unwrap()).unwrap();
            let moment = analytic_product_moment(&cov, &a1, &a2).unwrap();
            let m1 = (cov.d11().matrix() * a1.matrix()).trace();
            let m2 = (cov.d22().matrix() * a2.matrix()).trace();
            let half_cov = 0.5 * (moment - m1 * m2);
            let routes = oracle::product_average_routes(&a1, &a2, &psi).unwrap();
            assert!(
                (half_cov - routes.trace_route).abs() <= 1e-10 * (1.0 + half_cov.abs())
            );
        }
    }

    #[test]
    fn t4_on_bell_state_centering_is_noop() {
        let report = verify_t4(&bell_state(), 0.3, &sz(), &sz(), 40_000, 21).unwrap();
        assert_abs_diff_eq!(report.quantum_value, 1.0, epsilon = 1e-12);
        assert!(report.pass);
    }

    #[test]
    fn t4_is_invariant_under_observable_shifts() {
        let psi = random_state((2, 3), 71, None).unwrap();
        let eps = auto_epsilon(&psi).unwrap();
        let mut rng = rng::seeded(72);
        let a1 = SymOperator::random(2, &mut rng);
        let a2 = SymOperator::random(3, &mut rng);
        let base = verify_t4(&psi, eps, &a1, &a2, 20_000, 73).unwrap();
        let shifted = verify_t4(&psi, eps, &a1.shift(3.0), &a2.shift(-2.0), 20_000, 73).unwrap();
        assert_abs_diff_eq!(
            base.classical_value,
            shifted.classical_value,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(base.quantum_value, shifted.quantum_value, epsilon = 1e-12);
    }

    #[test]
    fn t3_suppression_on_product_state() {
        let mut rng = rng::seeded(81);
        let psi = tensor_product(
            &random_unit_vector(2, &mut rng),
            &random_unit_vector(2, &mut rng),
        )
        .unwrap();
        let a1 = SymOperator::random(2, &mut rng);
        let a2 = SymOperator::random(2, &mut rng);
        let report = verify_t3(&psi, 0.05, &a1, &a2, 40_000, 82).unwrap();
        assert!(report.quantum_value.abs() <= 1e-12);
        assert!(report.analytic_classical.abs() <= 1e-12);
        assert!(report.classical_value.abs() <= 5.0 * report.standard_error);

        assert!(verify_t3(&bell_state(), 0.3, &a1, &a2, 100, 1).is_err());
    }

    #[test]
    fn calibrated_average_recovers_quantum_mean() {
        let psi = bell_state();
        let eps = 0.3;
        let cov = regularized_covariance(&psi, eps).unwrap();
        let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
        let batch = sample_fields(&factor, 40_000, 91);

        // A = I on side 1: raw mean near 1 + n1 eps, calibrated 1.
        let id = SymOperator::identity(2);
        let report = calibrated_average(&batch, &id, &psi, eps, Side::One).unwrap();
        assert_eq!(report.identity, Identity::Yy1);
        assert_abs_diff_eq!(report.quantum_value, 1.0, epsilon = 1e-12);
        assert!(report.pass, "z = {}", report.z_score);

        // A = diag(1, -1): quantum average 0.
        let report = calibrated_average(&batch, &sz(), &psi, eps, Side::Two).unwrap();
        assert_eq!(report.identity, Identity::Yy2);
        assert_abs_diff_eq!(report.quantum_value, 0.0, epsilon = 1e-12);
        assert!(report.pass);
    }

    #[test]
    fn calibrated_average_with_zero_background() {
        let mut rng = rng::seeded(95);
        let psi = tensor_product(
            &random_unit_vector(2, &mut rng),
            &random_unit_vector(3, &mut rng),
        )
        .unwrap();
        let cov = regularized_covariance(&psi, 0.0).unwrap();
        let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
        let batch = sample_fields(&factor, 40_000, 96);
        let a = SymOperator::random(2, &mut rng);
        let report = calibrated_average(&batch, &a, &psi, 0.0, Side::One).unwrap();
        assert!(report.pass);
        assert!(report.algebraic_deviation() <= 1e-12);
    }

    #[test]
    fn cross_correlation_detected_on_product_state() {
        // The punchline: quantum covariance 0, classical correlation 1.
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let f1 = DVector::from_vec(vec![1.0, 0.0]);
        let psi = tensor_product(&e1, &f1).unwrap();
        let cov = regularized_covariance(&psi, 0.05).unwrap();
        let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
        let batch = sample_fields(&factor, 40_000, 101);
        let report = cross_linear_correlation(&batch, &psi, &e1, &f1).unwrap();
        assert_abs_diff_eq!(report.analytic_classical, 1.0, epsilon = 1e-12);
        assert!(report.quantum_value.abs() <= 1e-12);
        assert!(report.pass);
        // Detected as nonzero well beyond the threshold.
        assert!(report.classical_value / report.standard_error > Z_THRESHOLD);
    }

    #[test]
    fn cross_correlation_on_bell_state() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let report = {
            let cov = regularized_covariance(&bell_state(), 0.3).unwrap();
            let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
            let batch = sample_fields(&factor, 40_000, 103);
            cross_linear_correlation(&batch, &bell_state(), &e1, &e1).unwrap()
        };
        assert_abs_diff_eq!(
            report.analytic_classical,
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        assert!(report.pass);
    }

    #[test]
    fn cross_correlation_vanishes_off_range() {
        // u orthogonal to the range of Psi_hat.
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let psi = tensor_product(&e1, &e1).unwrap();
        let cov = regularized_covariance(&psi, 0.05).unwrap();
        let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
        let batch = sample_fields(&factor, 40_000, 105);
        let report = cross_linear_correlation(&batch, &psi, &e2, &e1).unwrap();
        assert_abs_diff_eq!(report.analytic_classical, 0.0, epsilon = 1e-15);
        assert!(report.pass);
    }

    #[test]
    fn estimator_error_shrinks_with_sample_size() {
        // Error at 4n is roughly half the error at n (fixed seeds).
        let psi = bell_state();
        let cov = regularized_covariance(&psi, 0.3).unwrap();
        let factor = factorize_covariance(&cov, FACTOR_TOL).unwrap();
        let truth = analytic_product_moment(&cov, &sz(), &sz()).unwrap()
            - (cov.d11().matrix() * sz().matrix()).trace()
                * (cov.d22().matrix() * sz().matrix()).trace();
        let mut errors = Vec::new();
        for (n, seed) in [(50_000usize, 7u64), (200_000, 7)] {
            let batch = sample_fields(&factor, n, seed);
            let (c, _) = empirical_quadratic_covariance(&batch, &sz(), &sz()).unwrap();
            errors.push((c - truth).abs());
        }
        let ratio = errors[0] / errors[1];
        assert!(
            (1.2..=3.5).contains(&ratio),
            "error ratio {ratio} outside [1.2, 3.5]"
        );
    }

    #[test]
    fn reports_serialize_with_identity_tags() {
        let report = CorrelationReport::build(Identity::Cross, 1.0, 0.1, 1.0, 0.0, 10, 1, 0.05);
        let json = report.to_json();
        assert!(json.contains("\"CROSS\""));
        assert!(json.contains("\"pass\": true"));
    }
}
