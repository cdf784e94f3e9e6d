//! Prequantum block covariance operators.
//!
//! A bipartite state with coefficient matrix `C` induces the block operator
//! on `H1 x H2`
//!
//! ```text
//!         | C C^T    C    |                | C C^T + eps I      C         |
//! D_tilde=|               |    D(eps)  =   |                              |
//!         | C^T    C^T C  |                |      C^T       C^T C + eps I |
//! ```
//!
//! `D_tilde` is positive semidefinite exactly when the state factorizes; for
//! entangled states its most negative eigenvalue is `-max_i alpha_i (1 -
//! alpha_i)` over the Schmidt coefficients, so a white-noise background of at
//! least that strength must be mixed into the diagonal blocks before a
//! Gaussian field with this covariance exists. That threshold is `eps_star`,
//! computed here along both routes (eigensolver and Schmidt closed form) and
//! required to agree.

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hilbert::{BipartiteState, SymOperator, SCHMIDT_TOL, SYMMETRY_TOL};

/// Default eigenvalue tolerance for positive-semidefiniteness decisions.
pub const PSD_TOL: f64 = 1e-10;
/// Margin added to `eps_star` when callers ask for an automatic background.
pub const AUTO_EPS_MARGIN: f64 = 0.05;
/// Agreement required between eigensolver and closed-form `eps_star`.
const EPS_ROUTE_TOL: f64 = 1e-10;

/// Outcome of a positive-semidefiniteness test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PsdCheck {
    pub psd: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Eigenvalue PSD test: passes iff `lambda_min >= -tol * max(1, lambda_max)`.
///
/// Eigendecomposition rather than Cholesky on purpose: the covariances here
/// are routinely singular and Cholesky cannot certify the semidefinite case.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> Result<PsdCheck> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "PSD test needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let max_deviation = (m - m.transpose())
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max_deviation > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { max_deviation });
    }
    let eigenvalues = m.clone().symmetric_eigen().eigenvalues;
    let lambda_min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_max = eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PsdCheck {
        psd: lambda_min >= -tol * lambda_max.max(1.0),
        lambda_min,
        lambda_max,
    })
}

/// 2x2 block covariance operator on `H1 x H2`.
///
/// Only the upper off-diagonal block is stored; `d21` is its transpose by
/// construction. `epsilon` records the background strength already folded
/// into the diagonal blocks.
#[derive(Debug, Clone)]
pub struct BlockCovariance {
    d11: SymOperator,
    d12: DMatrix<f64>,
    d22: SymOperator,
    epsilon: f64,
    check: PsdCheck,
}

impl BlockCovariance {
    fn assemble(d11: SymOperator, d12: DMatrix<f64>, d22: SymOperator, epsilon: f64) -> Self {
        let full = full_matrix_of(&d11, &d12, &d22);
        let check = is_psd(&full, PSD_TOL).expect("assembled covariance is symmetric");
        Self {
            d11,
            d12,
            d22,
            epsilon,
            check,
        }
    }

    /// Build from a full `(n1+n2) x (n1+n2)` symmetric matrix.
    pub fn from_full(full: &DMatrix<f64>, dims: (usize, usize), epsilon: f64) -> Result<Self> {
        let (n1, n2) = dims;
        if full.nrows() != n1 + n2 || full.ncols() != n1 + n2 {
            return Err(Error::DimensionMismatch(format!(
                "expected {0}x{0} matrix for dims ({n1}, {n2}), got {1}x{2}",
                n1 + n2,
                full.nrows(),
                full.ncols()
            )));
        }
        let d11 = SymOperator::new(full.view((0, 0), (n1, n1)).clone_owned())?;
        let d22 = SymOperator::new(full.view((n1, n1), (n2, n2)).clone_owned())?;
        let d12 = full.view((0, n1), (n1, n2)).clone_owned();
        let d21 = full.view((n1, 0), (n2, n1)).clone_owned();
        let max_deviation = (&d12 - d21.transpose())
            .iter()
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
        if max_deviation > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { max_deviation });
        }
        Ok(Self::assemble(d11, d12, d22, epsilon))
    }

    /// Marginal dimensions `(n1, n2)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.d11.dim(), self.d22.dim())
    }

    pub fn total_dim(&self) -> usize {
        self.d11.dim() + self.d22.dim()
    }

    pub fn d11(&self) -> &SymOperator {
        &self.d11
    }

    /// Off-diagonal block `H2 -> H1`; equals the operator representation of
    /// the source state for the covariances built from states.
    pub fn d12(&self) -> &DMatrix<f64> {
        &self.d12
    }

    pub fn d21(&self) -> DMatrix<f64> {
        self.d12.transpose()
    }

    pub fn d22(&self) -> &SymOperator {
        &self.d22
    }

    /// Background strength folded into the diagonal blocks.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Whether the full matrix passed the PSD test at [`PSD_TOL`]; only valid
    /// covariances determine a Gaussian field.
    pub fn is_valid(&self) -> bool {
        self.check.psd
    }

    pub fn psd_check(&self) -> PsdCheck {
        self.check
    }

    pub fn lambda_min(&self) -> f64 {
        self.check.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.check.lambda_max
    }

    /// Assemble the full `(n1+n2) x (n1+n2)` matrix.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        full_matrix_of(&self.d11, &self.d12, &self.d22)
    }

    /// `Tr D11 + Tr D22`; the dispersion of the associated field.
    pub fn trace(&self) -> f64 {
        self.d11.trace() + self.d22.trace()
    }

    /// Content hash identifying the covariance (dims, epsilon, entries);
    /// stamped into sample batches for provenance.
    pub fn content_id(&self) -> String {
        let (n1, n2) = self.dims();
        let mut hasher = Sha256::new();
        hasher.update((n1 as u64).to_le_bytes());
        hasher.update((n2 as u64).to_le_bytes());
        hasher.update(self.epsilon.to_le_bytes());
        for x in self.full_matrix().iter() {
            hasher.update(x.to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn full_matrix_of(d11: &SymOperator, d12: &DMatrix<f64>, d22: &SymOperator) -> DMatrix<f64> {
    let (n1, n2) = (d11.dim(), d22.dim());
    let mut full = DMatrix::zeros(n1 + n2, n1 + n2);
    full.view_mut((0, 0), (n1, n1)).copy_from(d11.matrix());
    full.view_mut((0, n1), (n1, n2)).copy_from(d12);
    full.view_mut((n1, 0), (n2, n1))
        .copy_from(&d12.transpose());
    full.view_mut((n1, n1), (n2, n2)).copy_from(d22.matrix());
    full
}

/// Background-free covariance candidate `D_tilde`: diagonal blocks are the
/// reduced density operators, off-diagonal block is the state's operator
/// representation. Construction always succeeds; whether the result is a
/// usable covariance is recorded in its PSD tag.
pub fn naive_covariance(psi: &BipartiteState) -> BlockCovariance {
    let d11 = psi.reduced_density(crate::hilbert::Side::One);
    let d22 = psi.reduced_density(crate::hilbert::Side::Two);
    let d12 = psi.as_operator().clone();
    BlockCovariance::assemble(d11, d12, d22, 0.0)
}

/// White-noise covariance `eps I` on `H1 x H2`; the background field.
pub fn background_covariance(dims: (usize, usize), eps: f64) -> Result<BlockCovariance> {
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "background strength must be >= 0, got {eps}"
        )));
    }
    let (n1, n2) = dims;
    Ok(BlockCovariance::assemble(
        SymOperator::identity(n1).shift(eps - 1.0),
        DMatrix::zeros(n1, n2),
        SymOperator::identity(n2).shift(eps - 1.0),
        eps,
    ))
}

/// Minimal background strength report.
///
/// `eps_star` comes from the eigensolver (`max(0, -lambda_min)` of
/// `D_tilde`), `eps_star_closed_form` from the Schmidt coefficients
/// (`max_i alpha_i (1 - alpha_i)`); the constructor enforces their agreement.
#[derive(Debug, Clone, Serialize)]
pub struct EpsilonReport {
    pub lambda_min: f64,
    pub eps_star: f64,
    pub eps_star_closed_form: f64,
    pub schmidt_alphas: Vec<f64>,
}

impl EpsilonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Compute the minimal `eps` making `D_tilde + eps I` positive semidefinite,
/// along both routes.
pub fn min_epsilon(psi: &BipartiteState) -> Result<EpsilonReport> {
    let naive = naive_covariance(psi);
    let lambda_min = naive.lambda_min();
    let eps_star = (-lambda_min).max(0.0);

    let schmidt = psi.schmidt(SCHMIDT_TOL)?;
    let eps_star_closed_form = schmidt.max_alpha_gap();

    let diff = (eps_star - eps_star_closed_form).abs();
    if diff > EPS_ROUTE_TOL {
        return Err(Error::InternalConsistency {
            context: "eps_star: eigensolver vs Schmidt closed form",
            lhs: eps_star,
            rhs: eps_star_closed_form,
            diff,
        });
    }
    Ok(EpsilonReport {
        lambda_min,
        eps_star,
        eps_star_closed_form,
        schmidt_alphas: schmidt.alphas().to_vec(),
    })
}

/// `eps_star + 0.05`: the default background when the caller does not fix
/// one. Keeps the PSD margin positive while the background share of the
/// dispersion stays small against the intrinsic value 2.
pub fn auto_epsilon(psi: &BipartiteState) -> Result<f64> {
    Ok(min_epsilon(psi)?.eps_star + AUTO_EPS_MARGIN)
}

/// Background-regularized covariance `D(eps)`: `eps I` added to the diagonal
/// blocks, off-diagonal block untouched.
pub fn regularized_covariance(psi: &BipartiteState, eps: f64) -> Result<BlockCovariance> {
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "background strength must be >= 0, got {eps}"
        )));
    }
    let report = min_epsilon(psi)?;
    if eps < report.eps_star - EPS_ROUTE_TOL {
        return Err(Error::NotPositiveSemidefinite {
            lambda_min: report.lambda_min + eps,
            deficit: report.eps_star - eps,
        });
    }
    let d11 = psi.reduced_density(crate::hilbert::Side::One).shift(eps);
    let d22 = psi.reduced_density(crate::hilbert::Side::Two).shift(eps);
    let cov = BlockCovariance::assemble(d11, psi.as_operator().clone(), d22, eps);
    debug_assert!(cov.is_valid());
    Ok(cov)
}

/// Entanglement criterion: the state is entangled iff `D_tilde` fails the
/// PSD test. Cross-checked against the Schmidt rank; the two verdicts must
/// coincide in the same tolerance regime.
pub fn entangled(psi: &BipartiteState, tol: f64) -> Result<bool> {
    let naive = naive_covariance(psi);
    let check = is_psd(&naive.full_matrix(), tol)?;
    let by_psd = !check.psd;

    let schmidt_tol = tol.min(1e-6);
    let by_rank = psi.schmidt(schmidt_tol)?.rank() >= 2;

    if by_psd != by_rank {
        return Err(Error::InternalConsistency {
            context: "entanglement: PSD route vs Schmidt-rank route",
            lhs: if by_psd { 1.0 } else { 0.0 },
            rhs: if by_rank { 1.0 } else { 0.0 },
            diff: check.lambda_min.abs(),
        });
    }
    Ok(by_psd)
}

/// Split the field of `D(eps)` into an intrinsic part with covariance
/// `D_tilde` and an independent white background of strength `eps`.
///
/// Succeeds exactly for factorizable states; for entangled states the
/// intrinsic field does not exist as a classical random field and
/// [`Error::InseparableBackground`] is returned.
pub fn decompose(psi: &BipartiteState, eps: f64) -> Result<(BlockCovariance, f64)> {
    if eps < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "background strength must be >= 0, got {eps}"
        )));
    }
    let naive = naive_covariance(psi);
    if !naive.is_valid() {
        let report = min_epsilon(psi)?;
        return Err(Error::InseparableBackground {
            eps_star: report.eps_star,
        });
    }
    Ok((naive, eps))
}
