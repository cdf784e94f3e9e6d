//! Zero-mean Gaussian field sampling with a prescribed, possibly singular,
//! PSD covariance, plus the empirical estimators the identity checks run on.
//!
//! The square root comes from a symmetric eigendecomposition rather than
//! Cholesky: the background-free covariance of a factorizable state is rank
//! deficient and must still be sampleable. Samples are addressed by position
//! in the ChaCha stream (see [`crate::rng`]), so a batch can be produced in
//! disjoint chunks that concatenate to exactly the single-worker batch.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::covariance::BlockCovariance;
use crate::error::{Error, Result};
use crate::rng;

/// Default relative eigenvalue clipping tolerance for factorization.
pub const FACTOR_TOL: f64 = 1e-10;

/// Square-root factor `L` of a block covariance: `L L^T = C` with the
/// numerically zero eigendirections dropped.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    root: DMatrix<f64>,
    source_dims: (usize, usize),
    clip_report: Vec<f64>,
    covariance_id: String,
    epsilon: f64,
}

impl CovarianceFactor {
    /// `(n1 + n2) x r` root matrix, `r <= n1 + n2`.
    pub fn root(&self) -> &DMatrix<f64> {
        &self.root
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    /// Number of retained eigendirections.
    pub fn rank(&self) -> usize {
        self.root.ncols()
    }

    /// Eigenvalues clipped to zero during factorization (all within the
    /// clipping tolerance of zero).
    pub fn clip_report(&self) -> &[f64] {
        &self.clip_report
    }

    pub fn covariance_id(&self) -> &str {
        &self.covariance_id
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Factor a valid covariance as `L L^T` by symmetric eigendecomposition.
///
/// Eigenvalues in `[-tol * max(1, lambda_max), tol * max(1, lambda_max)]`
/// are treated as numerical zeros: clipped, recorded, and their directions
/// dropped from the root. Anything more negative is a genuine PSD violation.
pub fn factorize_covariance(cov: &BlockCovariance, tol: f64) -> Result<CovarianceFactor> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "factorization tolerance must be > 0, got {tol}"
        )));
    }
    if !cov.is_valid() {
        return Err(Error::NotPositiveSemidefinite {
            lambda_min: cov.lambda_min(),
            deficit: -cov.lambda_min(),
        });
    }
    let full = cov.full_matrix();
    let n = full.nrows();
    let eigen = full.clone().symmetric_eigen();
    let lambda_max = eigen
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = tol * lambda_max.max(1.0);

    let mut kept: Vec<(f64, usize)> = Vec::new();
    let mut clip_report = Vec::new();
    for (i, &lambda) in eigen.eigenvalues.iter().enumerate() {
        if lambda < -threshold {
            return Err(Error::NotPositiveSemidefinite {
                lambda_min: lambda,
                deficit: -lambda,
            });
        } else if lambda <= threshold {
            clip_report.push(lambda);
        } else {
            kept.push((lambda, i));
        }
    }
    // Deterministic column order: descending eigenvalue.
    kept.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite eigenvalues"));

    let mut root = DMatrix::zeros(n, kept.len());
    for (col, &(lambda, i)) in kept.iter().enumerate() {
        let scaled = eigen.eigenvectors.column(i) * lambda.sqrt();
        root.set_column(col, &scaled);
    }

    let reconstruction_error = (&root * root.transpose() - &full)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let bound = 1e-8 * lambda_max.max(1.0);
    if reconstruction_error > bound {
        return Err(Error::InternalConsistency {
            context: "covariance factorization: ||L L^T - C||_max",
            lhs: reconstruction_error,
            rhs: bound,
            diff: reconstruction_error,
        });
    }

    Ok(CovarianceFactor {
        root,
        source_dims: cov.dims(),
        clip_report,
        covariance_id: cov.content_id(),
        epsilon: cov.epsilon(),
    })
}

/// Batch of paired field samples with provenance.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// `n x n1`, one field sample per row.
    phi1: DMatrix<f64>,
    /// `n x n2`.
    phi2: DMatrix<f64>,
    seed: u64,
    covariance_id: String,
    epsilon: f64,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.phi1.nrows()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.phi1.ncols(), self.phi2.ncols())
    }

    pub fn phi1(&self) -> &DMatrix<f64> {
        &self.phi1
    }

    pub fn phi2(&self) -> &DMatrix<f64> {
        &self.phi2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn covariance_id(&self) -> &str {
        &self.covariance_id
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Sum of two independent fields sampled over the same index range.
    /// Models a total signal like intrinsic-plus-background.
    pub fn add(&self, other: &SampleBatch) -> Result<SampleBatch> {
        if self.n() != other.n() || self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "cannot add batches of shape {:?}x{} and {:?}x{}",
                self.dims(),
                self.n(),
                other.dims(),
                other.n()
            )));
        }
        let mut hasher = Sha256::new();
        hasher.update(self.covariance_id.as_bytes());
        hasher.update(b"+");
        hasher.update(other.covariance_id.as_bytes());
        let covariance_id = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(SampleBatch {
            phi1: &self.phi1 + &other.phi1,
            phi2: &self.phi2 + &other.phi2,
            seed: self.seed,
            covariance_id,
            epsilon: self.epsilon + other.epsilon,
        })
    }

    /// CSV export: header `sample_index,phi1_1..,phi2_1..`, one row per
    /// sample, `Display`-formatted floats (shortest round-trip form).
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let (n1, n2) = self.dims();
        write!(w, "sample_index")?;
        for j in 0..n1 {
            write!(w, ",phi1_{}", j + 1)?;
        }
        for j in 0..n2 {
            write!(w, ",phi2_{}", j + 1)?;
        }
        writeln!(w)?;
        for k in 0..self.n() {
            write!(w, "{k}")?;
            for j in 0..n1 {
                write!(w, ",{}", self.phi1[(k, j)])?;
            }
            for j in 0..n2 {
                write!(w, ",{}", self.phi2[(k, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Sidecar metadata for the CSV export.
    pub fn metadata_json(&self) -> String {
        #[derive(Serialize)]
        struct Metadata<'a> {
            seed: u64,
            n: usize,
            covariance_id: &'a str,
            epsilon: f64,
        }
        serde_json::to_string_pretty(&Metadata {
            seed: self.seed,
            n: self.n(),
            covariance_id: &self.covariance_id,
            epsilon: self.epsilon,
        })
        .expect("metadata serialization cannot fail")
    }
}

/// Draw samples `start .. start + count` of the batch determined by
/// `(factor, seed)`.
///
/// Sample `k` always reads the same stream window, so concatenating disjoint
/// ranges reproduces [`sample_fields`] exactly.
pub fn sample_range(
    factor: &CovarianceFactor,
    start: usize,
    count: usize,
    seed: u64,
) -> SampleBatch {
    let (n1, n2) = factor.source_dims;
    let r = factor.rank();
    let stride = rng::words_per_sample(r);
    let mut rng = rng::seeded(seed);
    let mut z = vec![0.0f64; r];
    let mut phi1 = DMatrix::zeros(count, n1);
    let mut phi2 = DMatrix::zeros(count, n2);
    for k in 0..count {
        rng.set_word_pos((start + k) as u128 * stride);
        rng::fill_standard_normal(&mut rng, &mut z);
        let phi = factor.root() * DVector::from_column_slice(&z);
        for j in 0..n1 {
            phi1[(k, j)] = phi[j];
        }
        for j in 0..n2 {
            phi2[(k, j)] = phi[n1 + j];
        }
    }
    SampleBatch {
        phi1,
        phi2,
        seed,
        covariance_id: factor.covariance_id.clone(),
        epsilon: factor.epsilon,
    }
}

/// Draw `n` paired field samples `phi = L z` with `z` standard normal.
pub fn sample_fields(factor: &CovarianceFactor, n: usize, seed: u64) -> SampleBatch {
    sample_range(factor, 0, n, seed)
}

/// Uncentered second-moment estimator of the covariance, partitioned into
/// blocks. No mean subtraction: the model fixes `E phi = 0`, and subtracting
/// empirical means would bias the identity tests at order `1/n`.
pub fn empirical_covariance(batch: &SampleBatch) -> Result<BlockCovariance> {
    let n = batch.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "empirical covariance needs n >= 2, got {n}"
        )));
    }
    let (n1, n2) = batch.dims();
    let total = n1 + n2;
    let mut acc = DMatrix::zeros(total, total);
    let mut phi = DVector::zeros(total);
    for k in 0..n {
        for j in 0..n1 {
            phi[j] = batch.phi1[(k, j)];
        }
        for j in 0..n2 {
            phi[n1 + j] = batch.phi2[(k, j)];
        }
        // Products phi_a phi_b land symmetrically, so acc stays exactly
        // symmetric.
        for a in 0..total {
            for b in 0..total {
                acc[(a, b)] += phi[a] * phi[b];
            }
        }
    }
    acc /= n as f64;
    BlockCovariance::from_full(&acc, (n1, n2), 0.0)
}

/// Mean of `||phi||^2` over the batch; estimates `Tr C`.
pub fn dispersion(batch: &SampleBatch) -> f64 {
    let n = batch.n();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..n {
        total += batch.phi1.row(k).norm_squared() + batch.phi2.row(k).norm_squared();
    }
    total / n as f64
}

/// Per-entry standard errors of the uncentered second-moment estimator under
/// the true covariance `C`: `SE_ab = sqrt((C_aa C_bb + C_ab^2) / n)`. Used to
/// judge empirical covariances at a stated number of standard errors.
pub fn second_moment_standard_errors(cov: &BlockCovariance, n: usize) -> DMatrix<f64> {
    let c = cov.full_matrix();
    let total = c.nrows();
    DMatrix::from_fn(total, total, |a, b| {
        ((c[(a, a)] * c[(b, b)] + c[(a, b)] * c[(a, b)]) / n as f64).sqrt()
    })
}
