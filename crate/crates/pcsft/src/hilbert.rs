//! Real finite-dimensional Hilbert space primitives: bipartite states, the
//! operator representation of a state, reduced density operators, Schmidt
//! decomposition, and tensor products.
//!
//! A bipartite state over `H1 (x) H2` is stored as its coefficient matrix `C`
//! in a fixed orthonormal product basis `e_i (x) f_j`, flattened row-major:
//! component `k = i * n2 + j`. The same matrix is simultaneously the matrix of
//! the linear map `H2 -> H1` associated with the state, which is what couples
//! quantum states to classical covariance blocks downstream.

use nalgebra::{DMatrix, DVector};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::svd::thin_svd;

/// Element of a real finite-dimensional Hilbert space.
pub type HVector = DVector<f64>;

/// Max allowed `|norm - 1|` for state constructors.
pub const STATE_NORM_TOL: f64 = 1e-12;
/// Max allowed `|norm - 1|` for unit-vector preconditions (`tensor_product`).
pub const UNIT_NORM_TOL: f64 = 1e-10;
/// Loader tolerance: files within this of unit norm are renormalized.
pub const LOAD_NORM_TOL: f64 = 1e-6;
/// Max allowed `max |A - A^T|` for symmetric operators.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Default relative cutoff separating numerical zeros from genuine Schmidt
/// coefficients.
pub const SCHMIDT_TOL: f64 = 1e-10;

/// Which marginal of a bipartite system an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::One => 1,
            Side::Two => 2,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

fn check_finite(data: impl Iterator<Item = f64>) -> Result<()> {
    for x in data {
        if !x.is_finite() {
            return Err(Error::NonFinite);
        }
    }
    Ok(())
}

/// Real symmetric operator: a quantum observable or a covariance block.
#[derive(Debug, Clone, PartialEq)]
pub struct SymOperator {
    matrix: DMatrix<f64>,
}

impl SymOperator {
    /// Validates squareness, finiteness and symmetry within [`SYMMETRY_TOL`],
    /// then stores the exactly symmetrized `(A + A^T) / 2`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_finite(matrix.iter().copied())?;
        let max_deviation = (&matrix - matrix.transpose())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        if max_deviation > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { max_deviation });
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { matrix })
    }

    /// Wraps a matrix that is symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(matrix: DMatrix<f64>) -> Self {
        debug_assert_eq!(matrix, matrix.transpose());
        Self { matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_symmetric_unchecked(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_symmetric_unchecked(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_symmetric_unchecked(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    /// Symmetric matrix with independent N(0, 1) entries on and above the
    /// diagonal, mirrored below.
    pub fn random(dim: usize, rng: &mut impl RngCore) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        let mut buf = [0.0f64; 1];
        for i in 0..dim {
            for j in i..dim {
                rng::fill_standard_normal(rng, &mut buf);
                m[(i, j)] = buf[0];
                m[(j, i)] = buf[0];
            }
        }
        Self::from_symmetric_unchecked(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn apply(&self, v: &HVector) -> HVector {
        &self.matrix * v
    }

    /// `A + c * I`.
    pub fn shift(&self, c: f64) -> Self {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self::from_symmetric_unchecked(m)
    }
}

/// Kronecker product `A1 (x) A2`, consistent with the row-major flattening of
/// `BipartiteState` coefficients: `(A1 (x) A2)(u (x) v) = (A1 u) (x) (A2 v)`.
pub fn operator_tensor(a1: &SymOperator, a2: &SymOperator) -> SymOperator {
    SymOperator::from_symmetric_unchecked(a1.matrix().kronecker(a2.matrix()))
}

/// Normalized pure state of a composite system `H1 (x) H2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    coeffs: DMatrix<f64>,
}

impl BipartiteState {
    /// Requires Frobenius norm 1 within [`STATE_NORM_TOL`].
    pub fn new(coeffs: DMatrix<f64>) -> Result<Self> {
        check_finite(coeffs.iter().copied())?;
        let deviation = (coeffs.norm() - 1.0).abs();
        if deviation > STATE_NORM_TOL {
            return Err(Error::NotNormalized {
                deviation,
                tolerance: STATE_NORM_TOL,
            });
        }
        Ok(Self { coeffs })
    }

    /// Scales an arbitrary nonzero coefficient matrix to unit norm.
    pub fn from_unnormalized(coeffs: DMatrix<f64>) -> Result<Self> {
        check_finite(coeffs.iter().copied())?;
        let norm = coeffs.norm();
        if norm <= f64::EPSILON {
            return Err(Error::InvalidArgument(
                "coefficient matrix is (numerically) zero".into(),
            ));
        }
        Ok(Self {
            coeffs: coeffs / norm,
        })
    }

    fn from_validated(coeffs: DMatrix<f64>) -> Self {
        Self { coeffs }
    }

    /// `(n1, n2)`, the marginal dimensions.
    pub fn dims(&self) -> (usize, usize) {
        (self.coeffs.nrows(), self.coeffs.ncols())
    }

    pub fn total_dim(&self) -> usize {
        self.coeffs.nrows() * self.coeffs.ncols()
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// Matrix of the operator representation of the state: the linear map
    /// `H2 -> H1` sending `phi` to `sum_j (phi, chi_j) psi_j`. In the product
    /// basis this is exactly the coefficient matrix.
    pub fn as_operator(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// Row-major flattening into a vector of `H1 (x) H2`, component
    /// `k = i * n2 + j`.
    pub fn flatten(&self) -> DVector<f64> {
        let (n1, n2) = self.dims();
        DVector::from_fn(n1 * n2, |k, _| self.coeffs[(k / n2, k % n2)])
    }

    /// Reduced density operator of one marginal. Side 1 is the operator
    /// product `C C^T`, side 2 is `C^T C`; both are PSD with unit trace.
    pub fn reduced_density(&self, side: Side) -> SymOperator {
        let c = &self.coeffs;
        let m = match side {
            Side::One => c * c.transpose(),
            Side::Two => c.transpose() * c,
        };
        // The (i, j) and (j, i) entries are the same dot product, so the
        // result is exactly symmetric.
        SymOperator::from_symmetric_unchecked(m)
    }

    /// Schmidt decomposition via SVD of the coefficient matrix. `tol` is the
    /// relative cutoff below which singular values count as numerical zeros;
    /// it must lie in `(0, 1e-6]`.
    pub fn schmidt(&self, tol: f64) -> Result<SchmidtForm> {
        if !(tol > 0.0 && tol <= 1e-6) {
            return Err(Error::InvalidArgument(format!(
                "schmidt tolerance must be in (0, 1e-6], got {tol:e}"
            )));
        }
        let (n1, n2) = self.dims();
        let svd = thin_svd(&self.coeffs);
        let sigma_max = svd.sigma[0];
        let rank = svd
            .sigma
            .iter()
            .filter(|&&s| s > tol * sigma_max)
            .count()
            .max(1);

        let mut alphas = Vec::with_capacity(rank);
        let mut left = DMatrix::zeros(n1, rank);
        let mut right = DMatrix::zeros(n2, rank);
        for col in 0..rank {
            alphas.push(svd.sigma[col]);
            let mut ui: DVector<f64> = svd.u.column(col).into();
            let mut vi: DVector<f64> = svd.v.column(col).into();
            // Fix the SVD sign ambiguity: largest-magnitude entry of the left
            // vector is made positive so frames are reproducible.
            let pivot = ui.iter().enumerate().fold(0, |best, (idx, x)| {
                if x.abs() > ui[best].abs() {
                    idx
                } else {
                    best
                }
            });
            if ui[pivot] < 0.0 {
                ui.neg_mut();
                vi.neg_mut();
            }
            left.set_column(col, &ui);
            right.set_column(col, &vi);
        }
        Ok(SchmidtForm {
            alphas,
            left_frame: left,
            right_frame: right,
            rank,
        })
    }

    /// The same state viewed with the subsystems exchanged (`C -> C^T`).
    pub fn swap(&self) -> BipartiteState {
        Self::from_validated(self.coeffs.transpose())
    }
}

/// Schmidt decomposition of a bipartite state: coefficients sorted descending
/// and orthonormal frames in each marginal space.
#[derive(Debug, Clone)]
pub struct SchmidtForm {
    alphas: Vec<f64>,
    left_frame: DMatrix<f64>,
    right_frame: DMatrix<f64>,
    rank: usize,
}

impl SchmidtForm {
    /// Coefficients above the cutoff, sorted descending; their squares sum
    /// to 1.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Count of coefficients above the cutoff; 1 iff the state factorizes.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Orthonormal columns in `H1`.
    pub fn left_frame(&self) -> &DMatrix<f64> {
        &self.left_frame
    }

    /// Orthonormal columns in `H2`.
    pub fn right_frame(&self) -> &DMatrix<f64> {
        &self.right_frame
    }

    pub fn left_vector(&self, i: usize) -> HVector {
        self.left_frame.column(i).into()
    }

    pub fn right_vector(&self, i: usize) -> HVector {
        self.right_frame.column(i).into()
    }

    /// Rebuild the coefficient matrix `sum_i alpha_i u_i v_i^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.left_frame.nrows(), self.right_frame.nrows());
        let mut c = DMatrix::zeros(n1, n2);
        for (i, &alpha) in self.alphas.iter().enumerate() {
            c += alpha * self.left_frame.column(i) * self.right_frame.column(i).transpose();
        }
        c
    }

    /// Largest `alpha_i (1 - alpha_i)`; the closed form for the minimal
    /// background strength.
    pub fn max_alpha_gap(&self) -> f64 {
        self.alphas
            .iter()
            .map(|&a| a * (1.0 - a))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Product state `psi1 (x) psi2`; the coefficient matrix is the outer product.
pub fn tensor_product(psi1: &HVector, psi2: &HVector) -> Result<BipartiteState> {
    for (name, v) in [("psi1", psi1), ("psi2", psi2)] {
        check_finite(v.iter().copied())?;
        let deviation = (v.norm() - 1.0).abs();
        if deviation > UNIT_NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "{name} is not a unit vector: |norm - 1| = {deviation:.3e}"
            )));
        }
    }
    let outer = psi1 * psi2.transpose();
    // Inputs are unit within 1e-10, so this only strips residual rounding.
    BipartiteState::from_unnormalized(outer)
}

/// Unit vector with direction drawn from the rotation-invariant ensemble.
pub fn random_unit_vector(dim: usize, rng: &mut impl RngCore) -> HVector {
    loop {
        let mut buf = vec![0.0; dim];
        rng::fill_standard_normal(rng, &mut buf);
        let v = DVector::from_vec(buf);
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// Random normalized state: i.i.d. standard normal coefficients, optionally
/// projected to a prescribed Schmidt rank by truncated SVD, then normalized.
/// Deterministic for a fixed seed within one build.
pub fn random_state(
    dims: (usize, usize),
    seed: u64,
    schmidt_rank: Option<usize>,
) -> Result<BipartiteState> {
    let (n1, n2) = dims;
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidArgument("dimensions must be >= 1".into()));
    }
    if let Some(r) = schmidt_rank {
        if r < 1 || r > n1.min(n2) {
            return Err(Error::InvalidArgument(format!(
                "schmidt rank {r} out of range 1..={}",
                n1.min(n2)
            )));
        }
    }
    let mut rng = rng::seeded(seed);
    let mut buf = vec![0.0; n1 * n2];
    rng::fill_standard_normal(&mut rng, &mut buf);
    // Row-major fill so the stream layout matches the basis flattening.
    let mut c = DMatrix::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            c[(i, j)] = buf[i * n2 + j];
        }
    }
    if let Some(r) = schmidt_rank {
        if r < n1.min(n2) {
            let svd = thin_svd(&c);
            c = DMatrix::zeros(n1, n2);
            for i in 0..r {
                c += svd.sigma[i] * svd.u.column(i) * svd.v.column(i).transpose();
            }
        }
    }
    BipartiteState::from_unnormalized(c)
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    dims: [usize; 2],
    coeffs: Vec<f64>,
}

/// Parse the state interchange format: a JSON object
/// `{ "dims": [n1, n2], "coeffs": [row-major reals] }`. Coefficients within
/// [`LOAD_NORM_TOL`] of unit norm are renormalized; anything further off is
/// rejected.
pub fn state_from_json(s: &str) -> Result<BipartiteState> {
    let file: StateFile =
        serde_json::from_str(s).map_err(|e| Error::StateFormat(e.to_string()))?;
    let [n1, n2] = file.dims;
    if n1 == 0 || n2 == 0 {
        return Err(Error::StateFormat("dims must be >= 1".into()));
    }
    if file.coeffs.len() != n1 * n2 {
        return Err(Error::StateFormat(format!(
            "expected {} coefficients for dims [{}, {}], got {}",
            n1 * n2,
            n1,
            n2,
            file.coeffs.len()
        )));
    }
    check_finite(file.coeffs.iter().copied())
        .map_err(|_| Error::StateFormat("coefficients must be finite".into()))?;
    let c = DMatrix::from_fn(n1, n2, |i, j| file.coeffs[i * n2 + j]);
    let deviation = (c.norm() - 1.0).abs();
    if deviation > LOAD_NORM_TOL {
        return Err(Error::NotNormalized {
            deviation,
            tolerance: LOAD_NORM_TOL,
        });
    }
    BipartiteState::from_unnormalized(c)
}

/// Serialize a state to the interchange format accepted by [`state_from_json`].
pub fn state_to_json(state: &BipartiteState) -> String {
    let (n1, n2) = state.dims();
    let coeffs = (0..n1 * n2)
        .map(|k| state.coeffs()[(k / n2, k % n2)])
        .collect();
    serde_json::to_string_pretty(&StateFile {
        dims: [n1, n2],
        coeffs,
    })
    .expect("state serialization cannot fail")
}
