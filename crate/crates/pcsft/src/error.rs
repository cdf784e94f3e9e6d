use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the workbench.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A vector or coefficient matrix that must be normalized is not.
    #[error("not normalized: |norm - 1| = {deviation:.3e} exceeds tolerance {tolerance:.1e}")]
    NotNormalized { deviation: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric: max |A - A^T| = {max_deviation:.3e}")]
    NotSymmetric { max_deviation: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    /// A covariance candidate has a genuinely negative spectrum. `deficit` is
    /// how much must be added to the diagonal to reach positive semidefiniteness.
    #[error("not positive semidefinite: lambda_min = {lambda_min:.6e}, deficit = {deficit:.6e}")]
    NotPositiveSemidefinite { lambda_min: f64, deficit: f64 },

    /// Entangled states admit no intrinsic-plus-background field splitting.
    #[error("inseparable background: state is entangled (eps_star = {eps_star:.6e}), \
             the intrinsic field does not exist as a classical random field")]
    InseparableBackground { eps_star: f64 },

    /// Two algebraic routes that must agree did not; signals a linear-algebra bug.
    #[error("internal consistency violation in {context}: {lhs:.12e} vs {rhs:.12e} (|diff| = {diff:.3e})")]
    InternalConsistency {
        context: &'static str,
        lhs: f64,
        rhs: f64,
        diff: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed state data: {0}")]
    StateFormat(String),
}
