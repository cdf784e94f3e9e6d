//! Exact quantum-mechanical reference values: single and product averages,
//! centered observables, and quantum covariance.
//!
//! The product average is always evaluated along two independent routes --
//! the tensor form `(A1 (x) A2 Psi, Psi)` and the trace form
//! `Tr(Psi_hat A2 Psi_hat^T A1)` -- and the two are required to agree. That
//! identity is the hinge between quantum correlations and classical
//! covariances of quadratic forms, so it doubles as a permanent self-test:
//! a disagreement means a linear-algebra bug, not a physics result.

use crate::error::{Error, Result};
use crate::hilbert::{operator_tensor, BipartiteState, Side, SymOperator};

/// Relative tolerance for the dual-route agreement checks.
const CONSISTENCY_TOL: f64 = 1e-10;

fn check_side_dims(a: &SymOperator, psi: &BipartiteState, side: Side) -> Result<()> {
    let (n1, n2) = psi.dims();
    let expected = match side {
        Side::One => n1,
        Side::Two => n2,
    };
    if a.dim() != expected {
        return Err(Error::DimensionMismatch(format!(
            "observable on side {side} must be {expected}x{expected}, got {0}x{0}",
            a.dim()
        )));
    }
    Ok(())
}

fn check_pair_dims(a1: &SymOperator, a2: &SymOperator, psi: &BipartiteState) -> Result<()> {
    check_side_dims(a1, psi, Side::One)?;
    check_side_dims(a2, psi, Side::Two)
}

/// Quantum average of a marginal observable: `Tr(rho^(side) A)`.
pub fn qm_average_single(a: &SymOperator, psi: &BipartiteState, side: Side) -> Result<f64> {
    check_side_dims(a, psi, side)?;
    let rho = psi.reduced_density(side);
    Ok((rho.matrix() * a.matrix()).trace())
}

/// Both evaluation routes of the product average.
#[derive(Debug, Clone, Copy)]
pub struct ProductAverage {
    /// `(A1 (x) A2 Psi, Psi)` evaluated in the tensor-product space.
    pub tensor_route: f64,
    /// `Tr(Psi_hat A2 Psi_hat^T A1)` evaluated with the operator
    /// representation of the state.
    pub trace_route: f64,
}

impl ProductAverage {
    pub fn max_deviation(&self) -> f64 {
        (self.tensor_route - self.trace_route).abs()
    }
}

/// Evaluate `<A1 (x) A2>_Psi` along both routes and verify they agree within
/// `1e-10 * (1 + |value|)`.
pub fn product_average_routes(
    a1: &SymOperator,
    a2: &SymOperator,
    psi: &BipartiteState,
) -> Result<ProductAverage> {
    check_pair_dims(a1, a2, psi)?;

    let tensor = operator_tensor(a1, a2);
    let v = psi.flatten();
    let tensor_route = tensor.apply(&v).dot(&v);

    let c = psi.as_operator();
    let trace_route = (c * a2.matrix() * c.transpose() * a1.matrix()).trace();

    let routes = ProductAverage {
        tensor_route,
        trace_route,
    };
    if routes.max_deviation() > CONSISTENCY_TOL * (1.0 + tensor_route.abs()) {
        return Err(Error::InternalConsistency {
            context: "product average: tensor route vs trace route",
            lhs: tensor_route,
            rhs: trace_route,
            diff: routes.max_deviation(),
        });
    }
    Ok(routes)
}

/// Quantum average of the product observable `A1 (x) A2`.
pub fn qm_average_product(
    a1: &SymOperator,
    a2: &SymOperator,
    psi: &BipartiteState,
) -> Result<f64> {
    Ok(product_average_routes(a1, a2, psi)?.tensor_route)
}

/// Observable together with its state-dependent mean and zero-mean shift.
#[derive(Debug, Clone)]
pub struct CenteredObservable {
    original: SymOperator,
    mean: f64,
    centered: SymOperator,
}

impl CenteredObservable {
    pub fn original(&self) -> &SymOperator {
        &self.original
    }

    /// `<A>_Psi`, the exact analytic mean used for the shift.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `A - <A>_Psi I`; its quantum average vanishes.
    pub fn centered(&self) -> &SymOperator {
        &self.centered
    }
}

/// Shift an observable by its exact quantum mean: `A -> A - <A>_Psi I`.
pub fn center(a: &SymOperator, psi: &BipartiteState, side: Side) -> Result<CenteredObservable> {
    let mean = qm_average_single(a, psi, side)?;
    Ok(CenteredObservable {
        original: a.clone(),
        mean,
        centered: a.shift(-mean),
    })
}

/// Quantum covariance `<A1 (x) A2> - <A1><A2>`.
///
/// Cross-checked against the centered product `<A01 (x) A02>`, which must
/// give the same number; a disagreement is raised as an internal error.
pub fn qm_covariance(a1: &SymOperator, a2: &SymOperator, psi: &BipartiteState) -> Result<f64> {
    let product = qm_average_product(a1, a2, psi)?;
    let m1 = qm_average_single(a1, psi, Side::One)?;
    let m2 = qm_average_single(a2, psi, Side::Two)?;
    let direct = product - m1 * m2;

    let c1 = center(a1, psi, Side::One)?;
    let c2 = center(a2, psi, Side::Two)?;
    let centered_route = qm_average_product(c1.centered(), c2.centered(), psi)?;

    let diff = (direct - centered_route).abs();
    if diff > CONSISTENCY_TOL * (1.0 + direct.abs()) {
        return Err(Error::InternalConsistency {
            context: "quantum covariance: direct vs centered route",
            lhs: direct,
            rhs: centered_route,
            diff,
        });
    }
    Ok(direct)
}
