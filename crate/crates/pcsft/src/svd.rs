//! One-sided Jacobi SVD for small dense matrices.
//!
//! The Schmidt decomposition needs singular values accurate to well below
//! 1e-10 even when the matrix is exactly rank deficient, and theumbrella
//! bidiagonal solvers degrade badly there. One-sided Jacobi orthogonalizes
//! the columns directly; the convergence criterion bounds every cosine
//! between left singular vectors, so the factors stay orthonormal to
//! machine precision at any rank.

use nalgebra::DMatrix;

/// Relative off-diagonal threshold; also the orthogonality of the output.
const JACOBI_EPS: f64 = 1e-15;
const MAX_SWEEPS: usize = 64;

/// Thin SVD `a = u * diag(sigma) * v^T` with `sigma` sorted descending,
/// `u: m x k`, `v: n x k`, `k = min(m, n)`.
#[derive(Debug, Clone)]
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (m, n) = (a.nrows(), a.ncols());
    if m < n {
        // Work on the tall side and swap the factors back.
        let t = thin_svd(&a.transpose());
        return ThinSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }

    let mut b = a.clone();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let bp = b.column(p);
                let bq = b.column(q);
                let app = bp.dot(&bp);
                let aqq = bq.dot(&bq);
                let apq = bp.dot(&bq);
                if apq.abs() <= JACOBI_EPS * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let bkp = b[(k, p)];
                    let bkq = b[(k, q)];
                    b[(k, p)] = c * bkp - s * bkq;
                    b[(k, q)] = s * bkp + c * bkq;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = (0..n).map(|i| (b.column(i).norm(), i)).collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite norms"));

    let mut u = DMatrix::zeros(m, n);
    let mut v_sorted = DMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (col, &(s, i)) in order.iter().enumerate() {
        sigma.push(s);
        if s > 0.0 {
            u.set_column(col, &(b.column(i) / s));
        }
        v_sorted.set_column(col, &v.column(i));
    }
    ThinSvd {
        u,
        sigma,
        v: v_sorted,
    }
}
