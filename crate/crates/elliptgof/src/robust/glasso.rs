//! Graphical lasso by blockwise coordinate descent.
//!
//! Solves  min_{Omega > 0}  tr(S Omega) - log|Omega| + lambda ||Omega||_1
//! with S = p * s and the l1 penalty summing over all entries including the
//! diagonal, so the working covariance keeps W_jj = S_jj + lambda fixed.
//! Convergence is declared on the entrywise KKT residual of the recovered
//! precision matrix.

use nalgebra::DMatrix;

use super::RobustError;
use crate::linalg::SymMatrix;

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Entrywise KKT residual of (omega, its exact inverse) for the penalized
/// objective. Entries within `zero_tol` of zero use the subgradient interval.
fn kkt_residual(s: &DMatrix<f64>, omega: &DMatrix<f64>, inv: &DMatrix<f64>, lambda: f64) -> f64 {
    let p = s.nrows();
    let omega_scale = omega.amax().max(1e-300);
    let zero_tol = 1e-10 * omega_scale;
    let mut worst = 0.0_f64;
    for j in 0..p {
        for k in 0..p {
            let grad = s[(j, k)] - inv[(j, k)];
            let res = if j == k || omega[(j, k)].abs() > zero_tol {
                (grad + lambda * omega[(j, k)].signum()).abs()
            } else {
                (grad.abs() - lambda).max(0.0)
            };
            worst = worst.max(res);
        }
    }
    worst
}

/// Recover the precision matrix from the working covariance and the per-column
/// regression coefficients. Returns None when a pivot is nonpositive, which
/// means the sweep state is not yet consistent.
fn recover_precision(w: &DMatrix<f64>, beta: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = w.nrows();
    let mut omega = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut dot = 0.0;
        for k in 0..p {
            if k != j {
                dot += w[(k, j)] * beta[(k, j)];
            }
        }
        let pivot = w[(j, j)] - dot;
        if pivot <= 0.0 {
            return None;
        }
        let ojj = 1.0 / pivot;
        omega[(j, j)] = ojj;
        for k in 0..p {
            if k != j {
                omega[(k, j)] = -beta[(k, j)] * ojj;
            }
        }
    }
    // Column recoveries agree only in the limit; average the two triangles.
    Some((&omega + omega.transpose()) * 0.5)
}

/// Spatial-sign graphical lasso: the input is the sign covariance `s`, which
/// is scaled internally to S = dim * s before solving.
pub fn graphical_lasso(
    s: &SymMatrix,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SymMatrix, RobustError> {
    assert!(lambda >= 0.0, "penalty must be nonnegative");
    let p = s.dim();
    let pf = p as f64;
    let big_s = s.as_matrix() * pf;

    for j in 0..p {
        if big_s[(j, j)] + lambda <= 0.0 {
            return Err(RobustError::GlassoNonPd);
        }
    }

    if p == 1 {
        return Ok(SymMatrix::diagonal(&[1.0 / (big_s[(0, 0)] + lambda)]));
    }

    // Working covariance starts at S + lambda I; the diagonal never moves.
    let mut w = big_s.clone();
    for j in 0..p {
        w[(j, j)] += lambda;
    }
    let mut beta = DMatrix::<f64>::zeros(p, p);
    let inner_tol = (tol * 0.05).max(1e-14);
    let mut residual = f64::INFINITY;

    for _sweep in 0..max_iter {
        for j in 0..p {
            // q = W11 * beta_j in full coordinates (entry j unused).
            let mut q = vec![0.0_f64; p];
            for l in 0..p {
                let b = beta[(l, j)];
                if l == j || b == 0.0 {
                    continue;
                }
                for (k, qk) in q.iter_mut().enumerate() {
                    *qk += w[(k, l)] * b;
                }
            }

            // Coordinate descent on
            //   min 1/2 b' W11 b - b's12 + lambda ||b||_1.
            for _pass in 0..200 {
                let mut max_change = 0.0_f64;
                for k in 0..p {
                    if k == j {
                        continue;
                    }
                    let old = beta[(k, j)];
                    let grad_rest = q[k] - w[(k, k)] * old;
                    let z = big_s[(k, j)] - grad_rest;
                    let new = soft_threshold(z, lambda) / w[(k, k)];
                    if new != old {
                        let delta = new - old;
                        for (l, ql) in q.iter_mut().enumerate() {
                            *ql += delta * w[(l, k)];
                        }
                        beta[(k, j)] = new;
                        max_change = max_change.max(delta.abs() * w[(k, k)]);
                    }
                }
                if max_change < inner_tol {
                    break;
                }
            }

            for k in 0..p {
                if k != j {
                    w[(k, j)] = q[k];
                    w[(j, k)] = q[k];
                }
            }
        }

        if let Some(omega) = recover_precision(&w, &beta) {
            if let Some(inv) = omega.clone().try_inverse() {
                residual = kkt_residual(&big_s, &omega, &inv, lambda);
                if residual <= tol {
                    return Ok(SymMatrix::from_matrix(omega));
                }
            }
        }
    }

    Err(RobustError::GlassoDidNotConverge { residual })
}
