//! Robust location-shape standardization: spatial median, spatial-sign
//! covariance, a sign-based graphical-lasso precision initializer, and the
//! iterated banded Hettmansperger-Randles (HR) update.
//!
//! The full pipeline in [`hr_fit`] is
//!
//! 1. spatial median of the raw observations;
//! 2. spatial-sign covariance around that center;
//! 3. graphical lasso on the scaled sign covariance, inverted and
//!    trace-normalized into the initial shape;
//! 4. fixed-point sweeps that alternate a sign-based location update with a
//!    banded, ridge-corrected, trace-normalized shape update, until the
//!    location step and the relative Frobenius shape step both fall below the
//!    configured tolerance.
//!
//! All sign operations are scale-free, so the fitted shape is invariant under
//! global rescaling of the data and the location is equivariant under
//! translation.

mod glasso;
mod median;

pub use glasso::graphical_lasso;
pub use median::spatial_median;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError, SymMatrix};
use crate::DataMatrix;

/// Eigenvalue floor used by the positive-definite projection inside the HR
/// loop.
const PD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RobustError {
    #[error("Weiszfeld iteration did not converge")]
    MedianDidNotConverge { best: DVector<f64> },
    #[error("every observation coincides with the center; sign covariance undefined")]
    AllRowsDegenerate,
    #[error("graphical lasso did not converge (KKT residual {residual:e})")]
    GlassoDidNotConverge { residual: f64 },
    #[error("graphical lasso input has nonpositive shifted diagonal")]
    GlassoNonPd,
    #[error("observation {row} has zero residual norm during HR iteration")]
    DegenerateResidual { row: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Tuning for the HR plug-in fit. Defaults follow the numerical settings the
/// method is calibrated with: lambda = 0.08, h = 3, ridge = 1e-4, tolerance
/// 1e-4 and at most 30 HR sweeps.
#[derive(Debug, Clone)]
pub struct HrConfig {
    /// Graphical-lasso penalty applied to every entry of the precision matrix.
    pub lambda: f64,
    /// Bandwidth of the banding operator in the shape update.
    pub band_h: usize,
    /// Ridge added before the positive-definite projection.
    pub ridge: f64,
    /// Stopping tolerance on max(location step, relative shape step).
    pub tol: f64,
    /// Maximum number of HR sweeps.
    pub max_iter: usize,
    pub weiszfeld_tol: f64,
    pub weiszfeld_max_iter: usize,
    pub glasso_tol: f64,
    pub glasso_max_iter: usize,
}

impl Default for HrConfig {
    fn default() -> Self {
        Self {
            lambda: 0.08,
            band_h: 3,
            ridge: 1e-4,
            tol: 1e-4,
            max_iter: 30,
            weiszfeld_tol: 1e-7,
            weiszfeld_max_iter: 500,
            glasso_tol: 1e-6,
            glasso_max_iter: 200,
        }
    }
}

/// Fitted HR location and shape with convergence diagnostics. The shape is
/// positive definite with trace equal to the dimension.
#[derive(Debug, Clone)]
pub struct HrEstimate {
    pub mu_hat: DVector<f64>,
    pub sigma_hat: SymMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Last value of max(location step, relative shape step).
    pub final_step: f64,
}

/// Spatial-sign covariance around `center`: the average of the outer products
/// of the unit residual directions. Rows that collapse onto the center at
/// floating-point resolution are dropped; the average runs over kept rows, so
/// the trace is 1.
pub fn sign_covariance(
    x: &DataMatrix,
    center: &DVector<f64>,
) -> Result<SymMatrix, RobustError> {
    let n = x.nrows();
    let p = x.ncols();
    assert_eq!(center.len(), p, "center dimension mismatch");

    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let d = (x.row(i).transpose() - center).norm();
        norms.push(d);
    }
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let scale = sorted[n / 2];

    if scale <= 1e-12 * (1.0 + center.norm()) {
        return Err(RobustError::AllRowsDegenerate);
    }
    let drop_below = 1e-12 * scale;

    let mut acc = DMatrix::<f64>::zeros(p, p);
    let mut kept = 0usize;
    for i in 0..n {
        if norms[i] < drop_below {
            continue;
        }
        let u = (x.row(i).transpose() - center) / norms[i];
        acc.ger(1.0, &u, &u, 1.0);
        kept += 1;
    }
    if kept == 0 {
        return Err(RobustError::AllRowsDegenerate);
    }
    acc /= kept as f64;
    Ok(SymMatrix::from_matrix(acc))
}

/// HR plug-in fit: spatial median, sign-based graphical-lasso initializer,
/// then the banded location-shape fixed point.
pub fn hr_fit(x: &DataMatrix, cfg: &HrConfig) -> Result<HrEstimate, RobustError> {
    let n = x.nrows();
    let p = x.ncols();
    assert!(n >= 2 && p >= 1, "hr_fit requires n >= 2 and p >= 1");

    let mu0 = spatial_median(x, cfg.weiszfeld_tol, cfg.weiszfeld_max_iter)?;
    let s0 = sign_covariance(x, &mu0)?;
    let omega0 = graphical_lasso(&s0, cfg.lambda, cfg.glasso_tol, cfg.glasso_max_iter)?;
    let sigma0 = linalg::trace_normalize(&linalg::matrix_power(
        &omega0,
        linalg::MatrixPower::Inverse,
    )?)?;

    let mut mu = mu0;
    let mut sigma_eig = linalg::sym_eig(&sigma0)?;
    let mut sigma = sigma0;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut final_step = f64::INFINITY;
    let pf = p as f64;

    for _t in 0..cfg.max_iter {
        let root = sigma_eig.map_rebuild(|l| l.sqrt());
        let inv_root = sigma_eig.map_rebuild(|l| 1.0 / l.sqrt());

        // Residuals and unit directions under the current standardization.
        let mut centered = x.clone();
        for i in 0..n {
            for j in 0..p {
                centered[(i, j)] -= mu[j];
            }
        }
        let eps = &centered * inv_root.as_matrix();

        let mut mean_dir = DVector::<f64>::zeros(p);
        let mut mean_inv_norm = 0.0;
        let mut unit = eps.clone();
        for i in 0..n {
            let norm = eps.row(i).norm();
            if norm == 0.0 {
                return Err(RobustError::DegenerateResidual { row: i });
            }
            let inv = 1.0 / norm;
            unit.row_mut(i).scale_mut(inv);
            mean_inv_norm += inv;
            mean_dir += unit.row(i).transpose();
        }
        mean_dir /= n as f64;
        mean_inv_norm /= n as f64;

        // Location fixed point: mu + Sigma^{1/2} * mean(u) / mean(1/||eps||).
        let mu_next = &mu + root.as_matrix() * (&mean_dir / mean_inv_norm);

        // Banded shape update with ridge, PD projection, trace normalization.
        let s_eps = SymMatrix::from_matrix(unit.transpose() * &unit / n as f64);
        let banded = linalg::band(&s_eps, cfg.band_h);
        let mut tilde = root.as_matrix() * banded.as_matrix() * root.as_matrix() * pf;
        for j in 0..p {
            tilde[(j, j)] += cfg.ridge;
        }
        let next_eig = linalg::sym_eig(&SymMatrix::from_matrix(tilde))?;
        let floored_trace: f64 = next_eig.eigenvalues.iter().map(|l| l.max(PD_FLOOR)).sum();
        let scale = pf / floored_trace;
        let sigma_next_eig = linalg::SpectralDecomposition {
            eigenvalues: next_eig.eigenvalues.map(|l| l.max(PD_FLOOR) * scale),
            eigenvectors: next_eig.eigenvectors,
        };
        let sigma_next = sigma_next_eig.map_rebuild(|l| l);

        let loc_step = (&mu_next - &mu).norm();
        let shape_step = (sigma_next.as_matrix() - sigma.as_matrix()).norm()
            / sigma.frobenius_norm().max(1.0);
        final_step = loc_step.max(shape_step);

        mu = mu_next;
        sigma = sigma_next;
        sigma_eig = sigma_next_eig;
        iterations += 1;

        if final_step <= cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(HrEstimate { mu_hat: mu, sigma_hat: sigma, iterations, converged, final_step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn sign_covariance_axis_points() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let s = sign_covariance(&x, &DVector::zeros(2)).unwrap();
        assert!((s.entry(0, 0) - 0.5).abs() < 1e-14);
        assert!((s.entry(1, 1) - 0.5).abs() < 1e-14);
        assert!(s.entry(0, 1).abs() < 1e-14);
    }

    #[test]
    fn sign_covariance_matches_brute_force() {
        let x = DMatrix::from_row_slice(3, 2, &[0.3, -1.2, 1.1, 0.4, -0.7, 0.9]);
        let center = DVector::from_row_slice(&[0.1, 0.0]);
        let s = sign_covariance(&x, &center).unwrap();

        let mut brute = DMatrix::<f64>::zeros(2, 2);
        for i in 0..3 {
            let d = x.row(i).transpose() - &center;
            let u = &d / d.norm();
            brute += &u * u.transpose();
        }
        brute /= 3.0;
        assert!((s.as_matrix() - brute).amax() < 1e-14);
        assert!((s.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_covariance_trace_is_one() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(20, 6, |_, _| rng.gen_range(-1.0..1.0));
        let s = sign_covariance(&x, &DVector::zeros(6)).unwrap();
        assert!((s.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_covariance_all_rows_degenerate() {
        let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let center = DVector::from_row_slice(&[0.5, 0.5]);
        assert!(matches!(
            sign_covariance(&x, &center),
            Err(RobustError::AllRowsDegenerate)
        ));
    }

    #[test]
    fn hr_fit_identical_rows_errors_cleanly() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert!(hr_fit(&x, &HrConfig::default()).is_err());
    }
}
