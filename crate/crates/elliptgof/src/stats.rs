//! Radial-directional correlation statistics with analytic calibration.
//!
//! After standardization by a location vector and the inverse square root of
//! a shape matrix, each observation splits into a radius R_i, a log-radius
//! L_i = log R_i and a unit direction U_i. Under an elliptical model the
//! radius is independent of the direction, so every correlation
//! g_j = corr(L_i, U_ij) is centered at zero. Three statistics summarize the
//! empirical correlation vector:
//!
//! * sum:    T_sum = n ||g||_2^2, normal calibration (T_sum - p)/sqrt(2p);
//! * max:    T_max = n ||g||_inf^2 - 2 log p + log log p, Gumbel calibration
//!           F_G(x) = exp(-pi^{-1/2} e^{-x/2});
//! * Cauchy: the average of the two tan-transformed p-values, which is a
//!           standard-Cauchy pivot when the components are independent.
//!
//! Variance denominators use 1/n throughout. Logarithms are natural.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, LinalgError, SymMatrix};
use crate::robust::{hr_fit, HrConfig, HrEstimate, RobustError};
use crate::DataMatrix;

/// P-value clamp applied before the tangent in the Cauchy combination; the
/// transform diverges at exactly 0 and 1.
pub const P_CLAMP: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("observation {row} coincides with the location; radius is zero")]
    ZeroRadius { row: usize },
    #[error("log-radii are degenerate (zero variance)")]
    DegenerateRadius,
    #[error("direction coordinate {coord} is degenerate (zero variance)")]
    DegenerateCoordinate { coord: usize },
    #[error("dimension {p} too small; the max statistic needs p >= 3")]
    InvalidDimension { p: usize },
    #[error("need at least 3 observations, got {n}")]
    TooFewObservations { n: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Robust(#[from] RobustError),
}

/// Per-observation radius, log-radius and unit direction after affine
/// standardization.
#[derive(Debug, Clone)]
pub struct StandardizedSample {
    radii: Vec<f64>,
    log_radii: Vec<f64>,
    directions: DMatrix<f64>,
}

impl StandardizedSample {
    /// Assemble from radii and unit-norm direction rows; the log-radii are
    /// derived so the two representations never drift apart.
    pub fn from_parts(radii: Vec<f64>, directions: DMatrix<f64>) -> Result<Self, StatsError> {
        assert_eq!(radii.len(), directions.nrows(), "radius/direction mismatch");
        for (i, &r) in radii.iter().enumerate() {
            if !(r > 0.0) {
                return Err(StatsError::ZeroRadius { row: i });
            }
        }
        debug_assert!(
            (0..directions.nrows()).all(|i| (directions.row(i).norm() - 1.0).abs() < 1e-10),
            "direction rows must have unit norm"
        );
        let log_radii = radii.iter().map(|r| r.ln()).collect();
        Ok(Self { radii, log_radii, directions })
    }

    pub fn n(&self) -> usize {
        self.radii.len()
    }

    pub fn p(&self) -> usize {
        self.directions.ncols()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn log_radii(&self) -> &[f64] {
        &self.log_radii
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.directions
    }
}

/// Standardize rows of `x` as Y_i = sigma_inv_sqrt * (x_i - mu) and split
/// into radii and directions.
pub fn standardize(
    x: &DataMatrix,
    mu: &DVector<f64>,
    sigma_inv_sqrt: &SymMatrix,
) -> Result<StandardizedSample, StatsError> {
    let n = x.nrows();
    let p = x.ncols();
    assert_eq!(mu.len(), p, "location dimension mismatch");
    assert_eq!(sigma_inv_sqrt.dim(), p, "shape dimension mismatch");

    let mut centered = x.clone();
    for i in 0..n {
        for j in 0..p {
            centered[(i, j)] -= mu[j];
        }
    }
    // sigma_inv_sqrt is symmetric, so row i of the product is S (x_i - mu).
    let mut y = centered * sigma_inv_sqrt.as_matrix();

    // Row norms accumulate the squares in sorted order, which makes the
    // radii exactly invariant under coordinate permutations.
    let mut radii = Vec::with_capacity(n);
    let mut squares = vec![0.0_f64; p];
    for i in 0..n {
        for (j, sq) in squares.iter_mut().enumerate() {
            let v = y[(i, j)];
            *sq = v * v;
        }
        squares.sort_by(f64::total_cmp);
        let r = squares.iter().sum::<f64>().sqrt();
        if r == 0.0 {
            return Err(StatsError::ZeroRadius { row: i });
        }
        y.row_mut(i).scale_mut(1.0 / r);
        radii.push(r);
    }
    let log_radii = radii.iter().map(|r| r.ln()).collect();
    Ok(StandardizedSample { radii, log_radii, directions: y })
}

/// Coordinatewise correlations between the log-radius and each direction
/// coordinate, with 1/n variance denominators.
#[derive(Debug, Clone)]
pub struct CorrelationVector {
    g: Vec<f64>,
    n: usize,
}

impl CorrelationVector {
    pub fn coordinates(&self) -> &[f64] {
        &self.g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.g.len()
    }
}

pub fn correlation_vector(s: &StandardizedSample) -> Result<CorrelationVector, StatsError> {
    correlation_from_parts(&s.log_radii, &s.directions)
}

/// Shared core for the observed sample, bootstrap replicates and permutation
/// replicates: correlations of an arbitrary log-radius vector against fixed
/// direction rows.
pub(crate) fn correlation_from_parts(
    log_radii: &[f64],
    directions: &DMatrix<f64>,
) -> Result<CorrelationVector, StatsError> {
    let n = log_radii.len();
    let p = directions.ncols();
    assert_eq!(directions.nrows(), n, "log-radius/direction mismatch");

    let nf = n as f64;
    let lbar = log_radii.iter().sum::<f64>() / nf;
    let centered_l: Vec<f64> = log_radii.iter().map(|l| l - lbar).collect();
    let var_l = centered_l.iter().map(|c| c * c).sum::<f64>() / nf;
    let sd_l = var_l.sqrt();
    if sd_l <= 1e-12 * (1.0 + lbar.abs()) {
        return Err(StatsError::DegenerateRadius);
    }

    let mut g = Vec::with_capacity(p);
    for j in 0..p {
        let col = directions.column(j);
        let ubar = col.sum() / nf;
        let mut cov = 0.0;
        let mut var_u = 0.0;
        for i in 0..n {
            let du = col[i] - ubar;
            cov += centered_l[i] * du;
            var_u += du * du;
        }
        cov /= nf;
        var_u /= nf;
        let sd_u = var_u.sqrt();
        if sd_u <= 1e-12 {
            return Err(StatsError::DegenerateCoordinate { coord: j + 1 });
        }
        g.push(cov / (sd_l * sd_u));
    }
    Ok(CorrelationVector { g, n })
}

/// Sum statistic n ||g||_2^2. The squares are accumulated in sorted order,
/// which makes the value an exactly symmetric function of the coordinates.
pub fn t_sum(g: &CorrelationVector) -> f64 {
    let mut squares: Vec<f64> = g.g.iter().map(|v| v * v).collect();
    squares.sort_by(f64::total_cmp);
    g.n as f64 * squares.iter().sum::<f64>()
}

/// Max statistic n ||g||_inf^2 - 2 log p + log log p.
pub fn t_max(g: &CorrelationVector, p: usize) -> Result<f64, StatsError> {
    if p < 3 {
        return Err(StatsError::InvalidDimension { p });
    }
    let max_sq = g.g.iter().fold(0.0_f64, |a, v| a.max(v * v));
    let pf = p as f64;
    Ok(g.n as f64 * max_sq - 2.0 * pf.ln() + pf.ln().ln())
}

/// Upper tail of the standard normal, evaluated directly through erfc to
/// avoid 1 - Phi cancellation.
pub fn normal_upper_tail(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

/// Gumbel reference law of the max statistic: F_G(x) = exp(-pi^{-1/2} e^{-x/2}).
pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x / 2.0).exp() / std::f64::consts::PI.sqrt()).exp()
}

/// Analytic p-values for the pair (T_sum, T_max) at dimension p.
pub fn p_values(t_sum: f64, t_max: f64, p: usize) -> (f64, f64) {
    let pf = p as f64;
    let p_sum = normal_upper_tail((t_sum - pf) / (2.0 * pf).sqrt());
    // 1 - F_G via expm1 keeps precision for large t_max.
    let p_max = -(-(-t_max / 2.0).exp() / std::f64::consts::PI.sqrt()).exp_m1();
    (p_sum, p_max)
}

/// Cauchy combination of two p-values: average of the tan transforms and the
/// arctan inverse. Inputs are clamped away from 0 and 1 before the tangent.
pub fn cauchy_combine(p_sum: f64, p_max: f64) -> (f64, f64) {
    let clamp = |v: f64| v.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let pi = std::f64::consts::PI;
    let t_cau =
        0.5 * (pi * (0.5 - clamp(p_sum))).tan() + 0.5 * (pi * (0.5 - clamp(p_max))).tan();
    let p_cau = 0.5 - t_cau.atan() / pi;
    (t_cau, p_cau)
}

/// How the standardization pair (mu, Sigma) is obtained.
#[derive(Debug, Clone)]
pub enum TestMode {
    /// Known location and shape.
    Oracle { mu: DVector<f64>, sigma: SymMatrix },
    /// HR plug-in estimation.
    Hr(HrConfig),
}

/// Full test outcome: the three statistics, their p-values and the strongest
/// coordinate-level associations (1-based coordinate, n g_j^2), capped at 10
/// entries with ties broken by the lower coordinate.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub t_sum: f64,
    pub t_max: f64,
    pub p_sum: f64,
    pub p_max: f64,
    pub t_cau: f64,
    pub p_cau: f64,
    pub top_coords: Vec<(usize, f64)>,
}

/// Standardized sample, report, and the HR fit when one was run.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub sample: StandardizedSample,
    pub report: TestReport,
    pub hr: Option<HrEstimate>,
}

const TOP_COORDS_CAP: usize = 10;

/// Build a report from an already standardized sample.
pub fn report_from_sample(s: &StandardizedSample) -> Result<TestReport, StatsError> {
    if s.n() < 3 {
        return Err(StatsError::TooFewObservations { n: s.n() });
    }
    let p = s.p();
    let g = correlation_vector(s)?;
    let ts = t_sum(&g);
    let tm = t_max(&g, p)?;
    let (ps, pm) = p_values(ts, tm, p);
    let (tc, pc) = cauchy_combine(ps, pm);

    let nf = g.n as f64;
    let mut scored: Vec<(usize, f64)> =
        g.g.iter().enumerate().map(|(j, v)| (j + 1, nf * v * v)).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(TOP_COORDS_CAP);

    Ok(TestReport { t_sum: ts, t_max: tm, p_sum: ps, p_max: pm, t_cau: tc, p_cau: pc, top_coords: scored })
}

/// End-to-end test: standardize (oracle or HR), correlate, calibrate.
pub fn run_test(x: &DataMatrix, mode: &TestMode) -> Result<TestReport, StatsError> {
    run_test_full(x, mode).map(|o| o.report)
}

/// Like [`run_test`] but keeps the standardized sample (for bootstrap and
/// permutation calibration) and the HR diagnostics.
pub fn run_test_full(x: &DataMatrix, mode: &TestMode) -> Result<TestOutcome, StatsError> {
    let (sample, hr) = match mode {
        TestMode::Oracle { mu, sigma } => {
            let inv_root = linalg::matrix_power(sigma, linalg::MatrixPower::InvSqrt)?;
            (standardize(x, mu, &inv_root)?, None)
        }
        TestMode::Hr(cfg) => {
            let fit = hr_fit(x, cfg)?;
            let inv_root =
                linalg::matrix_power(&fit.sigma_hat, linalg::MatrixPower::InvSqrt)?;
            (standardize(x, &fit.mu_hat, &inv_root)?, Some(fit))
        }
    };
    let report = report_from_sample(&sample)?;
    Ok(TestOutcome { sample, report, hr })
}
