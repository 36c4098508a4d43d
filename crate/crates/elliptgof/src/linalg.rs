//! Dense symmetric linear algebra kernels: eigendecomposition-backed matrix
//! powers, positive-definite projection, banding and trace normalization.
//!
//! Everything here goes through a full symmetric eigendecomposition rather
//! than Cholesky or Newton iterations; dimensions stay in the hundreds to low
//! thousands, where correctness and simplicity dominate.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative eigenvalue floor for singularity detection in negative powers.
const EIG_FLOOR_REL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("symmetric eigensolver failed to converge")]
    ConvergenceFailure,
    #[error("matrix is numerically singular (eigenvalue {eigenvalue:e} below floor {floor:e})")]
    SingularMatrix { eigenvalue: f64, floor: f64 },
    #[error("matrix trace {trace:e} is not positive")]
    NonPositiveTrace { trace: f64 },
}

/// Symmetric p x p matrix. Construction symmetrizes as (M + M')/2, so small
/// asymmetries from floating-point products are removed up front and
/// `entry(j, k) == entry(k, j)` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    mat: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrize an arbitrary square matrix.
    ///
    /// Panics if the matrix is not square or has zero dimension.
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "SymMatrix requires a square matrix");
        assert!(m.nrows() >= 1, "SymMatrix requires dim >= 1");
        let sym = (&m + m.transpose()) * 0.5;
        Self { mat: sym }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self::from_matrix(DMatrix::from_fn(dim, dim, f))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { mat: DMatrix::identity(dim, dim) }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        Self { mat: DMatrix::from_diagonal(&DVector::from_row_slice(values)) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.mat[(j, k)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.mat.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
    }

    fn is_finite(&self) -> bool {
        self.mat.iter().all(|v| v.is_finite())
    }
}

/// Eigenvalues in nonincreasing order with matching orthonormal eigenvector
/// columns, so that `V diag(lambda) V'` reconstructs the input.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    /// Rebuild `V diag(f(lambda)) V'` as a symmetric matrix.
    pub fn map_rebuild(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let p = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..p {
            let lj = f(self.eigenvalues[j]);
            scaled.column_mut(j).scale_mut(lj);
        }
        SymMatrix::from_matrix(&scaled * self.eigenvectors.transpose())
    }
}

/// Full symmetric eigendecomposition, eigenvalues sorted nonincreasing.
pub fn sym_eig(m: &SymMatrix) -> Result<SpectralDecomposition, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let p = m.dim();
    let max_iter = 60 * p.max(16);
    let eig = m
        .mat
        .clone()
        .try_symmetric_eigen(f64::EPSILON, max_iter)
        .ok_or(LinalgError::ConvergenceFailure)?;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// Matrix powers used by the standardization pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixPower {
    /// m^{1/2}
    Sqrt,
    /// m^{-1/2}
    InvSqrt,
    /// m^{-1}
    Inverse,
}

impl MatrixPower {
    pub fn exponent(self) -> f64 {
        match self {
            MatrixPower::Sqrt => 0.5,
            MatrixPower::InvSqrt => -0.5,
            MatrixPower::Inverse => -1.0,
        }
    }
}

/// Spectral matrix power `V diag(lambda^e) V'`.
///
/// Negative exponents reject eigenvalues at or below `1e-10 * lambda_max`.
pub fn matrix_power(m: &SymMatrix, power: MatrixPower) -> Result<SymMatrix, LinalgError> {
    let eig = sym_eig(m)?;
    let lambda_max = eig.eigenvalues[0];
    match power {
        MatrixPower::Sqrt => Ok(eig.map_rebuild(|l| l.max(0.0).sqrt())),
        MatrixPower::InvSqrt | MatrixPower::Inverse => {
            let floor = EIG_FLOOR_REL * lambda_max.max(0.0);
            let lambda_min = eig.eigenvalues[m.dim() - 1];
            if lambda_min <= floor {
                return Err(LinalgError::SingularMatrix { eigenvalue: lambda_min, floor });
            }
            Ok(eig.map_rebuild(|l| l.powf(power.exponent())))
        }
    }
}

/// Both m^{1/2} and m^{-1/2} from a single decomposition.
pub fn sqrt_and_inv_sqrt(m: &SymMatrix) -> Result<(SymMatrix, SymMatrix), LinalgError> {
    let eig = sym_eig(m)?;
    let lambda_max = eig.eigenvalues[0];
    let floor = EIG_FLOOR_REL * lambda_max.max(0.0);
    let lambda_min = eig.eigenvalues[m.dim() - 1];
    if lambda_min <= floor {
        return Err(LinalgError::SingularMatrix { eigenvalue: lambda_min, floor });
    }
    let root = eig.map_rebuild(f64::sqrt);
    let inv_root = eig.map_rebuild(|l| 1.0 / l.sqrt());
    Ok((root, inv_root))
}

/// Replace every eigenvalue below `floor` by `floor`, keeping eigenvectors.
pub fn pd_project(m: &SymMatrix, floor: f64) -> Result<SymMatrix, LinalgError> {
    let eig = sym_eig(m)?;
    if eig.eigenvalues[m.dim() - 1] >= floor {
        return Ok(m.clone());
    }
    Ok(eig.map_rebuild(|l| l.max(floor)))
}

/// Zero entries more than `h` positions off the diagonal; idempotent.
pub fn band(m: &SymMatrix, h: usize) -> SymMatrix {
    let p = m.dim();
    let mut out = m.mat.clone();
    for j in 0..p {
        for k in 0..p {
            if j.abs_diff(k) > h {
                out[(j, k)] = 0.0;
            }
        }
    }
    SymMatrix { mat: out }
}

/// Rescale so the trace equals the dimension: `p * m / tr(m)`.
pub fn trace_normalize(m: &SymMatrix) -> Result<SymMatrix, LinalgError> {
    let tr = m.trace();
    if !(tr > 0.0) {
        return Err(LinalgError::NonPositiveTrace { trace: tr });
    }
    let p = m.dim() as f64;
    Ok(SymMatrix { mat: &m.mat * (p / tr) })
}
