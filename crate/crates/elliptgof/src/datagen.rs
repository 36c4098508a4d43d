//! Synthetic elliptical data: five radial laws, three shape structures, and
//! radial-directional alternatives that couple the radius to an active set of
//! direction coordinates.
//!
//! A draw starts from a baseline pair (R0, U0) with U0 uniform on the sphere
//! and R0 independent of it. The alternative multiplies the radius by
//! exp(delta * s_A(U0)) with s_A(u) = |A|^{-1/2} sum_{j in A} u_j, then maps
//! through the shape root: x = mu + Sigma^{1/2} R1 U0. The (R0, U0) stream
//! depends only on the RNG, never on delta or the active set, so power curves
//! across delta are coupled when seeds match.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma};
use thiserror::Error;

use crate::calibrate::sample_uniform_sphere;
use crate::linalg::{self, LinalgError, SymMatrix};
use crate::DataMatrix;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("constructed precision matrix is not positive definite")]
    NonPd,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Baseline radial law. The Gaussian, Kotz and bounded laws satisfy
/// E R^2 = p; the Student t and mixture laws have heavier second moments.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialLaw {
    /// R = ||Z||, Z ~ N(0, I_p).
    Gaussian,
    /// R = ||Z|| sqrt(nu / G), G ~ chi^2_nu.
    StudentT { nu: f64 },
    /// R = S ||Z|| with P(S = s1) = p1, P(S = s2) = p2.
    MixtureNormal { p1: f64, s1: f64, p2: f64, s2: f64 },
    /// Power-exponential: R = c (2G)^{1/(2 beta)}, G ~ Gamma(p/(2 beta), 1),
    /// with c chosen so E R^2 = p.
    Kotz { beta: f64 },
    /// Bounded support: R^2 = 2 p B, B ~ Beta(p/2, p/2).
    BoundedBeta,
}

impl RadialLaw {
    /// The scale-mixture used in the numerical studies: scale 1 with
    /// probability 0.9, scale 3 with probability 0.1.
    pub fn default_mixture() -> Self {
        RadialLaw::MixtureNormal { p1: 0.9, s1: 1.0, p2: 0.1, s2: 3.0 }
    }

    /// E R^2 / p for each law; used by moment sanity checks.
    pub fn second_moment_ratio(&self) -> f64 {
        match self {
            RadialLaw::Gaussian | RadialLaw::Kotz { .. } | RadialLaw::BoundedBeta => 1.0,
            RadialLaw::StudentT { nu } => nu / (nu - 2.0),
            RadialLaw::MixtureNormal { p1, s1, p2, s2 } => p1 * s1 * s1 + p2 * s2 * s2,
        }
    }
}

impl fmt::Display for RadialLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialLaw::Gaussian => write!(f, "gaussian"),
            RadialLaw::StudentT { nu } => write!(f, "student_t({nu})"),
            RadialLaw::MixtureNormal { p1, s1, p2, s2 } => {
                write!(f, "mixture({p1}:{s1};{p2}:{s2})")
            }
            RadialLaw::Kotz { beta } => write!(f, "kotz({beta})"),
            RadialLaw::BoundedBeta => write!(f, "bounded_beta"),
        }
    }
}

/// One baseline radius.
pub fn sample_radius<R: Rng + ?Sized>(law: &RadialLaw, p: usize, rng: &mut R) -> f64 {
    assert!(p >= 1);
    let pf = p as f64;
    match law {
        RadialLaw::Gaussian => chi_norm(pf, rng),
        RadialLaw::StudentT { nu } => {
            debug_assert!(*nu > 0.0);
            let r = chi_norm(pf, rng);
            let g = ChiSquared::new(*nu).expect("valid chi-square dof").sample(rng);
            r * (nu / g).sqrt()
        }
        RadialLaw::MixtureNormal { p1, s1, p2, s2 } => {
            debug_assert!((p1 + p2 - 1.0).abs() < 1e-12);
            let r = chi_norm(pf, rng);
            let u: f64 = rng.gen();
            if u < *p1 {
                s1 * r
            } else {
                s2 * r
            }
        }
        RadialLaw::Kotz { beta } => {
            debug_assert!(*beta > 0.0);
            let a = pf / (2.0 * beta);
            let g = Gamma::new(a, 1.0).expect("valid gamma shape").sample(rng);
            let raw = ((2.0 * g).ln() / (2.0 * beta)).exp();
            // c^2 = p / (2^{1/beta} Gamma(a + 1/beta) / Gamma(a)), in log space.
            let ln_c = 0.5
                * (pf.ln()
                    - std::f64::consts::LN_2 / beta
                    - (statrs::function::gamma::ln_gamma(a + 1.0 / beta)
                        - statrs::function::gamma::ln_gamma(a)));
            ln_c.exp() * raw
        }
        RadialLaw::BoundedBeta => {
            let b = Beta::new(pf / 2.0, pf / 2.0).expect("valid beta parameters").sample(rng);
            (2.0 * pf * b).sqrt()
        }
    }
}

/// sqrt of a chi-square draw with `pf` degrees of freedom, i.e. ||Z||.
fn chi_norm<R: Rng + ?Sized>(pf: f64, rng: &mut R) -> f64 {
    ChiSquared::new(pf).expect("valid chi-square dof").sample(rng).sqrt()
}

/// Shape structure of the outer scatter matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeStructure {
    Identity,
    /// Entries rho^{|j-k|}.
    Ar { rho: f64 },
    /// Inverse of a tridiagonal precision matrix with unit diagonal and 0.3
    /// on the first off-diagonals.
    SparsePrecision,
}

impl ShapeStructure {
    pub fn ar_default() -> Self {
        ShapeStructure::Ar { rho: 0.3 }
    }
}

impl fmt::Display for ShapeStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeStructure::Identity => write!(f, "identity"),
            ShapeStructure::Ar { rho } => write!(f, "ar({rho})"),
            ShapeStructure::SparsePrecision => write!(f, "sparse_precision"),
        }
    }
}

const SP_OFF_DIAGONAL: f64 = 0.3;

/// Build the shape matrix, trace-normalized to p and verified PD.
pub fn make_shape(structure: &ShapeStructure, p: usize) -> Result<SymMatrix, DatagenError> {
    assert!(p >= 1);
    let shape = match structure {
        ShapeStructure::Identity => SymMatrix::identity(p),
        ShapeStructure::Ar { rho } => {
            debug_assert!(rho.abs() < 1.0);
            SymMatrix::from_fn(p, |j, k| rho.powi(j.abs_diff(k) as i32))
        }
        ShapeStructure::SparsePrecision => {
            let omega = SymMatrix::from_fn(p, |j, k| {
                if j == k {
                    1.0
                } else if j.abs_diff(k) == 1 {
                    SP_OFF_DIAGONAL
                } else {
                    0.0
                }
            });
            match linalg::matrix_power(&omega, linalg::MatrixPower::Inverse) {
                Ok(sigma) => sigma,
                Err(LinalgError::SingularMatrix { .. }) => return Err(DatagenError::NonPd),
                Err(e) => return Err(e.into()),
            }
        }
    };
    let normalized = linalg::trace_normalize(&shape)?;
    let eig = linalg::sym_eig(&normalized)?;
    if eig.eigenvalues[p - 1] <= 0.0 {
        return Err(DatagenError::NonPd);
    }
    Ok(normalized)
}

/// Which coordinates the alternative couples to the radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveSet {
    /// A = {1}.
    Sparse,
    /// A = {1, ..., floor(0.2 p)}.
    Frac20,
    /// A = {1, ..., p}.
    All,
}

impl ActiveSet {
    /// 0-based coordinate indices; never empty.
    pub fn resolve(&self, p: usize) -> Vec<usize> {
        match self {
            ActiveSet::Sparse => vec![0],
            ActiveSet::Frac20 => (0..(p / 5).max(1)).collect(),
            ActiveSet::All => (0..p).collect(),
        }
    }
}

impl fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActiveSet::Sparse => write!(f, "sparse"),
            ActiveSet::Frac20 => write!(f, "frac20"),
            ActiveSet::All => write!(f, "all"),
        }
    }
}

/// Alternative specification; delta = 0 reproduces the null exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternativeSpec {
    pub active_set: ActiveSet,
    pub delta: f64,
}

impl AlternativeSpec {
    pub fn null() -> Self {
        Self { active_set: ActiveSet::All, delta: 0.0 }
    }
}

/// Generate n observations from the design; computes the shape root
/// internally. See [`generate_with_root`] for the hoisted-root variant used
/// in replicated simulations.
pub fn generate<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    law: &RadialLaw,
    shape: &ShapeStructure,
    alt: &AlternativeSpec,
    mu: &DVector<f64>,
    rng: &mut R,
) -> Result<DataMatrix, DatagenError> {
    let root = match shape {
        ShapeStructure::Identity => None,
        _ => Some(linalg::matrix_power(&make_shape(shape, p)?, linalg::MatrixPower::Sqrt)?),
    };
    Ok(generate_with_root(n, p, law, root.as_ref(), alt, mu, rng))
}

/// Generate with a precomputed shape root (None means identity). The RNG
/// consumption per observation is one radius draw followed by one direction
/// draw, independent of `alt`.
pub fn generate_with_root<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    law: &RadialLaw,
    shape_root: Option<&SymMatrix>,
    alt: &AlternativeSpec,
    mu: &DVector<f64>,
    rng: &mut R,
) -> DataMatrix {
    assert!(n >= 1 && p >= 1);
    assert_eq!(mu.len(), p);
    if let Some(root) = shape_root {
        assert_eq!(root.dim(), p);
    }
    let active = alt.active_set.resolve(p);
    let inv_sqrt_a = 1.0 / (active.len() as f64).sqrt();

    let mut x = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        let r0 = sample_radius(law, p, rng);
        let u0 = sample_uniform_sphere(p, rng);
        let s_a: f64 = active.iter().map(|&j| u0[j]).sum::<f64>() * inv_sqrt_a;
        let r1 = r0 * (alt.delta * s_a).exp();
        let y = u0 * r1;
        let row = match shape_root {
            Some(root) => root.as_matrix() * y + mu,
            None => y + mu,
        };
        x.row_mut(i).tr_copy_from(&row);
    }
    x
}
