//! Monte Carlo harness for empirical size and power: replicated designs,
//! rejection-rate aggregation, and table-ready output.
//!
//! Replication r of a cell draws its RNG stream from a key built out of
//! (master seed, n, p, radial law, shape, r). The key deliberately excludes
//! the alternative, the mode and the calibration scheme, so cells that differ
//! only in delta share their baseline (R0, U0) draws and power curves are
//! coupled across signal strengths. Because every stream is absolute, results
//! are bit-identical at any parallelism level and in any execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::calibrate::{bootstrap_calibrate, CalibrationError};
use crate::datagen::{
    generate_with_root, make_shape, AlternativeSpec, DatagenError, RadialLaw, ShapeStructure,
};
use crate::linalg::{self, SymMatrix};
use crate::robust::HrConfig;
use crate::seeding::{derive_seed, fnv1a};
use crate::stats;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{failures} of {reps} replications failed (threshold 1%): first error: {first}")]
    TooManyFailures { failures: usize, reps: usize, first: String },
    #[error("empty design grid")]
    EmptyGrid,
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// How each replication is standardized.
#[derive(Debug, Clone)]
pub enum SimMode {
    /// Use the true location (zero) and the design shape matrix.
    Oracle,
    /// HR plug-in fit on every replication.
    Hr(HrConfig),
}

impl SimMode {
    fn label(&self) -> &'static str {
        match self {
            SimMode::Oracle => "oracle",
            SimMode::Hr(_) => "hr",
        }
    }
}

/// Which p-values drive the rejection decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationScheme {
    Analytic,
    /// Bootstrap mean-variance correction with the given replicate count.
    Bootstrap(usize),
}

impl CalibrationScheme {
    fn label(&self) -> String {
        match self {
            CalibrationScheme::Analytic => "analytic".to_string(),
            CalibrationScheme::Bootstrap(b) => format!("bootstrap({b})"),
        }
    }
}

/// One Monte Carlo cell.
#[derive(Debug, Clone)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub law: RadialLaw,
    pub shape: ShapeStructure,
    pub alt: AlternativeSpec,
    pub reps: usize,
    pub alpha: f64,
    pub mode: SimMode,
    pub calibration: CalibrationScheme,
    pub seed: u64,
}

impl SimDesign {
    /// Paper-style defaults: n = 200, 500 replications, alpha = 0.05, null
    /// alternative, HR mode with default tuning, analytic calibration.
    pub fn new(p: usize, law: RadialLaw, shape: ShapeStructure, seed: u64) -> Self {
        Self {
            n: 200,
            p,
            law,
            shape,
            alt: AlternativeSpec::null(),
            reps: 500,
            alpha: 0.05,
            mode: SimMode::Hr(HrConfig::default()),
            calibration: CalibrationScheme::Analytic,
            seed,
        }
    }

    /// Key of the baseline data stream; excludes alt/mode/calibration so that
    /// matched designs couple their draws.
    fn data_stream_key(&self) -> u64 {
        let canon = format!("n={};p={};law={};shape={}", self.n, self.p, self.law, self.shape);
        fnv1a(canon.as_bytes())
    }

    fn replication_seed(&self, rep: usize) -> u64 {
        derive_seed(&[self.seed, self.data_stream_key(), rep as u64])
    }
}

/// Aggregated rejection rates for one cell. Standard errors use the binomial
/// formula over the replications that completed.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub design: SimDesign,
    pub reject_sum: f64,
    pub reject_max: f64,
    pub reject_cau: f64,
    pub se_sum: f64,
    pub se_max: f64,
    pub se_cau: f64,
    pub failures: usize,
}

/// Tag derived from the replication stream for the in-replication bootstrap.
const CELL_BOOT_TAG: u64 = 0x6365_6C6C; // "cell"

fn replication_decision(
    x: &crate::DataMatrix,
    design: &SimDesign,
    oracle_inv_root: Option<&SymMatrix>,
    rep_seed: u64,
) -> Result<(bool, bool, bool), String> {
    let sample = match &design.mode {
        SimMode::Oracle => {
            let inv_root = oracle_inv_root.expect("oracle root precomputed");
            let mu = nalgebra::DVector::zeros(design.p);
            stats::standardize(x, &mu, inv_root).map_err(|e| e.to_string())?
        }
        SimMode::Hr(cfg) => {
            let fit = crate::robust::hr_fit(x, cfg).map_err(|e| e.to_string())?;
            let inv_root = linalg::matrix_power(&fit.sigma_hat, linalg::MatrixPower::InvSqrt)
                .map_err(|e| e.to_string())?;
            stats::standardize(x, &fit.mu_hat, &inv_root).map_err(|e| e.to_string())?
        }
    };
    let report = stats::report_from_sample(&sample).map_err(|e| e.to_string())?;
    let (p_sum, p_max, p_cau) = match design.calibration {
        CalibrationScheme::Analytic => (report.p_sum, report.p_max, report.p_cau),
        CalibrationScheme::Bootstrap(b) => {
            let boot_seed = derive_seed(&[rep_seed, CELL_BOOT_TAG]);
            let boot = bootstrap_calibrate(&sample, &report, b, boot_seed)
                .map_err(|e: CalibrationError| e.to_string())?;
            (boot.p_sum_boot, boot.p_max_boot, boot.p_cau_boot)
        }
    };
    let a = design.alpha;
    Ok((p_sum <= a, p_max <= a, p_cau <= a))
}

/// Run all replications of one cell and aggregate rejection rates.
///
/// Fails with [`SimError::TooManyFailures`] when more than 1% of the
/// replications error out; below that, failing replications are excluded
/// from the rates and counted in `failures`.
pub fn run_cell(design: &SimDesign) -> Result<CellResult, SimError> {
    assert!(design.reps >= 1, "need at least one replication");
    assert!(design.alpha > 0.0 && design.alpha < 1.0, "alpha must be in (0,1)");

    let shape = make_shape(&design.shape, design.p)?;
    let shape_root = match design.shape {
        ShapeStructure::Identity => None,
        _ => Some(linalg::matrix_power(&shape, linalg::MatrixPower::Sqrt)?),
    };
    let oracle_inv_root = match design.mode {
        SimMode::Oracle => {
            Some(linalg::matrix_power(&shape, linalg::MatrixPower::InvSqrt)?)
        }
        SimMode::Hr(_) => None,
    };
    let mu = nalgebra::DVector::zeros(design.p);

    let outcomes: Vec<Result<(bool, bool, bool), String>> = (0..design.reps)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = design.replication_seed(rep);
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
            let x = generate_with_root(
                design.n,
                design.p,
                &design.law,
                shape_root.as_ref(),
                &design.alt,
                &mu,
                &mut rng,
            );
            replication_decision(&x, design, oracle_inv_root.as_ref(), rep_seed)
        })
        .collect();

    let mut failures = 0usize;
    let mut first_error = String::new();
    let mut counts = [0usize; 3];
    for outcome in &outcomes {
        match outcome {
            Ok((s, m, c)) => {
                counts[0] += usize::from(*s);
                counts[1] += usize::from(*m);
                counts[2] += usize::from(*c);
            }
            Err(e) => {
                if failures == 0 {
                    first_error = e.clone();
                }
                failures += 1;
            }
        }
    }

    if failures as f64 > 0.01 * design.reps as f64 {
        return Err(SimError::TooManyFailures {
            failures,
            reps: design.reps,
            first: first_error,
        });
    }

    let successes = (design.reps - failures) as f64;
    let rate = |c: usize| c as f64 / successes;
    let se = |r: f64| (r * (1.0 - r) / successes).sqrt();
    let (rs, rm, rc) = (rate(counts[0]), rate(counts[1]), rate(counts[2]));
    Ok(CellResult {
        design: design.clone(),
        reject_sum: rs,
        reject_max: rm,
        reject_cau: rc,
        se_sum: se(rs),
        se_max: se(rm),
        se_cau: se(rc),
        failures,
    })
}

/// Run every cell of a grid on a dedicated thread pool. Results come back in
/// input order; per-cell errors are collected without aborting the remaining
/// cells. Because each replication stream is absolute, the output is
/// bit-identical for every parallelism level.
pub fn run_grid(
    designs: &[SimDesign],
    parallelism: usize,
) -> Result<Vec<Result<CellResult, SimError>>, SimError> {
    if designs.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("building a thread pool cannot fail with nonzero threads");
    Ok(pool.install(|| designs.iter().map(run_cell).collect()))
}

/// Output layout for [`emit_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    /// Machine-readable raw rates.
    Csv,
    /// Percentages with one decimal, columns S/M/C.
    Markdown,
}

pub const CSV_HEADER: &str = "n,p,law,shape,active_set,delta,mode,calibration,reps,alpha,\
reject_sum,reject_max,reject_cau,se_sum,se_max,se_cau,failures";

/// Deterministic text rendering of a batch of cell results.
pub fn emit_table(results: &[CellResult], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in results {
                let d = &r.design;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                    d.n,
                    d.p,
                    d.law,
                    d.shape,
                    d.alt.active_set,
                    d.alt.delta,
                    d.mode.label(),
                    d.calibration.label(),
                    d.reps,
                    d.alpha,
                    r.reject_sum,
                    r.reject_max,
                    r.reject_cau,
                    r.se_sum,
                    r.se_max,
                    r.se_cau,
                    r.failures
                ));
            }
            out
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| n | p | law | shape | active set | delta | S | M | C |\n");
            out.push_str("|---|---|-----|-------|------------|-------|---|---|---|\n");
            for r in results {
                let d = &r.design;
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {:.1} | {:.1} | {:.1} |\n",
                    d.n,
                    d.p,
                    d.law,
                    d.shape,
                    d.alt.active_set,
                    d.alt.delta,
                    100.0 * r.reject_sum,
                    100.0 * r.reject_max,
                    100.0 * r.reject_cau
                ));
            }
            out
        }
    }
}
