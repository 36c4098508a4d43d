//! Command-line front end.
//!
//! `elliptgof test` ingests a CSV, extracts and standardizes a column window,
//! standardizes observations (HR fit or supplied oracle parameters), runs the
//! radial-directional test and optional bootstrap/permutation calibrations,
//! and prints a text or JSON report. `elliptgof simulate` runs Monte Carlo
//! grids and emits CSV or markdown tables.
//!
//! Exit codes: 0 success, 1 any error, 2 rejection at the requested level
//! when `--exit-on-reject` is set. The `ELLIPTGOF_THREADS` environment
//! variable caps worker threads for every parallel section.

use std::error::Error;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::calibrate::{bootstrap_calibrate, permutation_check};
use crate::datagen::{ActiveSet, AlternativeSpec, RadialLaw, ShapeStructure};
use crate::ingest::{self, Dataset, WindowColumns, WindowSpec};
use crate::linalg::SymMatrix;
use crate::robust::HrConfig;
use crate::sim::{emit_table, run_grid, CalibrationScheme, SimDesign, SimMode, TableFormat};
use crate::stats::{self, TestMode, TestReport};

type CliResult<T> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "elliptgof",
    version,
    about = "Radial-directional goodness-of-fit tests for elliptical models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a CSV dataset for elliptical goodness of fit
    Test(Box<TestArgs>),
    /// Run Monte Carlo size/power grids and emit a table
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Hr,
    Oracle,
}

impl std::fmt::Display for ModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeArg::Hr => "hr",
            ModeArg::Oracle => "oracle",
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV file
    #[arg(long)]
    input: PathBuf,

    /// Treat the first row as column labels
    #[arg(long)]
    has_header: bool,

    /// Field delimiter
    #[arg(long, default_value_t = ',')]
    delimiter: char,

    /// Contiguous 1-based column window, e.g. 1:100
    #[arg(long, conflicts_with_all = ["columns", "top_variance"])]
    window: Option<String>,

    /// Explicit 1-based column list, e.g. 3,17,42
    #[arg(long, value_delimiter = ',', conflicts_with = "top_variance")]
    columns: Option<Vec<usize>>,

    /// Keep only the K columns with the largest marginal variance
    #[arg(long)]
    top_variance: Option<usize>,

    /// Skip window-local column standardization
    #[arg(long)]
    no_standardize: bool,

    /// Standardization mode: hr (robust fit) or oracle (supplied parameters)
    #[arg(long, value_enum, default_value_t = ModeArg::Hr)]
    mode: ModeArg,

    /// Location vector file for oracle mode (one value per line)
    #[arg(long)]
    mu_file: Option<PathBuf>,

    /// Shape matrix file for oracle mode (p rows of p values)
    #[arg(long)]
    sigma_file: Option<PathBuf>,

    /// Bootstrap mean-variance correction; optional replicate count
    #[arg(long, num_args = 0..=1, default_missing_value = "200")]
    bootstrap: Option<usize>,

    /// Permutation check; optional permutation count
    #[arg(long, num_args = 0..=1, default_missing_value = "499")]
    permutation: Option<usize>,

    /// Seed for bootstrap and permutation streams
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Rejection level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,

    /// Exit with status 2 when the test rejects at level alpha
    #[arg(long)]
    exit_on_reject: bool,

    /// Graphical-lasso penalty (HR mode)
    #[arg(long)]
    hr_lambda: Option<f64>,

    /// Banding width (HR mode)
    #[arg(long)]
    hr_band: Option<usize>,

    /// Ridge constant (HR mode)
    #[arg(long)]
    hr_ridge: Option<f64>,

    /// HR stopping tolerance
    #[arg(long)]
    hr_tol: Option<f64>,

    /// Maximum HR sweeps
    #[arg(long)]
    hr_max_iter: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LawArg {
    Gaussian,
    T10,
    Mixture,
    Kotz,
    Bounded,
}

impl std::fmt::Display for LawArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LawArg::Gaussian => "gaussian",
            LawArg::T10 => "t10",
            LawArg::Mixture => "mixture",
            LawArg::Kotz => "kotz",
            LawArg::Bounded => "bounded",
        })
    }
}

impl LawArg {
    fn to_law(self) -> RadialLaw {
        match self {
            LawArg::Gaussian => RadialLaw::Gaussian,
            LawArg::T10 => RadialLaw::StudentT { nu: 10.0 },
            LawArg::Mixture => RadialLaw::default_mixture(),
            LawArg::Kotz => RadialLaw::Kotz { beta: 2.0 },
            LawArg::Bounded => RadialLaw::BoundedBeta,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShapeArg {
    Identity,
    Ar,
    Sp,
}

impl std::fmt::Display for ShapeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShapeArg::Identity => "identity",
            ShapeArg::Ar => "ar",
            ShapeArg::Sp => "sp",
        })
    }
}

impl ShapeArg {
    fn to_shape(self) -> ShapeStructure {
        match self {
            ShapeArg::Identity => ShapeStructure::Identity,
            ShapeArg::Ar => ShapeStructure::ar_default(),
            ShapeArg::Sp => ShapeStructure::SparsePrecision,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ActiveArg {
    Sparse,
    Frac20,
    All,
}

impl std::fmt::Display for ActiveArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ActiveArg::Sparse => "sparse",
            ActiveArg::Frac20 => "frac20",
            ActiveArg::All => "all",
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CalArg {
    Analytic,
    Bootstrap,
}

impl std::fmt::Display for CalArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CalArg::Analytic => "analytic",
            CalArg::Bootstrap => "bootstrap",
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableArg {
    Csv,
    Markdown,
}

#[derive(Args)]
struct SimulateArgs {
    /// Sample size per replication
    #[arg(long, default_value_t = 200)]
    n: usize,

    /// Dimensions, comma-separated for a grid
    #[arg(long, value_delimiter = ',', default_values_t = [50])]
    p: Vec<usize>,

    /// Radial laws, comma-separated for a grid
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [LawArg::Gaussian])]
    law: Vec<LawArg>,

    /// Shape structures, comma-separated for a grid
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ShapeArg::Identity])]
    shape: Vec<ShapeArg>,

    /// Active set of the alternative
    #[arg(long, value_enum, default_value_t = ActiveArg::All)]
    active_set: ActiveArg,

    /// Signal strengths, comma-separated for a power curve (0 = null)
    #[arg(long, value_delimiter = ',', default_values_t = [0.0])]
    delta: Vec<f64>,

    /// Monte Carlo replications per cell
    #[arg(long, default_value_t = 500)]
    reps: usize,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    #[arg(long, value_enum, default_value_t = ModeArg::Hr)]
    mode: ModeArg,

    #[arg(long, value_enum, default_value_t = CalArg::Analytic)]
    calibration: CalArg,

    /// Bootstrap replicates per test when --calibration bootstrap
    #[arg(long, default_value_t = 200)]
    bootstrap_b: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads (capped by ELLIPTGOF_THREADS)
    #[arg(long)]
    parallelism: Option<usize>,

    #[arg(long, value_enum, default_value_t = TableArg::Csv)]
    format: TableArg,

    /// Write the table to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parse arguments from the process environment and execute.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("ELLIPTGOF_THREADS").ok()?.parse::<usize>().ok().filter(|&t| t >= 1)
}

fn execute(cli: Cli) -> CliResult<i32> {
    if let Some(cap) = thread_cap() {
        // Ignore the error when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cap).build_global();
    }
    match cli.command {
        Command::Test(args) => run_test_command(&args),
        Command::Simulate(args) => run_simulate_command(&args),
    }
}

fn parse_window(spec: &str) -> CliResult<(usize, usize)> {
    let (a, b) = spec
        .split_once(':')
        .ok_or_else(|| format!("window must be start:end, got {spec:?}"))?;
    let start: usize = a.trim().parse().map_err(|_| format!("bad window start {a:?}"))?;
    let end: usize = b.trim().parse().map_err(|_| format!("bad window end {b:?}"))?;
    Ok((start, end))
}

fn load_vector(path: &Path) -> CliResult<DVector<f64>> {
    let d = ingest::load_csv(path, false, ',')?;
    if d.p() == 1 {
        Ok(DVector::from_iterator(d.n(), d.values.column(0).iter().copied()))
    } else if d.n() == 1 {
        Ok(d.values.row(0).transpose())
    } else {
        Err(format!("{} must hold a single row or column of numbers", path.display()).into())
    }
}

fn load_shape_matrix(path: &Path) -> CliResult<SymMatrix> {
    let d = ingest::load_csv(path, false, ',')?;
    if d.n() != d.p() {
        return Err(
            format!("{} must hold a square matrix, got {}x{}", path.display(), d.n(), d.p())
                .into(),
        );
    }
    Ok(SymMatrix::from_matrix(d.values))
}

fn build_window(args: &TestArgs, data: &Dataset) -> CliResult<(WindowSpec, Vec<usize>, String)> {
    let p = data.p();
    let (columns, describe) = if let Some(spec) = &args.window {
        let (start, end) = parse_window(spec)?;
        (WindowColumns::Range { start, end }, format!("{start}:{end}"))
    } else if let Some(cols) = &args.columns {
        (WindowColumns::List(cols.clone()), format!("list({})", cols.len()))
    } else if let Some(k) = args.top_variance {
        let cols = ingest::top_variance_columns(data, k);
        let desc = format!("top-variance({})", cols.len());
        (WindowColumns::List(cols), desc)
    } else {
        (WindowColumns::Range { start: 1, end: p }, format!("1:{p}"))
    };
    let spec = WindowSpec { columns, standardize: !args.no_standardize };
    let resolved = spec.resolve(p)?;
    let original: Vec<usize> = resolved.iter().map(|i| i + 1).collect();
    Ok((spec, original, describe))
}

fn hr_config(args: &TestArgs) -> HrConfig {
    let mut cfg = HrConfig::default();
    if let Some(v) = args.hr_lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.hr_band {
        cfg.band_h = v;
    }
    if let Some(v) = args.hr_ridge {
        cfg.ridge = v;
    }
    if let Some(v) = args.hr_tol {
        cfg.tol = v;
    }
    if let Some(v) = args.hr_max_iter {
        cfg.max_iter = v;
    }
    cfg
}

#[derive(Serialize)]
struct HrJson {
    iterations: usize,
    converged: bool,
    final_step: f64,
}

#[derive(Serialize)]
struct BootstrapJson {
    b: usize,
    mean_sum: f64,
    sd_sum: f64,
    mean_max: f64,
    sd_max: f64,
    p_sum_boot: f64,
    p_max_boot: f64,
    p_cau_boot: f64,
}

#[derive(Serialize)]
struct PermutationJson {
    b_pi: usize,
    p_sum_perm: f64,
    p_max_perm: f64,
    p_cau_perm: f64,
}

#[derive(Serialize)]
struct TestJson<'a> {
    schema: u32,
    input: &'a str,
    n: usize,
    p: usize,
    window: &'a str,
    mode: String,
    alpha: f64,
    seed: u64,
    #[serde(flatten)]
    report: &'a TestReport,
    /// Original 1-based input columns matching `top_coords`.
    top_columns: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_labels: Option<Vec<String>>,
    hr: Option<HrJson>,
    bootstrap: Option<BootstrapJson>,
    permutation: Option<PermutationJson>,
    rejected_rows: &'a [u64],
    reject: bool,
}

/// 12 significant digits; text and JSON must agree to this precision.
fn sig(v: f64) -> String {
    format!("{v:.11e}")
}

fn run_test_command(args: &TestArgs) -> CliResult<i32> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(format!("alpha must be in (0,1), got {}", args.alpha).into());
    }
    let data = ingest::load_csv(&args.input, args.has_header, args.delimiter)?;
    let (window, original_columns, window_desc) = build_window(args, &data)?;
    let x = ingest::extract_window(&data, &window)?;
    let (n, p) = (x.nrows(), x.ncols());

    let mode = match args.mode {
        ModeArg::Hr => TestMode::Hr(hr_config(args)),
        ModeArg::Oracle => {
            let mu_path = args
                .mu_file
                .as_ref()
                .ok_or("oracle mode needs --mu-file and --sigma-file")?;
            let sigma_path = args
                .sigma_file
                .as_ref()
                .ok_or("oracle mode needs --mu-file and --sigma-file")?;
            let mu = load_vector(mu_path)?;
            let sigma = load_shape_matrix(sigma_path)?;
            if mu.len() != p || sigma.dim() != p {
                return Err(format!(
                    "oracle parameters have dimension {} / {}, window has {p} columns",
                    mu.len(),
                    sigma.dim()
                )
                .into());
            }
            TestMode::Oracle { mu, sigma }
        }
    };

    let outcome = stats::run_test_full(&x, &mode)?;
    let report = &outcome.report;

    let bootstrap = match args.bootstrap {
        Some(b) => Some(bootstrap_calibrate(&outcome.sample, report, b, args.seed)?),
        None => None,
    };
    let permutation = match args.permutation {
        Some(b_pi) => Some(permutation_check(&outcome.sample, report, b_pi, args.seed)?),
        None => None,
    };

    // The decision p-value is the bootstrap-corrected Cauchy combination when
    // the correction was requested, otherwise the analytic one.
    let decision_p = bootstrap.as_ref().map_or(report.p_cau, |b| b.p_cau_boot);
    let reject = decision_p <= args.alpha;

    let top_columns: Vec<usize> =
        report.top_coords.iter().map(|(j, _)| original_columns[j - 1]).collect();
    let top_labels = data.column_labels.as_ref().map(|labels| {
        top_columns.iter().map(|&c| labels[c - 1].clone()).collect::<Vec<_>>()
    });

    match args.format {
        FormatArg::Json => {
            let json = TestJson {
                schema: 1,
                input: &data.source,
                n,
                p,
                window: &window_desc,
                mode: args.mode.to_string(),
                alpha: args.alpha,
                seed: args.seed,
                report,
                top_columns,
                top_labels,
                hr: outcome.hr.as_ref().map(|h| HrJson {
                    iterations: h.iterations,
                    converged: h.converged,
                    final_step: h.final_step,
                }),
                bootstrap: bootstrap.as_ref().map(|b| BootstrapJson {
                    b: b.b,
                    mean_sum: b.mean_sum,
                    sd_sum: b.sd_sum,
                    mean_max: b.mean_max,
                    sd_max: b.sd_max,
                    p_sum_boot: b.p_sum_boot,
                    p_max_boot: b.p_max_boot,
                    p_cau_boot: b.p_cau_boot,
                }),
                permutation: permutation.as_ref().map(|q| PermutationJson {
                    b_pi: q.b_pi,
                    p_sum_perm: q.p_sum_perm,
                    p_max_perm: q.p_max_perm,
                    p_cau_perm: q.p_cau_perm,
                }),
                rejected_rows: &data.rejected_rows,
                reject,
            };
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        FormatArg::Text => {
            let mut out = String::new();
            writeln!(out, "elliptgof test report")?;
            writeln!(out, "  input: {} (n={n}, p={p}, window {window_desc})", data.source)?;
            if !data.rejected_rows.is_empty() {
                writeln!(
                    out,
                    "  dropped {} row(s) with missing/non-finite values (lines {:?})",
                    data.rejected_rows.len(),
                    data.rejected_rows
                )?;
            }
            match &outcome.hr {
                Some(h) => writeln!(
                    out,
                    "  mode: hr ({} iterations, converged={}, final step {})",
                    h.iterations,
                    h.converged,
                    sig(h.final_step)
                )?,
                None => writeln!(out, "  mode: oracle")?,
            }
            writeln!(out, "  T_sum = {:>20}   P_sum = {}", sig(report.t_sum), sig(report.p_sum))?;
            writeln!(out, "  T_max = {:>20}   P_max = {}", sig(report.t_max), sig(report.p_max))?;
            writeln!(out, "  T_cau = {:>20}   P_cau = {}", sig(report.t_cau), sig(report.p_cau))?;
            if let Some(b) = &bootstrap {
                writeln!(
                    out,
                    "  bootstrap (B={}): P_sum = {}  P_max = {}  P_cau = {}",
                    b.b,
                    sig(b.p_sum_boot),
                    sig(b.p_max_boot),
                    sig(b.p_cau_boot)
                )?;
            }
            if let Some(q) = &permutation {
                writeln!(
                    out,
                    "  permutation (B_pi={}): P_sum = {}  P_max = {}  P_cau = {}",
                    q.b_pi,
                    sig(q.p_sum_perm),
                    sig(q.p_max_perm),
                    sig(q.p_cau_perm)
                )?;
            }
            writeln!(out, "  top coordinates by n*g^2:")?;
            for (rank, ((j, score), col)) in
                report.top_coords.iter().zip(&top_columns).enumerate()
            {
                let label = data
                    .column_labels
                    .as_ref()
                    .map(|l| format!(" [{}]", l[col - 1]))
                    .unwrap_or_default();
                writeln!(
                    out,
                    "    {:>2}. window coord {j} = input column {col}{label}: {}",
                    rank + 1,
                    sig(*score)
                )?;
            }
            writeln!(
                out,
                "  decision at alpha={}: {}",
                args.alpha,
                if reject { "reject elliptical null" } else { "fail to reject" }
            )?;
            print!("{out}");
        }
    }

    Ok(if reject && args.exit_on_reject { 2 } else { 0 })
}

fn run_simulate_command(args: &SimulateArgs) -> CliResult<i32> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(format!("alpha must be in (0,1), got {}", args.alpha).into());
    }
    if args.reps == 0 {
        return Err("need at least one replication".into());
    }

    let mut designs = Vec::new();
    for law in &args.law {
        for shape in &args.shape {
            for &p in &args.p {
                for &delta in &args.delta {
                    designs.push(SimDesign {
                        n: args.n,
                        p,
                        law: law.to_law(),
                        shape: shape.to_shape(),
                        alt: AlternativeSpec {
                            active_set: match args.active_set {
                                ActiveArg::Sparse => ActiveSet::Sparse,
                                ActiveArg::Frac20 => ActiveSet::Frac20,
                                ActiveArg::All => ActiveSet::All,
                            },
                            delta,
                        },
                        reps: args.reps,
                        alpha: args.alpha,
                        mode: match args.mode {
                            ModeArg::Hr => SimMode::Hr(HrConfig::default()),
                            ModeArg::Oracle => SimMode::Oracle,
                        },
                        calibration: match args.calibration {
                            CalArg::Analytic => CalibrationScheme::Analytic,
                            CalArg::Bootstrap => CalibrationScheme::Bootstrap(args.bootstrap_b),
                        },
                        seed: args.seed,
                    });
                }
            }
        }
    }

    let default_threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    let mut parallelism = args.parallelism.unwrap_or(default_threads);
    if let Some(cap) = thread_cap() {
        parallelism = parallelism.min(cap);
    }

    let outcomes = run_grid(&designs, parallelism)?;
    let mut cells = Vec::new();
    let mut cell_errors = Vec::new();
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(cell) => cells.push(cell),
            Err(e) => cell_errors.push((idx, e)),
        }
    }
    for (idx, e) in &cell_errors {
        eprintln!("warning: cell {idx} failed: {e}");
    }
    if cells.is_empty() {
        return Err("every simulation cell failed".into());
    }

    let format = match args.format {
        TableArg::Csv => TableFormat::Csv,
        TableArg::Markdown => TableFormat::Markdown,
    };
    let table = emit_table(&cells, format);
    match &args.output {
        Some(path) => std::fs::write(path, &table)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => print!("{table}"),
    }
    Ok(if cell_errors.is_empty() { 0 } else { 1 })
}
