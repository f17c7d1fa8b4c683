//! `obmlab` — command-line front end for the library.
//!
//! Subcommands: `kernel`, `poisson`, `weights`, `decompose`, `estimate`,
//! `sweep`, `verify`. Exit codes: `0` success, `1` usage error, `2` bad
//! input or validation failure, `3` verification failure. Every run emits a
//! manifest (`FILE.manifest.json` next to `--out`, otherwise a trailing
//! `manifest: {…}` stdout line). Set `OBMLAB_WORKERS` to pin the worker
//! count; results are byte-identical for any value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use obmlab::decomp::{decompose, theorem_terms};
use obmlab::estimator::{obm_direct, obm_quadratic};
use obmlab::exact::decompose_exact;
use obmlab::exact::rationalize;
use obmlab::io::{self, FunctionFile, Manifest};
use obmlab::lab::{fit_rate, run_moment_experiment, ExperimentSpec, RateAxis};
use obmlab::markov::{
    certify_mixing, kernel_library, sample_path, stationary, TransitionKernel,
};
use obmlab::poisson::{
    sigma2_by_autocovariance, sigma2_by_pairing, solve_poisson, CenteredFunction,
};
use obmlab::suite::{run_all, SuiteDepth};
use obmlab::tol;
use obmlab::weights::{BatchGeometry, ObmWeights, WeightTable};

/// Largest `n` the exact-rational mode accepts on the CLI.
const EXACT_N_CAP: usize = 64;

#[derive(Parser)]
#[command(
    name = "obmlab",
    version,
    about = "Overlapped batch means: estimator, pathwise ledger, verification lab"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a kernel; report its stationary law and mixing certificate.
    Kernel(KernelCmd),
    /// Solve g − Pg = f and report σ²_∞ by three routes.
    Poisson(PoissonCmd),
    /// Inspect the OBM weight band for a geometry.
    Weights(WeightsCmd),
    /// Sample a path and emit its full decomposition ledger.
    Decompose(DecomposeCmd),
    /// Run the OBM estimator on a sampled path.
    Estimate(EstimateCmd),
    /// Replicated moment sweep over a grid, with optional rate fits.
    Sweep(SweepCmd),
    /// Run the verification battery.
    Verify(VerifyCmd),
}

/// Where the kernel comes from: a file, or the built-in library.
#[derive(Args)]
struct KernelSource {
    /// Kernel JSON file ({"label", "n_states", "rows"}).
    #[arg(long, value_name = "FILE", conflicts_with = "library")]
    kernel: Option<PathBuf>,
    /// Built-in kernel name (two_state, lazy_cycle, dirichlet_random, iid).
    #[arg(long, value_name = "NAME")]
    library: Option<String>,
    /// Library parameter, repeatable (e.g. --param a=0.3).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

impl KernelSource {
    fn resolve(&self) -> Result<TransitionKernel, RunError> {
        match (&self.kernel, &self.library) {
            (Some(path), None) => Ok(io::load_kernel(path)?),
            (None, Some(name)) => {
                let mut map = BTreeMap::new();
                for p in &self.params {
                    let (k, v) = p.split_once('=').ok_or_else(|| {
                        RunError::Input(format!("--param needs KEY=VALUE, got {p:?}"))
                    })?;
                    map.insert(k.to_string(), v.to_string());
                }
                Ok(kernel_library(name, &map)?)
            }
            _ => Err(RunError::Input(
                "provide exactly one of --kernel FILE or --library NAME".into(),
            )),
        }
    }
}

/// Where the per-state function comes from.
#[derive(Args)]
struct FunctionSource {
    /// Function JSON file ({"label", "values"}).
    #[arg(long = "f", value_name = "FILE", conflicts_with = "f_values")]
    f: Option<PathBuf>,
    /// Inline comma-separated values (e.g. --f-values 1,0).
    #[arg(long = "f-values", value_name = "V,V,…")]
    f_values: Option<String>,
}

impl FunctionSource {
    fn resolve(&self) -> Result<FunctionFile, RunError> {
        match (&self.f, &self.f_values) {
            (Some(path), None) => Ok(io::load_function(path)?),
            (None, Some(csv)) => {
                let values = csv
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            RunError::Input(format!("--f-values entry {s:?} is not a number"))
                        })
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                Ok(FunctionFile {
                    label: "inline".to_string(),
                    values,
                })
            }
            _ => Err(RunError::Input(
                "provide exactly one of --f FILE or --f-values LIST".into(),
            )),
        }
    }
}

#[derive(Args)]
struct KernelCmd {
    #[command(flatten)]
    source: KernelSource,
    /// Cap for the mixing search (default 10·n²).
    #[arg(long)]
    cap: Option<usize>,
    /// Write the report to this JSON file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PoissonCmd {
    #[command(flatten)]
    source: KernelSource,
    #[command(flatten)]
    function: FunctionSource,
    /// Write the report to this JSON file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsCmd {
    /// Path length.
    #[arg(long)]
    n: usize,
    /// Batch length.
    #[arg(long = "bn", alias = "b")]
    b: usize,
    /// Dump the nonzero band as CSV instead of a summary.
    #[arg(long)]
    dump: bool,
    /// Also verify the band in exact rational arithmetic (n ≤ 64).
    #[arg(long)]
    exact: bool,
    /// Write the output here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeCmd {
    #[command(flatten)]
    source: KernelSource,
    #[command(flatten)]
    function: FunctionSource,
    /// Path length.
    #[arg(long)]
    n: usize,
    /// Batch length.
    #[arg(long = "bn", alias = "b")]
    b: usize,
    /// Path seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replay the ledger in exact rational arithmetic (n ≤ 64).
    #[arg(long)]
    exact: bool,
    /// Write the ledger to this JSON file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateCmd {
    #[command(flatten)]
    source: KernelSource,
    #[command(flatten)]
    function: FunctionSource,
    /// Path length.
    #[arg(long)]
    n: usize,
    /// Batch length.
    #[arg(long = "bn", alias = "b")]
    b: usize,
    /// Path seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which construction to run.
    #[arg(long, value_parser = ["direct", "quadratic", "both"], default_value = "both")]
    method: String,
    /// Also report σ²_∞ and the estimation error.
    #[arg(long)]
    with_truth: bool,
    /// Write the report to this JSON file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    /// Experiment spec JSON (kernel, f_values, grid, p_list, …).
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[command(flatten)]
    source: KernelSource,
    #[command(flatten)]
    function: FunctionSource,
    /// Comma-separated n grid (batch length by the √n rule).
    #[arg(long, value_name = "N,N,…")]
    n_list: Option<String>,
    /// Comma-separated moment orders.
    #[arg(long = "p", alias = "p-list", value_name = "P,P,…")]
    p_list: Option<String>,
    /// Replications per grid point.
    #[arg(long = "reps", alias = "replications")]
    replications: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also fit log–log slopes along n and emit them as CSV.
    #[arg(long)]
    fit: bool,
    /// Write the moment CSV here (slopes go to FILE.slopes.csv).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyCmd {
    /// Reduced instance counts (seconds instead of minutes).
    #[arg(long)]
    quick: bool,
    /// Write the criterion reports to this JSON file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

enum RunError {
    /// Bad input or failed validation → exit 2.
    Input(String),
    /// A verification criterion failed → exit 3.
    Verify(String),
}

macro_rules! from_error {
    ($($ty:ty),+) => {$(
        impl From<$ty> for RunError {
            fn from(e: $ty) -> Self {
                RunError::Input(e.to_string())
            }
        }
    )+};
}
from_error!(
    obmlab::io::IoError,
    obmlab::markov::MarkovError,
    obmlab::poisson::PoissonError,
    obmlab::weights::WeightError,
    obmlab::decomp::DecompError,
    obmlab::estimator::EstimatorError,
    obmlab::lab::LabError
);

fn parse_list<T: std::str::FromStr>(csv: &str, what: &str) -> Result<Vec<T>, RunError> {
    csv.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| RunError::Input(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

/// Emit `text` to `--out` or stdout, then the manifest (sibling file or
/// trailing stdout line).
fn deliver(text: &str, out: Option<&Path>, manifest: &mut Manifest) -> Result<(), RunError> {
    match out {
        Some(path) => {
            io::write_text(path, text)?;
            manifest.output(path);
        }
        None => print!("{text}"),
    }
    if let Some(line) = manifest.emit(out)? {
        println!("{line}");
    }
    Ok(())
}

fn run_kernel(cmd: KernelCmd, argv: Vec<String>) -> Result<(), RunError> {
    let kernel = cmd.source.resolve()?;
    let pi = stationary(&kernel)?;
    let cert = certify_mixing(&kernel, cmd.cap)?;
    let report = serde_json::json!({
        "kernel": kernel,
        "stationary": pi.probs(),
        "t_mix": cert.t_mix,
        "contraction_profile": cert.contraction_profile,
    });
    let mut manifest = Manifest::new("kernel", argv);
    manifest.input("kernel", &kernel);
    if let Some(cap) = cmd.cap {
        manifest.param("cap", cap);
    }
    let text = format!("{}\n", serde_json::to_string_pretty(&report).expect("json"));
    deliver(&text, cmd.out.as_deref(), &mut manifest)
}

fn run_poisson(cmd: PoissonCmd, argv: Vec<String>) -> Result<(), RunError> {
    let kernel = cmd.source.resolve()?;
    let f_file = cmd.function.resolve()?;
    let pi = stationary(&kernel)?;
    let f = CenteredFunction::center(&f_file.values, &pi);
    let sol = solve_poisson(&kernel, &pi, &f)?;
    let ac = sigma2_by_autocovariance(&kernel, &pi, &f, tol::ACOV_TAIL)?;
    let pairing = sigma2_by_pairing(&pi, &f, &sol);
    let spread = (ac - sol.sigma2_inf)
        .abs()
        .max((pairing - sol.sigma2_inf).abs());
    let report = serde_json::json!({
        "f_label": f_file.label,
        "f_centered": f.values(),
        "g": sol.g,
        "p_g": sol.p_g,
        "g_hat": sol.g_hat,
        "sigma2_martingale": sol.sigma2_inf,
        "sigma2_autocovariance": ac,
        "sigma2_pairing": pairing,
        "route_spread": spread,
    });
    let mut manifest = Manifest::new("poisson", argv);
    manifest.input("kernel", &kernel).input("f", &f_file);
    let text = format!("{}\n", serde_json::to_string_pretty(&report).expect("json"));
    deliver(&text, cmd.out.as_deref(), &mut manifest)?;
    if spread > tol::SIGMA2_AGREEMENT * (1.0 + sol.sigma2_inf.abs()) {
        return Err(RunError::Verify(format!(
            "σ²_∞ routes disagree: spread {spread:e}"
        )));
    }
    Ok(())
}

fn run_weights(cmd: WeightsCmd, argv: Vec<String>) -> Result<(), RunError> {
    let geom = BatchGeometry::new(cmd.n, cmd.b)?;
    let weights = ObmWeights::new(geom);
    let mut manifest = Manifest::new("weights", argv);
    manifest.param("n", cmd.n).param("b", cmd.b);

    if cmd.exact && cmd.n > EXACT_N_CAP {
        return Err(RunError::Input(format!(
            "--exact supports n ≤ {EXACT_N_CAP} on the command line (got n = {})",
            cmd.n
        )));
    }

    let text = if cmd.dump {
        io::weight_band_csv(&weights)
    } else {
        let mut report = serde_json::json!({
            "n": cmd.n,
            "b": cmd.b,
            "windows": geom.windows(),
            "trace": weights.trace(),
            "bandwidth": weights.bandwidth(),
        });
        if geom.in_regime() {
            report["diag_square_sum"] =
                serde_json::json!(weights.diag_square_sum().expect("in regime"));
        }
        if cmd.exact {
            let trace = weights.trace_exact();
            report["trace_exact"] = serde_json::json!(format!("{}/{}", trace.numer(), trace.denom()));
        }
        format!("{}\n", serde_json::to_string_pretty(&report).expect("json"))
    };
    deliver(&text, cmd.out.as_deref(), &mut manifest)
}

fn run_decompose(cmd: DecomposeCmd, argv: Vec<String>) -> Result<(), RunError> {
    if cmd.exact && cmd.n > EXACT_N_CAP {
        return Err(RunError::Input(format!(
            "--exact supports n ≤ {EXACT_N_CAP} on the command line (got n = {})",
            cmd.n
        )));
    }
    let kernel = cmd.source.resolve()?;
    let f_file = cmd.function.resolve()?;
    let pi = stationary(&kernel)?;
    let f = CenteredFunction::center(&f_file.values, &pi);
    let sol = solve_poisson(&kernel, &pi, &f)?;
    let geom = BatchGeometry::new(cmd.n, cmd.b)?;
    let weights = ObmWeights::new(geom);
    let path = sample_path(&kernel, pi.probs(), cmd.n, cmd.seed)?;
    let ledger = decompose(&path, f.values(), &weights, &sol)?;
    let terms = theorem_terms(&ledger, sol.sigma2_inf)?;

    let mut report = serde_json::json!({
        "ledger": ledger,
        "error_split": terms,
    });
    if cmd.exact {
        let exact = decompose_exact(&path, &weights, &rationalize(&sol.g), &rationalize(&sol.p_g))?;
        let rows: serde_json::Map<String, serde_json::Value> = exact
            .rows()
            .into_iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect();
        report["exact"] = serde_json::json!({
            "identities_exact": exact.identities_exact(),
            "rows": rows,
        });
    }
    let mut manifest = Manifest::new("decompose", argv);
    manifest
        .input("kernel", &kernel)
        .input("f", &f_file)
        .param("n", cmd.n)
        .param("b", cmd.b)
        .param("exact", cmd.exact)
        .seed(cmd.seed);
    let text = format!("{}\n", serde_json::to_string_pretty(&report).expect("json"));
    deliver(&text, cmd.out.as_deref(), &mut manifest)
}

fn run_estimate(cmd: EstimateCmd, argv: Vec<String>) -> Result<(), RunError> {
    let kernel = cmd.source.resolve()?;
    let f_file = cmd.function.resolve()?;
    let pi = stationary(&kernel)?;
    let geom = BatchGeometry::new(cmd.n, cmd.b)?;
    let path = sample_path(&kernel, pi.probs(), cmd.n, cmd.seed)?;
    let x = path.f_samples(&f_file.values);

    let mut report = serde_json::Map::new();
    let mut gap = None;
    match cmd.method.as_str() {
        "direct" => {
            report.insert("direct".into(), serde_json::to_value(obm_direct(&x, geom)?).unwrap());
        }
        "quadratic" => {
            report.insert(
                "quadratic".into(),
                serde_json::to_value(obm_quadratic(&x, geom)?).unwrap(),
            );
        }
        _ => {
            let d = obm_direct(&x, geom)?;
            let q = obm_quadratic(&x, geom)?;
            let g = (d.value - q.value).abs() / (1.0 + d.value.abs());
            report.insert("direct".into(), serde_json::to_value(d).unwrap());
            report.insert("quadratic".into(), serde_json::to_value(q).unwrap());
            report.insert("relative_gap".into(), serde_json::json!(g));
            gap = Some(g);
        }
    }
    if cmd.with_truth {
        let f = CenteredFunction::center(&f_file.values, &pi);
        let sol = solve_poisson(&kernel, &pi, &f)?;
        report.insert("sigma2_inf".into(), serde_json::json!(sol.sigma2_inf));
    }

    let mut manifest = Manifest::new("estimate", argv);
    manifest
        .input("kernel", &kernel)
        .input("f", &f_file)
        .param("n", cmd.n)
        .param("b", cmd.b)
        .param("method", &cmd.method)
        .seed(cmd.seed);
    let text = format!(
        "{}\n",
        serde_json::to_string_pretty(&serde_json::Value::Object(report)).expect("json")
    );
    deliver(&text, cmd.out.as_deref(), &mut manifest)?;
    if let Some(g) = gap {
        if g > tol::SIGMA2_AGREEMENT {
            return Err(RunError::Verify(format!(
                "direct and quadratic OBM disagree: relative gap {g:e}"
            )));
        }
    }
    Ok(())
}

fn run_sweep(cmd: SweepCmd, argv: Vec<String>) -> Result<(), RunError> {
    let spec = match &cmd.spec {
        Some(path) => io::load_spec(path)?,
        None => {
            let kernel = cmd.source.resolve()?;
            let f_file = cmd.function.resolve()?;
            let mut spec = ExperimentSpec::standard(kernel, f_file.values.clone());
            spec.f_label = f_file.label.clone();
            if let Some(ns) = &cmd.n_list {
                spec.grid = parse_list::<usize>(ns, "--n-list")?
                    .into_iter()
                    .map(BatchGeometry::sqrt_rule)
                    .collect::<Result<_, _>>()?;
            }
            spec
        }
    };
    let mut spec = spec;
    if let Some(ps) = &cmd.p_list {
        spec.p_list = parse_list::<u32>(ps, "--p-list")?;
    }
    if let Some(r) = cmd.replications {
        spec.replications = r;
    }
    if let Some(s) = cmd.seed {
        spec.base_seed = s;
    }

    let report = run_moment_experiment(&spec)?;
    let mut manifest = Manifest::new("sweep", argv);
    manifest
        .input("spec", &spec)
        .param("replications", spec.replications)
        .param("t_mix", report.t_mix)
        .param("sigma2_inf", report.sigma2_inf)
        .seed(spec.base_seed);

    let csv = io::moment_report_csv(&report);
    let fits_csv = if cmd.fit {
        Some(io::rate_fits_csv(&fit_rate(&report, RateAxis::N)?))
    } else {
        None
    };
    match cmd.out.as_deref() {
        Some(path) => {
            io::write_text(path, &csv)?;
            manifest.output(path);
            if let Some(fits) = &fits_csv {
                let mut slope_path = path.as_os_str().to_os_string();
                slope_path.push(".slopes.csv");
                let slope_path = PathBuf::from(slope_path);
                io::write_text(&slope_path, fits)?;
                manifest.output(&slope_path);
            }
            if let Some(line) = manifest.emit(Some(path))? {
                println!("{line}");
            }
        }
        None => {
            print!("{csv}");
            if let Some(fits) = &fits_csv {
                print!("{fits}");
            }
            if let Some(line) = manifest.emit(None)? {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn run_verify(cmd: VerifyCmd, argv: Vec<String>) -> Result<(), RunError> {
    let depth = if cmd.quick {
        SuiteDepth::Quick
    } else {
        SuiteDepth::Full
    };
    let reports = run_all(depth);
    for report in &reports {
        println!("{}", report.line());
    }
    let mut manifest = Manifest::new("verify", argv);
    manifest.param("quick", cmd.quick);
    if let Some(path) = &cmd.out {
        let text = format!("{}\n", serde_json::to_string_pretty(&reports).expect("json"));
        io::write_text(path, &text)?;
        manifest.output(path);
    }
    if let Some(line) = manifest.emit(cmd.out.as_deref())? {
        println!("{line}");
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name).collect();
    if !failed.is_empty() {
        return Err(RunError::Verify(format!(
            "{} criterion(s) failed: {}",
            failed.len(),
            failed.join(", ")
        )));
    }
    Ok(())
}

fn init_workers() -> Result<(), RunError> {
    if let Ok(value) = std::env::var("OBMLAB_WORKERS") {
        let workers: usize = value.parse().map_err(|_| {
            RunError::Input(format!("OBMLAB_WORKERS must be a positive integer, got {value:?}"))
        })?;
        if workers == 0 {
            return Err(RunError::Input(
                "OBMLAB_WORKERS must be a positive integer, got 0".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| RunError::Input(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli, argv: Vec<String>) -> Result<(), RunError> {
    match cli.cmd {
        Cmd::Kernel(c) => run_kernel(c, argv),
        Cmd::Poisson(c) => run_poisson(c, argv),
        Cmd::Weights(c) => run_weights(c, argv),
        Cmd::Decompose(c) => run_decompose(c, argv),
        Cmd::Estimate(c) => run_estimate(c, argv),
        Cmd::Sweep(c) => run_sweep(c, argv),
        Cmd::Verify(c) => run_verify(c, argv),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                ExitCode::SUCCESS
            } else {
                let _ = e.print();
                ExitCode::from(1)
            };
        }
    };
    if let Err(e) = init_workers() {
        let RunError::Input(msg) = e else { unreachable!() };
        eprintln!("obmlab: {msg}");
        return ExitCode::from(2);
    }
    match dispatch(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Input(msg)) => {
            eprintln!("obmlab: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Verify(msg)) => {
            eprintln!("obmlab: {msg}");
            ExitCode::from(3)
        }
    }
}
