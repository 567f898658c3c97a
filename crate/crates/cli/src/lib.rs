//! Command-line harness for the `sr1qn` solvers: runs presets, writes trace
//! CSVs, metadata sidecars and SVG plots, checks rate envelopes on recorded
//! traces and generates problem data.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sr1qn::certify::{
    check_cubic_envelope, check_gd_envelope, check_grad_envelope, check_pl_envelope, cubic_constants,
    empirical_gradient_domination, empirical_kl_constant, empirical_pl_modulus, grad_constants, k0_grid,
    superlinearity_index, EnvelopeReport, KLSpec,
};
use sr1qn::problems::{phantom, synthesize_blurred, write_libsvm, write_pgm, synthetic_mushrooms, random_least_squares_data};
use sr1qn::solvers::trace_io::{parse_trace_csv, write_trace_csv};
use sr1qn::solvers::{resolve_f_inf, run, Constants, Method, RunTrace, SolverConfig, Termination};
use sr1qn::sr1::RestartPolicy;
use sr1qn::Vector;
use thiserror::Error;

pub mod plot;
pub mod preset;
pub mod textio;

pub use preset::{BenchPreset, Instance, PresetName, PresetOverrides};

/// Ratios in the superlinearity window reported after each run.
pub const SUPERLINEARITY_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{0}: invalid JSON: {1}")]
    Json(String, String),

    #[error(transparent)]
    Solver(#[from] sr1qn::Error),

    #[error("{method} stopped with a subproblem failure at iteration {iteration}: {message}")]
    SubproblemFailure {
        method: Method,
        iteration: usize,
        message: String,
    },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 3 for a solver that stopped on a failed subproblem, 1 otherwise
    /// (argument errors detected by the parser exit with 2).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::SubproblemFailure { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sr1qn", version, about = "Regularized SR1 quasi-Newton benchmarks and rate certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method on a preset and write `<out>/<method>.csv` plus a
    /// metadata sidecar.
    Run(RunArgs),
    /// Run every method of a preset and plot them together.
    Bench(BenchArgs),
    /// Check a theorem's rate envelope against a recorded trace.
    Certify(CertifyArgs),
    /// Write problem data files.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum)]
    pub preset: Option<PresetName>,
    /// JSON preset overrides, or a metadata sidecar from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Quadratic: directory with A.txt and b.txt; logistic: libsvm file;
    /// deblur: observed PGM image.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows of the quadratic-kernel matrix.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Columns of the quadratic-kernel matrix.
    #[arg(long)]
    pub cols: Option<usize>,
    /// Side length of the synthetic deblurring image.
    #[arg(long)]
    pub size: Option<usize>,
    /// Regularization weight (logistic and deblurring).
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Total-variation weight of the deblurring objective.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub hessian_lipschitz: Option<f64>,
    /// Logistic preset: use the tight estimate of L instead of the loose one.
    #[arg(long)]
    pub tight_lipschitz: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub kappa_bar: Option<f64>,
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long, value_enum)]
    pub restart_policy: Option<RestartArg>,
    /// Record elapsed_s as 0 so that repeated runs give identical CSVs.
    #[arg(long)]
    pub no_wall_clock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RestartArg {
    LipschitzIdentity,
    CurrentHessian,
}

impl From<RestartArg> for RestartPolicy {
    fn from(r: RestartArg) -> Self {
        match r {
            RestartArg::LipschitzIdentity => RestartPolicy::LipschitzIdentity,
            RestartArg::CurrentHessian => RestartPolicy::CurrentHessian,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Defaults to the first method of the preset.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated subset of methods; defaults to the preset's list.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Theorem {
    /// Local rate of cubic-sr1 under a KL inequality.
    Cubic,
    /// Local rate of grad-sr1 under a KL inequality.
    Grad,
    /// Global rate of grad-sr1 under gradient domination.
    GradientDominated,
    /// Global rate of cubic-sr1-qn under a PL inequality.
    Pl,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    /// Trace CSV written by `run` or `bench`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Metadata sidecar; defaults to `<trace stem>.meta.json`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    /// KL exponent for the cubic and grad theorems.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// KL or gradient-domination constant; estimated from the trace when
    /// omitted.
    #[arg(long)]
    pub c: Option<f64>,
    /// PL modulus; estimated from the trace when omitted.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Starting index for the local theorems; scans 0..=len/2 when omitted.
    #[arg(long)]
    pub k0: Option<usize>,
    /// Write the envelope table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub preset: PresetName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 250)]
    pub rows: usize,
    #[arg(long, default_value_t = 300)]
    pub cols: usize,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

impl ProblemArgs {
    fn overrides(&self, solver: &SolverArgs) -> Result<PresetOverrides, CliError> {
        let base = match &self.config {
            Some(path) => PresetOverrides::load(path)?,
            None => PresetOverrides::default(),
        };
        let flags = PresetOverrides {
            preset: self.preset,
            seed: self.seed,
            data: self.data.clone(),
            rows: self.rows,
            cols: self.cols,
            size: self.size,
            mu: self.mu,
            eps: self.eps,
            rho: self.rho,
            hessian_lipschitz: self.hessian_lipschitz,
            tight_lipschitz: self.tight_lipschitz.then_some(true),
            methods: None,
            tol: solver.tol,
            max_iter: solver.max_iter,
            kappa_bar: solver.kappa_bar,
            lipschitz: solver.lipschitz,
            restart_policy: solver.restart_policy.map(Into::into),
            record_time: solver.no_wall_clock.then_some(false),
        };
        Ok(base.merge(flags))
    }
}

/// Metadata sidecar written next to each trace CSV. Holds no wall-clock
/// data, so it is as reproducible as the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: Method,
    pub problem: String,
    pub source: String,
    pub dim: usize,
    pub zero_g: bool,
    pub config: PresetOverrides,
    pub solver: SolverConfig,
    pub constants: Constants,
    pub f_star: Option<f64>,
    pub termination: Termination,
    pub iterations: usize,
    pub restart_total: usize,
    #[serde(default)]
    pub metric_repairs: usize,
    pub final_gnorm: f64,
    pub final_window_max_ratio: Option<f64>,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Gen(a) => cmd_gen(&a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn csv_path(out: &Path, method: Method) -> PathBuf {
    out.join(format!("{method}.csv"))
}

pub fn meta_path(out: &Path, method: Method) -> PathBuf {
    out.join(format!("{method}.meta.json"))
}

fn build_meta(preset: &BenchPreset, inst: &Instance, cfg: &SolverConfig, trace: &RunTrace) -> Result<RunMeta, CliError> {
    let index = superlinearity_index(&trace.records, SUPERLINEARITY_WINDOW)?;
    Ok(RunMeta {
        method: trace.method,
        problem: inst.problem.name.clone(),
        source: inst.source.clone(),
        dim: inst.problem.dim(),
        zero_g: inst.problem.has_zero_g(),
        config: PresetOverrides {
            methods: Some(vec![trace.method]),
            ..PresetOverrides::from(preset)
        },
        solver: cfg.clone(),
        constants: trace.constants,
        f_star: trace.f_star,
        termination: trace.termination.clone(),
        iterations: trace.records.len() - 1,
        restart_total: trace.restart_total,
        metric_repairs: trace.metric_repairs,
        final_gnorm: trace.last().gnorm,
        final_window_max_ratio: index.final_window_max,
    })
}

/// Writes `<out>/<method>.csv` and `<out>/<method>.meta.json`.
fn write_run(out: &Path, meta: &RunMeta, trace: &RunTrace) -> Result<(), CliError> {
    write_file(&csv_path(out, trace.method), write_trace_csv(&trace.records))?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| CliError::Json("metadata".into(), e.to_string()))?;
    write_file(&meta_path(out, trace.method), json + "\n")
}

fn summary_line(meta: &RunMeta) -> String {
    let status = match &meta.termination {
        Termination::Converged => "converged".to_string(),
        Termination::MaxIter => "hit max-iter".to_string(),
        Termination::SubproblemFailure { iteration, .. } => format!("FAILED at iteration {iteration}"),
    };
    let ratio = meta
        .final_window_max_ratio
        .map_or_else(|| "n/a".to_string(), |r| format!("{r:.3e}"));
    format!(
        "{}: {status} after {} iterations, gnorm {:.3e}, restarts {}, metric repairs {}, final-window max ratio {ratio}",
        meta.method, meta.iterations, meta.final_gnorm, meta.restart_total, meta.metric_repairs
    )
}

fn failure_of(trace: &RunTrace) -> Option<CliError> {
    match &trace.termination {
        Termination::SubproblemFailure { iteration, message } => Some(CliError::SubproblemFailure {
            method: trace.method,
            iteration: *iteration,
            message: message.clone(),
        }),
        _ => None,
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let preset = args.problem.overrides(&args.solver)?.resolve()?;
    let method = args.method.unwrap_or(preset.methods[0]);
    let inst = preset.build()?;
    let trace = run(method, &inst.problem, &inst.x0, &preset.solver)?;
    let meta = build_meta(&preset, &inst, &preset.solver, &trace)?;
    write_run(&args.out, &meta, &trace)?;
    println!("{}", summary_line(&meta));
    failure_of(&trace).map_or(Ok(()), Err)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let mut preset = args.problem.overrides(&args.solver)?.resolve()?;
    if let Some(m) = &args.methods {
        preset.methods = m.clone();
    }
    let inst = preset.build()?;
    // Runs are independent and individually sequential.
    let results: Vec<Result<RunTrace, sr1qn::Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = preset
            .methods
            .iter()
            .map(|&m| {
                let (inst, cfg) = (&inst, &preset.solver);
                s.spawn(move || run(m, &inst.problem, &inst.x0, cfg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let mut traces = Vec::new();
    let mut failure = None;
    for (&method, result) in preset.methods.iter().zip(results) {
        match result {
            Ok(trace) => {
                let meta = build_meta(&preset, &inst, &preset.solver, &trace)?;
                write_run(&args.out, &meta, &trace)?;
                println!("{}", summary_line(&meta));
                let err = failure_of(&trace);
                traces.push(trace);
                if let Some(e) = err {
                    failure = Some(e);
                    break;
                }
            }
            Err(e) => {
                failure = Some(CliError::Usage(format!("{method}: {e}")));
                break;
            }
        }
    }
    let series: Vec<plot::Series<'_>> = traces
        .iter()
        .map(|t| plot::Series {
            label: t.method.name(),
            records: &t.records,
        })
        .collect();
    let title = format!("{} ({})", preset.name.as_str(), inst.source);
    write_file(
        &args.out.join("bench.svg"),
        plot::convergence_svg(&title, &series, inst.problem.f_star),
    )?;
    match failure {
        None => {
            let _ = fs::remove_file(args.out.join("INCOMPLETE"));
            Ok(())
        }
        Some(e) => {
            write_file(&args.out.join("INCOMPLETE"), format!("{e}\n"))?;
            Err(e)
        }
    }
}

/// Rebuilds a trace from a CSV and its metadata sidecar. The final iterate
/// is not stored and is left empty.
pub fn load_trace(csv: &Path, meta: &Path) -> Result<(RunTrace, RunMeta), CliError> {
    let text = fs::read_to_string(csv).map_err(|e| CliError::io(csv, e))?;
    let records = parse_trace_csv(&text)?;
    if records.is_empty() {
        return Err(CliError::Usage(format!("{}: trace has no records", csv.display())));
    }
    let meta_text = fs::read_to_string(meta).map_err(|e| CliError::io(meta, e))?;
    let meta: RunMeta =
        serde_json::from_str(&meta_text).map_err(|e| CliError::Json(meta.display().to_string(), e.to_string()))?;
    let trace = RunTrace {
        method: meta.method,
        records,
        x_final: Vector::zeros(0),
        termination: meta.termination.clone(),
        restart_total: meta.restart_total,
        metric_repairs: meta.metric_repairs,
        constants: meta.constants,
        f_star: meta.f_star,
        audit: Vec::new(),
    };
    Ok((trace, meta))
}

fn default_meta_path(trace: &Path) -> PathBuf {
    let stem = trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    trace.with_file_name(format!("{stem}.meta.json"))
}

/// Result of `certify`: the report for the chosen `k0` and one summary line
/// per scanned `k0`.
#[derive(Debug, Clone)]
pub struct Certification {
    pub report: EnvelopeReport,
    pub scanned: Vec<(usize, String)>,
    pub parameter: f64,
    pub summary: String,
}

pub fn certify_trace(trace: &RunTrace, zero_g: bool, args: &CertifyArgs) -> Result<Certification, CliError> {
    if !zero_g && matches!(args.theorem, Theorem::GradientDominated | Theorem::Pl) {
        return Err(CliError::Usage(
            "the global-rate theorems apply to smooth objectives (g = 0) only".into(),
        ));
    }
    if trace.records.len() == 1 && trace.converged() {
        // Nothing to bound: every envelope holds trivially.
        let mut single = trace.clone();
        single.constants.hessian_lipschitz = single.constants.hessian_lipschitz.max(f64::MIN_POSITIVE);
        let f_inf = resolve_f_inf(trace.f_star, &trace.records);
        return Ok(Certification {
            report: check_pl_envelope(&single, 1.0, f_inf)?,
            scanned: Vec::new(),
            parameter: f64::NAN,
            summary: "SATISFIED from N=1 (converged at the first record)".into(),
        });
    }
    let f_inf = resolve_f_inf(trace.f_star, &trace.records);
    let estimate = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| CliError::Usage(format!("cannot estimate {what} from this trace; pass it explicitly")))
    };
    match args.theorem {
        Theorem::Cubic | Theorem::Grad => {
            let c = match args.c {
                Some(c) => c,
                None => estimate(empirical_kl_constant(&trace.records, f_inf, args.theta), "c")?,
            };
            let kl = KLSpec::power(c, args.theta)?;
            let grid = match args.k0 {
                Some(k) => vec![k],
                None => k0_grid(trace.records.len() - 1),
            };
            let mut scanned = Vec::new();
            let mut chosen: Option<EnvelopeReport> = None;
            let mut first: Option<EnvelopeReport> = None;
            for k0 in grid {
                let report = if args.theorem == Theorem::Cubic {
                    check_cubic_envelope(trace, &cubic_constants(trace, f_inf, k0, &kl)?, &kl)
                } else {
                    check_grad_envelope(trace, &grad_constants(trace, f_inf, k0, &kl)?, &kl)
                };
                scanned.push((k0, report.summary()));
                if chosen.is_none() && report.all_satisfied() && !report.verdicts.is_empty() {
                    chosen = Some(report.clone());
                }
                first.get_or_insert(report);
            }
            let report = chosen.clone().or(first).expect("grid is nonempty");
            let summary = match (&chosen, args.k0) {
                (_, Some(_)) => report.summary(),
                (Some(r), None) => format!("{} (k0={})", r.summary(), r.k0),
                (None, None) => format!("VIOLATED for every k0 in 0..={}", scanned.last().map_or(0, |s| s.0)),
            };
            Ok(Certification {
                report,
                scanned,
                parameter: c,
                summary,
            })
        }
        Theorem::GradientDominated | Theorem::Pl => {
            let (report, parameter) = if args.theorem == Theorem::GradientDominated {
                let c = match args.c {
                    Some(c) => c,
                    None => estimate(empirical_gradient_domination(&trace.records, f_inf), "c")?,
                };
                (check_gd_envelope(trace, c, f_inf)?, c)
            } else {
                let mu = match args.mu {
                    Some(mu) => mu,
                    None => estimate(empirical_pl_modulus(&trace.records, f_inf), "mu")?,
                };
                (check_pl_envelope(trace, mu, f_inf)?, mu)
            };
            let summary = report.summary();
            Ok(Certification {
                scanned: vec![(0, summary.clone())],
                report,
                parameter,
                summary,
            })
        }
    }
}

/// Envelope table with `#` comment lines for the constants.
pub fn report_table(cert: &Certification) -> Result<String, CliError> {
    let r = &cert.report;
    let constants = serde_json::to_string(&r.constants).map_err(|e| CliError::Json("report".into(), e.to_string()))?;
    let mut out = format!(
        "# case {}\n# k0 {}\n# parameter {:.16e}\n# threshold {}\n# constants {constants}\nN,bound,observed,ok\n",
        r.case,
        r.k0,
        cert.parameter,
        r.threshold.map_or_else(|| "none".into(), |t| format!("{t:.16e}"))
    );
    for v in &r.verdicts {
        out.push_str(&format!("{},{:.16e},{:.16e},{}\n", v.n, v.bound, v.observed, u8::from(v.satisfied)));
    }
    Ok(out)
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<(), CliError> {
    let meta_path = args.meta.clone().unwrap_or_else(|| default_meta_path(&args.trace));
    let (trace, meta) = load_trace(&args.trace, &meta_path)?;
    let cert = certify_trace(&trace, meta.zero_g, args)?;
    let table = report_table(&cert)?;
    match &args.out {
        Some(path) => write_file(path, table)?,
        None => print!("{table}"),
    }
    if cert.scanned.len() > 1 {
        for (k0, s) in &cert.scanned {
            println!("k0={k0}: {s}");
        }
    }
    println!("{}", cert.summary);
    Ok(())
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    match args.preset {
        PresetName::QuadraticKernel => {
            let (a, b) = random_least_squares_data(args.rows, args.cols, args.seed);
            write_file(&args.out.join("A.txt"), textio::write_matrix(&a))?;
            let b = nalgebra::DMatrix::from_column_slice(b.len(), 1, b.as_slice());
            write_file(&args.out.join("b.txt"), textio::write_matrix(&b))?;
        }
        PresetName::LogisticMushrooms => {
            write_file(&args.out.join("mushrooms.libsvm"), write_libsvm(&synthetic_mushrooms(args.seed)))?;
        }
        PresetName::Deblur => {
            let mut preset = BenchPreset::new(PresetName::Deblur);
            preset.size = args.size;
            let spec = preset.image_spec(args.size, args.size);
            let clean = phantom(args.size, args.size);
            let blurred = synthesize_blurred(&spec, &clean, args.seed)?;
            write_file(&args.out.join("clean.pgm"), write_pgm(&clean, args.size, args.size)?)?;
            write_file(&args.out.join("blurred.pgm"), write_pgm(&blurred, args.size, args.size)?)?;
        }
    }
    Ok(())
}
