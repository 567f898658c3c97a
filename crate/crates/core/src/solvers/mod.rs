//! The regularized SR1 methods, first- and second-order baselines, and the
//! trace types they produce.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::problems::CompositeProblem;
use crate::sr1::{RestartPolicy, DEFAULT_SKIP_TOL};
use crate::subproblem::DEFAULT_RTOL;

mod first_order;
mod newton;
mod quasi_newton;
pub mod trace_io;

pub use first_order::{run_first_order, FirstOrderMethod, ARMIJO_C, HB_BETA, MAX_HALVINGS};
pub use newton::{run_newton, NewtonMethod};
pub use quasi_newton::{classical_sr1, cubic_sr1_pqn, cubic_sr1_qn_pl, grad_sr1_pqn};

/// Optional per-step diagnostics for checking the analysis lemmas on a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AuditLevel {
    #[default]
    Off,
    /// Spectral norm and trace of the metric, model residuals.
    Norms,
    /// Additionally the sandwich `J_k ⪯ G_{k+1} ⪯ G̃` with `J_k` from Simpson
    /// quadrature on `panels` panels. Small problems only.
    Sandwich { panels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// `κ̄`; defaults to `2L`.
    pub kappa_bar: Option<f64>,
    /// Stopping tolerance on `‖F′(x_k)‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub skip_tol: f64,
    pub restart_policy: RestartPolicy,
    /// Recorded for reproducibility; all methods are deterministic.
    pub seed: u64,
    pub lipschitz_override: Option<f64>,
    pub hessian_lipschitz_override: Option<f64>,
    pub subproblem_rtol: f64,
    /// When false, `elapsed_s` is recorded as 0 so traces are bit-for-bit
    /// reproducible.
    pub record_time: bool,
    pub audit: AuditLevel,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kappa_bar: None,
            tol: 1e-10,
            max_iter: 1000,
            skip_tol: DEFAULT_SKIP_TOL,
            restart_policy: RestartPolicy::LipschitzIdentity,
            seed: 0,
            lipschitz_override: None,
            hessian_lipschitz_override: None,
            subproblem_rtol: DEFAULT_RTOL,
            record_time: true,
            audit: AuditLevel::Off,
        }
    }
}

/// Problem constants after applying configuration overrides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub n: usize,
    pub lipschitz: f64,
    pub hessian_lipschitz: f64,
    pub kappa_bar: f64,
}

impl SolverConfig {
    pub fn resolve(&self, problem: &CompositeProblem) -> Result<Constants> {
        let lipschitz = self.lipschitz_override.unwrap_or(problem.lipschitz);
        let hessian_lipschitz = self.hessian_lipschitz_override.unwrap_or(problem.hessian_lipschitz);
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::Config(format!("L must be positive, got {lipschitz}")));
        }
        if !(hessian_lipschitz >= 0.0 && hessian_lipschitz.is_finite()) {
            return Err(Error::Config(format!("L_H must be nonnegative, got {hessian_lipschitz}")));
        }
        let kappa_bar = self.kappa_bar.unwrap_or(2.0 * lipschitz);
        if !(kappa_bar >= lipschitz && kappa_bar.is_finite()) {
            return Err(Error::Config(format!("kappa_bar = {kappa_bar} must be at least L = {lipschitz}")));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if !(self.subproblem_rtol > 0.0) {
            return Err(Error::Config("subproblem_rtol must be positive".into()));
        }
        if let AuditLevel::Sandwich { panels } = self.audit {
            if panels < 2 || panels % 2 != 0 {
                return Err(Error::Config(format!("quadrature panels must be even and >= 2, got {panels}")));
            }
        }
        Ok(Constants {
            n: problem.dim(),
            lipschitz,
            hessian_lipschitz,
            kappa_bar,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    /// `F(x_k)`.
    pub f: f64,
    /// `‖F′(x_k)‖`.
    pub gnorm: f64,
    /// Length of the step that produced `x_k` (0 for `k = 0`).
    pub r: f64,
    /// Regularization used with that step.
    pub lambda: f64,
    /// Trace of the metric carried into the next step.
    pub trace_g: f64,
    pub restarted: bool,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIter,
    SubproblemFailure { iteration: usize, message: String },
}

/// Per-step diagnostics for step `k` (from `x_k` to `x_{k+1}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub k: usize,
    /// Spectral norm of the metric the SR1 update starts from
    /// (`G̃_{k+1}` for cubic-sr1, `G̃_k` for grad-sr1).
    pub base_norm: f64,
    pub base_trace: f64,
    /// Trace of the metric used by the next step's model.
    pub next_model_trace: f64,
    /// `λ_min(G_{k+1} − J_k)`.
    pub sandwich_lower: Option<f64>,
    /// `λ_min(G̃ − G_{k+1})`.
    pub sandwich_upper: Option<f64>,
    pub model_residual: f64,
    pub hard_case: bool,
    pub sr1_skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub method: Method,
    pub records: Vec<IterateRecord>,
    pub x_final: Vector,
    pub termination: Termination,
    pub restart_total: usize,
    /// Trial steps rejected because rounding had broken the metric order,
    /// each followed by an SR1 update on the rejected pair.
    pub metric_repairs: usize,
    pub constants: Constants,
    pub f_star: Option<f64>,
    pub audit: Vec<AuditRecord>,
}

impl RunTrace {
    pub fn last(&self) -> &IterateRecord {
        self.records.last().expect("traces are nonempty")
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// First iteration index with `gnorm ≤ level`.
    pub fn first_below(&self, level: f64) -> Option<usize> {
        self.records.iter().find(|r| r.gnorm <= level).map(|r| r.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Classical SR1: cubic-sr1 with `L_H` forced to zero.
    Sr1,
    CubicSr1,
    GradSr1,
    CubicSr1Qn,
    Gd,
    Nag,
    Hb,
    GdBt,
    HbBt,
    CubicNewton,
    GradNewton,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Sr1,
        Method::CubicSr1,
        Method::GradSr1,
        Method::CubicSr1Qn,
        Method::Gd,
        Method::Nag,
        Method::Hb,
        Method::GdBt,
        Method::HbBt,
        Method::CubicNewton,
        Method::GradNewton,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sr1 => "sr1",
            Method::CubicSr1 => "cubic-sr1",
            Method::GradSr1 => "grad-sr1",
            Method::CubicSr1Qn => "cubic-sr1-qn",
            Method::Gd => "gd",
            Method::Nag => "nag",
            Method::Hb => "hb",
            Method::GdBt => "gd-bt",
            Method::HbBt => "hb-bt",
            Method::CubicNewton => "cubic-newton",
            Method::GradNewton => "grad-newton",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown method {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Runs `method` from `x0`.
pub fn run(method: Method, problem: &CompositeProblem, x0: &Vector, cfg: &SolverConfig) -> Result<RunTrace> {
    match method {
        Method::Sr1 => classical_sr1(problem, x0, cfg),
        Method::CubicSr1 => cubic_sr1_pqn(problem, x0, cfg),
        Method::GradSr1 => grad_sr1_pqn(problem, x0, cfg),
        Method::CubicSr1Qn => cubic_sr1_qn_pl(problem, x0, cfg),
        Method::Gd => run_first_order(FirstOrderMethod::Gd, problem, x0, cfg),
        Method::Nag => run_first_order(FirstOrderMethod::Nag, problem, x0, cfg),
        Method::Hb => run_first_order(FirstOrderMethod::Hb, problem, x0, cfg),
        Method::GdBt => run_first_order(FirstOrderMethod::GdBt, problem, x0, cfg),
        Method::HbBt => run_first_order(FirstOrderMethod::HbBt, problem, x0, cfg),
        Method::CubicNewton => run_newton(NewtonMethod::CubicNewton, problem, x0, cfg),
        Method::GradNewton => run_newton(NewtonMethod::GradNewton, problem, x0, cfg),
    }
}

/// Lower estimate of `inf F` shared by the run-time bound checks and the
/// certificates: the known optimal value when available, capped by the
/// smallest value seen on the run.
pub fn resolve_f_inf(f_star: Option<f64>, records: &[IterateRecord]) -> f64 {
    let seen = records.iter().map(|r| r.f).fold(f64::INFINITY, f64::min);
    match f_star {
        Some(v) => v.min(seen),
        None => seen,
    }
}

/// `L_H·R` with `R = (6(F(x_0) − inf F)/L_H)^{1/3}`, written as
/// `L_H^{2/3} (6Δ)^{1/3}` so that it is 0 (not NaN) for `L_H = 0`.
pub fn lh_times_radius(hessian_lipschitz: f64, f0_gap: f64) -> f64 {
    hessian_lipschitz.powf(2.0 / 3.0) * (6.0 * f0_gap.max(0.0)).cbrt()
}

/// Constant `D` in `‖F′(x_{k+1})‖ ≤ D r_k` for cubic-sr1.
pub fn cubic_gradient_bound(c: &Constants, f0_gap: f64) -> f64 {
    let n = c.n as f64;
    2.0 * n * c.kappa_bar + 2.0 * c.lipschitz + 2.0 * lh_times_radius(c.hessian_lipschitz, f0_gap)
}

/// Bound on `‖G̃_{k+1}‖` for cubic-sr1.
pub fn cubic_metric_bound(c: &Constants, f0_gap: f64) -> f64 {
    let n = c.n as f64;
    2.0 * n * c.kappa_bar + c.lipschitz + 2.0 * lh_times_radius(c.hessian_lipschitz, f0_gap)
}

/// Records iterates and wall time.
pub(crate) struct Recorder {
    start: Instant,
    record_time: bool,
    pub records: Vec<IterateRecord>,
}

impl Recorder {
    pub fn new(cfg: &SolverConfig) -> Self {
        Self {
            start: Instant::now(),
            record_time: cfg.record_time,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, f: f64, gnorm: f64, r: f64, lambda: f64, trace_g: f64, restarted: bool) {
        let elapsed_s = if self.record_time {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        self.records.push(IterateRecord {
            k: self.records.len(),
            f,
            gnorm,
            r,
            lambda,
            trace_g,
            restarted,
            elapsed_s,
        });
    }
}

pub(crate) fn require_zero_g(problem: &CompositeProblem, method: Method) -> Result<()> {
    if problem.has_zero_g() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{method} is implemented for smooth objectives (g = 0) only"
        )))
    }
}

pub(crate) fn check_start(problem: &CompositeProblem, x0: &Vector) -> Result<()> {
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("starting point"));
    }
    Ok(())
}

pub(crate) fn failure(iteration: usize, message: impl fmt::Display) -> Termination {
    Termination::SubproblemFailure {
        iteration,
        message: message.to_string(),
    }
}
