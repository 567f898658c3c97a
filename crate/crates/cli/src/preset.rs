//! Named benchmark presets and their overridable parameters.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sr1qn::problems::{
    gen_random_least_squares, load_pgm, make_deblur, make_least_squares, make_logistic, parse_libsvm, phantom,
    synthesize_blurred, synthetic_mushrooms, CompositeProblem, ImageProblemSpec, LogisticOptions,
};
use sr1qn::solvers::{Method, SolverConfig};
use sr1qn::sr1::RestartPolicy;
use sr1qn::Vector;

use crate::textio::parse_matrix;
use crate::CliError;

/// Environment variable naming a libsvm `mushrooms` file, used when no
/// `--data` path is given.
pub const MUSHROOMS_ENV: &str = "SR1QN_MUSHROOMS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    QuadraticKernel,
    LogisticMushrooms,
    Deblur,
}

impl PresetName {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::QuadraticKernel => "quadratic-kernel",
            PresetName::LogisticMushrooms => "logistic-mushrooms",
            PresetName::Deblur => "deblur",
        }
    }
}

/// Fully resolved preset: problem parameters, method list and solver
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPreset {
    pub name: PresetName,
    pub seed: u64,
    /// Quadratic: directory with `A.txt` and `b.txt`; logistic: libsvm file;
    /// deblur: observed PGM image.
    pub data: Option<PathBuf>,
    pub rows: usize,
    pub cols: usize,
    /// Side of the square synthetic image.
    pub size: usize,
    pub mu: f64,
    pub eps: f64,
    pub rho: f64,
    /// `None` keeps the problem's own value.
    pub hessian_lipschitz: Option<f64>,
    pub tight_lipschitz: bool,
    pub methods: Vec<Method>,
    pub solver: SolverConfig,
}

/// Partial preset, as read from a config file or assembled from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetOverrides {
    pub preset: Option<PresetName>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub size: Option<usize>,
    pub mu: Option<f64>,
    pub eps: Option<f64>,
    pub rho: Option<f64>,
    pub hessian_lipschitz: Option<f64>,
    pub tight_lipschitz: Option<bool>,
    pub methods: Option<Vec<Method>>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub kappa_bar: Option<f64>,
    pub lipschitz: Option<f64>,
    pub restart_policy: Option<RestartPolicy>,
    pub record_time: Option<bool>,
}

impl PresetOverrides {
    /// Fields set in `other` win.
    pub fn merge(self, other: PresetOverrides) -> PresetOverrides {
        PresetOverrides {
            preset: other.preset.or(self.preset),
            seed: other.seed.or(self.seed),
            data: other.data.or(self.data),
            rows: other.rows.or(self.rows),
            cols: other.cols.or(self.cols),
            size: other.size.or(self.size),
            mu: other.mu.or(self.mu),
            eps: other.eps.or(self.eps),
            rho: other.rho.or(self.rho),
            hessian_lipschitz: other.hessian_lipschitz.or(self.hessian_lipschitz),
            tight_lipschitz: other.tight_lipschitz.or(self.tight_lipschitz),
            methods: other.methods.or(self.methods),
            tol: other.tol.or(self.tol),
            max_iter: other.max_iter.or(self.max_iter),
            kappa_bar: other.kappa_bar.or(self.kappa_bar),
            lipschitz: other.lipschitz.or(self.lipschitz),
            restart_policy: other.restart_policy.or(self.restart_policy),
            record_time: other.record_time.or(self.record_time),
        }
    }

    /// Reads a config file: either a bare overrides object or a run metadata
    /// sidecar, whose `config` field is used.
    pub fn load(path: &Path) -> Result<PresetOverrides, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Json(path.display().to_string(), e.to_string()))?;
        let inner = match value.get("config") {
            Some(c) if value.get("method").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Json(path.display().to_string(), e.to_string()))
    }

    pub fn resolve(self) -> Result<BenchPreset, CliError> {
        let name = self
            .preset
            .ok_or_else(|| CliError::Usage("a preset is required (--preset or a config file)".into()))?;
        let mut p = BenchPreset::new(name);
        let o = self;
        p.seed = o.seed.unwrap_or(p.seed);
        p.data = o.data.or(p.data);
        p.rows = o.rows.unwrap_or(p.rows);
        p.cols = o.cols.unwrap_or(p.cols);
        p.size = o.size.unwrap_or(p.size);
        p.mu = o.mu.unwrap_or(p.mu);
        p.eps = o.eps.unwrap_or(p.eps);
        p.rho = o.rho.unwrap_or(p.rho);
        p.hessian_lipschitz = o.hessian_lipschitz.or(p.hessian_lipschitz);
        p.tight_lipschitz = o.tight_lipschitz.unwrap_or(p.tight_lipschitz);
        p.methods = o.methods.unwrap_or(p.methods);
        let s = &mut p.solver;
        s.seed = p.seed;
        s.tol = o.tol.unwrap_or(s.tol);
        s.max_iter = o.max_iter.unwrap_or(s.max_iter);
        s.kappa_bar = o.kappa_bar.or(s.kappa_bar);
        s.lipschitz_override = o.lipschitz.or(s.lipschitz_override);
        s.restart_policy = o.restart_policy.unwrap_or(s.restart_policy);
        s.record_time = o.record_time.unwrap_or(s.record_time);
        if p.methods.is_empty() {
            return Err(CliError::Usage("method list is empty".into()));
        }
        Ok(p)
    }
}

impl From<&BenchPreset> for PresetOverrides {
    fn from(p: &BenchPreset) -> Self {
        PresetOverrides {
            preset: Some(p.name),
            seed: Some(p.seed),
            data: p.data.clone(),
            rows: Some(p.rows),
            cols: Some(p.cols),
            size: Some(p.size),
            mu: Some(p.mu),
            eps: Some(p.eps),
            rho: Some(p.rho),
            hessian_lipschitz: p.hessian_lipschitz,
            tight_lipschitz: Some(p.tight_lipschitz),
            methods: Some(p.methods.clone()),
            tol: Some(p.solver.tol),
            max_iter: Some(p.solver.max_iter),
            kappa_bar: p.solver.kappa_bar,
            lipschitz: p.solver.lipschitz_override,
            restart_policy: Some(p.solver.restart_policy),
            record_time: Some(p.solver.record_time),
        }
    }
}

/// A problem ready to run.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: CompositeProblem,
    pub x0: Vector,
    /// Human-readable origin of the data.
    pub source: String,
}

impl BenchPreset {
    pub fn new(name: PresetName) -> Self {
        let base = BenchPreset {
            name,
            seed: 0,
            data: None,
            rows: 250,
            cols: 300,
            size: 32,
            mu: 0.01,
            eps: 1.0,
            rho: 0.1,
            hessian_lipschitz: None,
            tight_lipschitz: false,
            methods: Vec::new(),
            solver: SolverConfig::default(),
        };
        match name {
            PresetName::QuadraticKernel => BenchPreset {
                methods: vec![Method::Sr1, Method::Gd, Method::Nag],
                solver: SolverConfig {
                    tol: 1e-8,
                    max_iter: 500,
                    ..SolverConfig::default()
                },
                ..base
            },
            PresetName::LogisticMushrooms => BenchPreset {
                hessian_lipschitz: Some(4.0),
                methods: vec![
                    Method::CubicSr1,
                    Method::GradSr1,
                    Method::Gd,
                    Method::Nag,
                    Method::CubicNewton,
                    Method::GradNewton,
                ],
                solver: SolverConfig {
                    tol: 1e-10,
                    max_iter: 10_000,
                    ..SolverConfig::default()
                },
                ..base
            },
            PresetName::Deblur => BenchPreset {
                mu: 0.001,
                hessian_lipschitz: Some(10.0),
                methods: vec![Method::CubicSr1, Method::CubicNewton, Method::GdBt, Method::HbBt],
                solver: SolverConfig {
                    tol: 1e-10,
                    max_iter: 300,
                    restart_policy: RestartPolicy::CurrentHessian,
                    ..SolverConfig::default()
                },
                ..base
            },
        }
    }

    /// Builds the problem and starting point: the origin for the quadratic
    /// and logistic presets, the observed image for deblurring.
    pub fn build(&self) -> Result<Instance, CliError> {
        match self.name {
            PresetName::QuadraticKernel => {
                let (problem, source) = match &self.data {
                    Some(dir) => {
                        let a = read_matrix(&dir.join("A.txt"))?;
                        let b = read_matrix(&dir.join("b.txt"))?;
                        if b.ncols() != 1 {
                            return Err(CliError::Usage(format!("{}: b must have one column", dir.display())));
                        }
                        let b = b.column(0).into_owned();
                        let mut p = make_least_squares(a, b)?;
                        p.name = self.name.as_str().into();
                        (p, dir.display().to_string())
                    }
                    None => (
                        gen_random_least_squares(self.rows, self.cols, self.seed)?,
                        format!("gaussian {}x{} seed {}", self.rows, self.cols, self.seed),
                    ),
                };
                let x0 = Vector::zeros(problem.dim());
                Ok(Instance { problem, x0, source })
            }
            PresetName::LogisticMushrooms => {
                let path = self.data.clone().or_else(|| std::env::var_os(MUSHROOMS_ENV).map(PathBuf::from));
                let (data, source) = match path {
                    Some(path) => {
                        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                        (parse_libsvm(&text)?, path.display().to_string())
                    }
                    None => (synthetic_mushrooms(self.seed), format!("synthetic mushrooms seed {}", self.seed)),
                };
                let opts = LogisticOptions {
                    mu: self.mu,
                    eps: self.eps,
                    hessian_lipschitz_override: self.hessian_lipschitz,
                    tight_lipschitz: self.tight_lipschitz,
                };
                let mut problem = make_logistic(&data, opts)?;
                problem.name = self.name.as_str().into();
                let x0 = Vector::zeros(problem.dim());
                Ok(Instance { problem, x0, source })
            }
            PresetName::Deblur => {
                let (b, height, width, source) = match &self.data {
                    Some(path) => {
                        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
                        let (b, h, w) = load_pgm(&bytes)?;
                        (b, h, w, path.display().to_string())
                    }
                    None => {
                        let spec = self.image_spec(self.size, self.size);
                        let b = synthesize_blurred(&spec, &phantom(self.size, self.size), self.seed)?;
                        (b, self.size, self.size, format!("phantom {0}x{0} seed {1}", self.size, self.seed))
                    }
                };
                let spec = self.image_spec(height, width);
                let mut problem = make_deblur(&spec, b.clone())?;
                problem.name = self.name.as_str().into();
                Ok(Instance { problem, x0: b, source })
            }
        }
    }

    pub fn image_spec(&self, height: usize, width: usize) -> ImageProblemSpec {
        let mut spec = ImageProblemSpec::standard(height, width);
        spec.mu = self.mu;
        spec.rho = self.rho;
        if let Some(lh) = self.hessian_lipschitz {
            spec.hessian_lipschitz = lh;
        }
        spec
    }
}

fn read_matrix(path: &Path) -> Result<nalgebra::DMatrix<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
