//! Composite objectives `F = g + f` and the benchmark problem families.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, Vector};

mod deblur;
mod least_squares;
mod libsvm;
mod logistic;
mod pgm;

pub use deblur::{make_deblur, phantom, synthesize_blurred, ImageProblemSpec};
pub use least_squares::{gen_random_least_squares, make_least_squares, random_least_squares_data};
pub use libsvm::{parse_libsvm, synthetic_mushrooms, write_libsvm, Dataset, MUSHROOM_CARDINALITIES};
pub use logistic::{make_logistic, LogisticOptions};
pub use pgm::{load_pgm, write_pgm};

/// Smooth part `f` of a composite objective.
pub trait SmoothObjective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> f64;

    fn gradient(&self, x: &Vector) -> Vector;

    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        (self.value(x), self.gradient(x))
    }

    /// Dense Hessian, if the objective provides one.
    fn hessian(&self, _x: &Vector) -> Option<SymMatrix> {
        None
    }
}

/// Separable nonsmooth part `g` with a cheap proximal map.
pub trait SeparableRegularizer: Send + Sync {
    fn value(&self, x: &Vector) -> f64;

    /// `argmin_p g(p) + (weight / 2) ||p - z||^2`.
    fn prox(&self, z: &Vector, weight: f64) -> Vector;
}

/// `g(x) = tau * ||x||_1`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub tau: f64,
}

impl SeparableRegularizer for L1Norm {
    fn value(&self, x: &Vector) -> f64 {
        self.tau * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, z: &Vector, weight: f64) -> Vector {
        let t = self.tau / weight;
        z.map(|v| v.signum() * (v.abs() - t).max(0.0))
    }
}

#[derive(Clone)]
pub enum GKind {
    Zero,
    SeparableProx(Arc<dyn SeparableRegularizer>),
}

impl fmt::Debug for GKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GKind::Zero => write!(f, "Zero"),
            GKind::SeparableProx(_) => write!(f, "SeparableProx"),
        }
    }
}

/// Oracle for `F = g + f` together with the constants the methods rely on:
/// `L` (gradient Lipschitz), `L_H` (Hessian Lipschitz) and, when known, the
/// optimal value.
#[derive(Clone)]
pub struct CompositeProblem {
    pub name: String,
    objective: Arc<dyn SmoothObjective>,
    pub g: GKind,
    pub lipschitz: f64,
    pub hessian_lipschitz: f64,
    pub f_star: Option<f64>,
}

impl fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("g", &self.g)
            .field("lipschitz", &self.lipschitz)
            .field("hessian_lipschitz", &self.hessian_lipschitz)
            .field("f_star", &self.f_star)
            .finish()
    }
}

impl CompositeProblem {
    pub fn new(
        name: impl Into<String>,
        objective: Arc<dyn SmoothObjective>,
        lipschitz: f64,
        hessian_lipschitz: f64,
    ) -> Result<Self> {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gradient Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        if !(hessian_lipschitz.is_finite() && hessian_lipschitz >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Hessian Lipschitz constant must be nonnegative, got {hessian_lipschitz}"
            )));
        }
        Ok(Self {
            name: name.into(),
            objective,
            g: GKind::Zero,
            lipschitz,
            hessian_lipschitz,
            f_star: None,
        })
    }

    pub fn with_regularizer(mut self, g: Arc<dyn SeparableRegularizer>) -> Self {
        self.g = GKind::SeparableProx(g);
        self
    }

    pub fn with_f_star(mut self, f_star: Option<f64>) -> Self {
        self.f_star = f_star;
        self
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &dyn SmoothObjective {
        self.objective.as_ref()
    }

    pub fn has_zero_g(&self) -> bool {
        matches!(self.g, GKind::Zero)
    }

    pub fn f_value(&self, x: &Vector) -> f64 {
        self.objective.value(x)
    }

    pub fn f_grad(&self, x: &Vector) -> Vector {
        self.objective.gradient(x)
    }

    pub fn f_value_and_grad(&self, x: &Vector) -> (f64, Vector) {
        self.objective.value_and_gradient(x)
    }

    pub fn f_hess(&self, x: &Vector) -> Result<SymMatrix> {
        self.objective.hessian(x).ok_or(Error::HessianUnavailable)
    }

    pub fn g_value(&self, x: &Vector) -> f64 {
        match &self.g {
            GKind::Zero => 0.0,
            GKind::SeparableProx(g) => g.value(x),
        }
    }

    /// `F(x) = f(x) + g(x)`.
    pub fn value(&self, x: &Vector) -> f64 {
        self.f_value(x) + self.g_value(x)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Central-difference check of the gradient along `dir`.
    pub fn directional_fd(p: &CompositeProblem, x: &Vector, dir: &Vector) -> (f64, f64) {
        let h = 1e-6 * (1.0 + x.norm());
        let fd = (p.f_value(&(x + dir * h)) - p.f_value(&(x - dir * h))) / (2.0 * h);
        (fd, p.f_grad(x).dot(dir))
    }

    /// Max relative deviation between finite differences of the gradient and
    /// the Hessian, column by column.
    pub fn hessian_fd_error(p: &CompositeProblem, x: &Vector) -> f64 {
        let n = p.dim();
        let h = 1e-6 * (1.0 + x.norm());
        let hess = p.f_hess(x).unwrap();
        let mut worst: f64 = 0.0;
        let scale = 1.0 + hess.frobenius_norm();
        for j in 0..n {
            let mut e = Vector::zeros(n);
            e[j] = h;
            let col = (p.f_grad(&(x + &e)) - p.f_grad(&(x - &e))) / (2.0 * h);
            let diff = (col - hess.as_matrix().column(j)).norm();
            worst = worst.max(diff / scale);
        }
        worst
    }
}
