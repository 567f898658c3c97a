use std::sync::Arc;

use nalgebra::DMatrix;

use super::{CompositeProblem, Dataset, SmoothObjective};
use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub mu: f64,
    pub eps: f64,
    pub hessian_lipschitz_override: Option<f64>,
    /// Use `Σ‖a_i‖²/(4m) + μ/√ε` instead of the loose `2Σ‖a_i‖² + 2μ`.
    pub tight_lipschitz: bool,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            mu: 0.01,
            eps: 1.0,
            hessian_lipschitz_override: None,
            tight_lipschitz: false,
        }
    }
}

/// `f(x) = (1/m) Σ log(1 + exp(−b_i a_iᵀx)) + μ √(‖x‖² + ε)`.
struct Logistic {
    a: DMatrix<f64>,
    b: Vector,
    mu: f64,
    eps: f64,
}

/// `log(1 + e^t)` without overflow.
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-t})` without overflow.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    fn margins(&self, x: &Vector) -> Vector {
        let ax = &self.a * x;
        ax.component_mul(&self.b)
    }

    fn m(&self) -> f64 {
        self.a.nrows() as f64
    }
}

impl SmoothObjective for Logistic {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        let t = self.margins(x);
        let loss: f64 = t.iter().map(|&ti| log1p_exp(-ti)).sum::<f64>() / self.m();
        loss + self.mu * (x.norm_squared() + self.eps).sqrt()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        let t = self.margins(x);
        let m = self.m();
        let loss: f64 = t.iter().map(|&ti| log1p_exp(-ti)).sum::<f64>() / m;
        // d/dt log(1+e^{-t}) = -σ(-t); chain rule through t_i = b_i a_iᵀx.
        let w = Vector::from_fn(t.len(), |i, _| -self.b[i] * sigmoid(-t[i]) / m);
        let s = (x.norm_squared() + self.eps).sqrt();
        let grad = self.a.tr_mul(&w) + x * (self.mu / s);
        (loss + self.mu * s, grad)
    }

    fn hessian(&self, x: &Vector) -> Option<SymMatrix> {
        let t = self.margins(x);
        let m = self.m();
        let n = self.dim();
        let mut weighted = self.a.clone();
        for i in 0..self.a.nrows() {
            let p = sigmoid(t[i]);
            let d = (p * (1.0 - p) / m).sqrt();
            weighted.row_mut(i).scale_mut(d);
        }
        let mut h = weighted.tr_mul(&weighted);
        let s = (x.norm_squared() + self.eps).sqrt();
        let c1 = self.mu / s;
        let c2 = self.mu / (s * s * s);
        for j in 0..n {
            for i in 0..n {
                h[(i, j)] -= c2 * x[i] * x[j];
            }
            h[(j, j)] += c1;
        }
        Some(SymMatrix::from_upper(h))
    }
}

pub fn make_logistic(data: &Dataset, opts: LogisticOptions) -> Result<CompositeProblem> {
    if data.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(opts.mu >= 0.0 && opts.mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu must be nonnegative, got {}", opts.mu)));
    }
    if !(opts.eps > 0.0 && opts.eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {}", opts.eps)));
    }
    let a = data.features().clone();
    let m = a.nrows() as f64;
    let row_sq: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let sum_sq: f64 = row_sq.iter().sum();
    let max_norm = row_sq.iter().fold(0.0f64, |acc, v| acc.max(v.sqrt()));
    let lipschitz = if opts.tight_lipschitz {
        sum_sq / (4.0 * m) + opts.mu / opts.eps.sqrt()
    } else {
        2.0 * sum_sq + 2.0 * opts.mu
    };
    let l_h = opts.hessian_lipschitz_override.unwrap_or(4.0 * max_norm);
    let obj = Logistic {
        a,
        b: Vector::from_column_slice(data.labels()),
        mu: opts.mu,
        eps: opts.eps,
    };
    CompositeProblem::new("logistic", Arc::new(obj), lipschitz.max(f64::MIN_POSITIVE), l_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::loewner_leq;
    use crate::problems::testing::{directional_fd, hessian_fd_error};
    use crate::problems::synthetic_mushrooms;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn value_at_origin() {
        let data = Dataset::new(dmatrix![1.0, 2.0; -1.0, 0.5], vec![1.0, -1.0]).unwrap();
        let opts = LogisticOptions { mu: 0.3, eps: 2.0, ..Default::default() };
        let p = make_logistic(&data, opts).unwrap();
        let expect = 2f64.ln() + 0.3 * 2f64.sqrt();
        assert!((p.f_value(&Vector::zeros(2)) - expect).abs() < 1e-15);
    }

    #[test]
    fn single_sample_gradient() {
        let data = Dataset::new(dmatrix![1.0], vec![1.0]).unwrap();
        let opts = LogisticOptions { mu: 0.0, ..Default::default() };
        let p = make_logistic(&data, opts).unwrap();
        assert!((p.f_grad(&Vector::zeros(1))[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn constants() {
        let data = Dataset::new(dmatrix![3.0, 4.0; 0.0, 1.0], vec![1.0, -1.0]).unwrap();
        let p = make_logistic(&data, LogisticOptions { mu: 0.5, ..Default::default() }).unwrap();
        assert_eq!(p.lipschitz, 2.0 * 26.0 + 1.0);
        assert_eq!(p.hessian_lipschitz, 20.0);
        let p = make_logistic(
            &data,
            LogisticOptions { mu: 0.5, hessian_lipschitz_override: Some(4.0), tight_lipschitz: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(p.hessian_lipschitz, 4.0);
        assert!((p.lipschitz - (26.0 / 8.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn stable_for_huge_margins() {
        let data = Dataset::new(dmatrix![1.0], vec![1.0]).unwrap();
        let p = make_logistic(&data, LogisticOptions { mu: 0.0, ..Default::default() }).unwrap();
        let x = Vector::from_vec(vec![-1000.0]);
        assert!((p.f_value(&x) - 1000.0).abs() < 1e-9);
        assert!((p.f_grad(&x)[0] + 1.0).abs() < 1e-15);
        assert!(p.f_value(&-x).abs() < 1e-300);
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = Dataset::new(DMatrix::zeros(0, 3), vec![]);
        assert!(matches!(data, Err(Error::EmptyDataset)));
    }

    #[test]
    fn derivatives_and_convexity() {
        let data = synthetic_mushrooms(3).subset(0..300, 0..12);
        let p = make_logistic(&data, LogisticOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = Vector::from_fn(12, |_, _| rng.random_range(-2.0..2.0));
            let d = Vector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
            let (fd, an) = directional_fd(&p, &x, &d);
            assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "{fd} vs {an}");
            assert!(hessian_fd_error(&p, &x) < 1e-4);
            let h = p.f_hess(&x).unwrap();
            assert!(loewner_leq(&SymMatrix::zeros(12), &h, 1e-8).unwrap());
        }
    }
}
