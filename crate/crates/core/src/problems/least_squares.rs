use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CompositeProblem, SmoothObjective};
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, pseudo_solve, SymMatrix, Vector, DEFAULT_RANK_TOL};

/// `f(x) = ½‖Ax − b‖²`.
struct LeastSquares {
    a: DMatrix<f64>,
    b: Vector,
    ata: SymMatrix,
}

impl SmoothObjective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * (&self.a * x - &self.b).norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.a.tr_mul(&(&self.a * x - &self.b))
    }

    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        let res = &self.a * x - &self.b;
        (0.5 * res.norm_squared(), self.a.tr_mul(&res))
    }

    fn hessian(&self, _x: &Vector) -> Option<SymMatrix> {
        Some(self.ata.clone())
    }
}

pub fn make_least_squares(a: DMatrix<f64>, b: Vector) -> Result<CompositeProblem> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("least squares needs m, n >= 1".into()));
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least squares data"));
    }
    let ata = SymMatrix::from_upper(a.tr_mul(&a));
    let l = power_iteration(n, |v| ata.mul_vec(v), 1e-8, 100_000);
    let atb = a.tr_mul(&b);
    let obj = LeastSquares { a, b, ata };
    let x_star = pseudo_solve(&obj.ata, &atb, DEFAULT_RANK_TOL)?;
    let f_star = obj.value(&x_star);
    // A zero matrix has L = 0; any positive step constant is valid then.
    let l = if l > 0.0 { l } else { 1.0 };
    Ok(CompositeProblem::new("least-squares", Arc::new(obj), l, 0.0)?.with_f_star(Some(f_star)))
}

/// Standard-normal `A` (row-major draw order) followed by `b`, from a
/// ChaCha8 stream seeded with `seed`.
pub fn random_least_squares_data(m: usize, n: usize, seed: u64) -> (DMatrix<f64>, Vector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let b = Vector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    (a, b)
}

pub fn gen_random_least_squares(m: usize, n: usize, seed: u64) -> Result<CompositeProblem> {
    let (a, b) = random_least_squares_data(m, n, seed);
    let mut p = make_least_squares(a, b)?;
    p.name = "quadratic-kernel".into();
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{directional_fd, hessian_fd_error};
    use nalgebra::dmatrix;

    #[test]
    fn identity_examples() {
        let p = make_least_squares(DMatrix::identity(2, 2), Vector::zeros(2)).unwrap();
        assert_eq!(p.f_value(&Vector::zeros(2)), 0.0);
        assert_eq!(p.f_grad(&Vector::zeros(2)), Vector::zeros(2));
        let p = make_least_squares(DMatrix::identity(2, 2), Vector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(p.f_grad(&Vector::zeros(2)).as_slice(), &[-1.0, -1.0]);
        assert!((p.lipschitz - 1.0).abs() < 1e-12);
        assert_eq!(p.hessian_lipschitz, 0.0);
    }

    #[test]
    fn kernel_example() {
        let a = dmatrix![1.0, 0.0; 0.0, 0.0; 0.0, 0.0];
        let p = make_least_squares(a, Vector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let h = p.f_hess(&Vector::zeros(2)).unwrap();
        assert_eq!(h, SymMatrix::from_diagonal(&[1.0, 0.0]));
        for x in [[0.3, -2.0], [5.0, 1.0]] {
            let g = p.f_grad(&Vector::from_row_slice(&x));
            assert_eq!(g[1], 0.0);
        }
        assert!((p.f_star.unwrap() - 6.5).abs() < 1e-12);
    }

    #[test]
    fn random_instances() {
        let p = gen_random_least_squares(1, 1, 7).unwrap();
        let (a, _) = random_least_squares_data(1, 1, 7);
        assert!((p.lipschitz - a[(0, 0)].powi(2)).abs() <= 1e-12 * p.lipschitz);
        let (a1, b1) = random_least_squares_data(20, 30, 3);
        let (a2, b2) = random_least_squares_data(20, 30, 3);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn preset_sized_instance_has_kernel() {
        let p = gen_random_least_squares(250, 300, 0).unwrap();
        let ev = p.f_hess(&Vector::zeros(300)).unwrap().eigenvalues().unwrap();
        let lmax = *ev.last().unwrap();
        let rank = ev.iter().filter(|&&v| v > 1e-10 * lmax).count();
        assert!(rank <= 250);
        assert!((p.lipschitz - lmax).abs() <= 1e-6 * lmax);
        assert!(p.f_star.unwrap().abs() < 1e-12 * (1.0 + p.f_value(&Vector::zeros(300))));
    }

    #[test]
    fn derivative_checks() {
        let p = gen_random_least_squares(8, 5, 11).unwrap();
        let (x, _) = random_least_squares_data(5, 1, 12);
        let x = x.column(0).into_owned();
        let (dir, _) = random_least_squares_data(5, 1, 13);
        let (fd, an) = directional_fd(&p, &x, &dir.column(0).into_owned());
        assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()));
        assert!(hessian_fd_error(&p, &x) < 1e-4);
    }
}
