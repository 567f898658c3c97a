//! Dense symmetric linear algebra.
//!
//! Matrices are stored as `nalgebra` dense matrices. Factorizations and the
//! symmetric eigensolver are delegated to `faer` (sequential build), which is
//! considerably faster than the `nalgebra` routines at the problem sizes the
//! benchmarks use (n up to a few thousand).

use faer::Side;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Default relative rank tolerance for [`pseudo_solve`].
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Dense symmetric matrix. Symmetry is exact: `m[(i, j)] == m[(j, i)]` bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps a square matrix, rejecting non-finite entries and any asymmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                if m[(i, j)].to_bits() != m[(j, i)].to_bits() {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds a symmetric matrix from the upper triangle of `m`, discarding
    /// whatever is stored below the diagonal.
    pub fn from_upper(mut m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "from_upper needs a square matrix");
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(i, j)] = m[(j, i)];
            }
        }
        Self(m)
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, alpha: f64) -> Self {
        Self(DMatrix::from_diagonal_element(n, n, alpha))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sum of the diagonal, accumulated in index order.
    pub fn trace(&self) -> f64 {
        let mut t = 0.0;
        for i in 0..self.order() {
            t += self.0[(i, i)];
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        &self.0 * v
    }

    /// `u^T M u`.
    pub fn quad_form(&self, u: &Vector) -> f64 {
        u.dot(&(&self.0 * u))
    }

    /// `M + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..self.order() {
            m[(i, i)] += shift;
        }
        Self(m)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(&self.0 * alpha)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `M + coeff * v v^T`, computed on the upper triangle and mirrored.
    pub fn rank_one_update(&self, v: &Vector, coeff: f64) -> Self {
        let n = self.order();
        let mut m = self.0.clone();
        for j in 0..n {
            let cj = coeff * v[j];
            for i in 0..=j {
                m[(i, j)] += v[i] * cj;
            }
        }
        Self::from_upper(m)
    }

    /// Lower bound on the smallest eigenvalue from Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        let n = self.order();
        let mut lo = f64::INFINITY;
        for i in 0..n {
            let mut radius = 0.0;
            for j in 0..n {
                if j != i {
                    radius += self.0[(i, j)].abs();
                }
            }
            lo = lo.min(self.0[(i, i)] - radius);
        }
        if n == 0 {
            0.0
        } else {
            lo
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if self.order() == 0 {
            return Ok(Vec::new());
        }
        to_faer(&self.0)
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::EigenFailure {
                order: self.order(),
                residual: f64::INFINITY,
            })
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// Operator 2-norm, i.e. the largest eigenvalue magnitude.
    pub fn spectral_norm(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev
            .first()
            .map(|lo| lo.abs().max(ev.last().unwrap().abs()))
            .unwrap_or(0.0))
    }
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn check_vec(v: &Vector, what: &'static str, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Eigendecomposition `M = Q diag(values) Q^T` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigDecomp {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        &self.vectors * d * self.vectors.transpose()
    }
}

pub fn eig_sym(m: &SymMatrix) -> Result<EigDecomp> {
    let n = m.order();
    if n == 0 {
        return Ok(EigDecomp {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let evd = to_faer(m.as_matrix())
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenFailure {
            order: n,
            residual: f64::INFINITY,
        })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure {
            order: n,
            residual: f64::NAN,
        });
    }
    Ok(EigDecomp { values, vectors })
}

/// Cholesky factor `L` of `M + shift * I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    pub fn factor(m: &SymMatrix, shift: f64) -> Result<Self> {
        let n = m.order();
        let llt = faer::Mat::from_fn(n, n, |i, j| {
            if i == j {
                m.get(i, j) + shift
            } else {
                m.get(i, j)
            }
        })
        .llt(Side::Lower)
        .map_err(|_| Error::NotPositiveDefinite { shift })?;
        let lf = llt.L();
        let l = DMatrix::from_fn(n, n, |i, j| if i >= j { lf[(i, j)] } else { 0.0 });
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite { shift });
        }
        Ok(Self { l })
    }

    /// `(L L^T)^{-1} b`.
    pub fn solve(&self, b: &Vector) -> Vector {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &Vector) -> Vector {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }
}

/// Solves `(M + sigma I) s = b` by Cholesky with one step of iterative
/// refinement. Fails with [`Error::NotPositiveDefinite`] when the shifted
/// matrix cannot be factored, which callers use as a signal to raise sigma.
pub fn solve_shifted(m: &SymMatrix, sigma: f64, b: &Vector) -> Result<Vector> {
    check_vec(b, "right-hand side", m.order())?;
    if !sigma.is_finite() {
        return Err(Error::NonFinite("shift"));
    }
    let chol = Cholesky::factor(m, sigma)?;
    Ok(refined_solve(m, sigma, &chol, b))
}

pub(crate) fn refined_solve(m: &SymMatrix, sigma: f64, chol: &Cholesky, b: &Vector) -> Vector {
    let mut x = chol.solve(b);
    let r = b - (m.mul_vec(&x) + &x * sigma);
    x += chol.solve(&r);
    x
}

/// True iff `B - A` has smallest eigenvalue at least `-tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    Ok(loewner_gap(a, b)? >= -tol)
}

/// Smallest eigenvalue of `B - A`.
pub fn loewner_gap(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.order() != b.order() {
        return Err(Error::DimensionMismatch {
            expected: a.order(),
            found: b.order(),
        });
    }
    b.sub(a).min_eigenvalue()
}

/// Least-norm minimizer of `||M s - b||` for positive semidefinite `M`.
/// Eigencomponents with eigenvalue at most `rank_tol * lambda_max` are
/// treated as kernel and dropped.
pub fn pseudo_solve(m: &SymMatrix, b: &Vector, rank_tol: f64) -> Result<Vector> {
    check_vec(b, "right-hand side", m.order())?;
    let evd = eig_sym(m)?;
    Ok(pseudo_solve_with(&evd, b, rank_tol))
}

pub(crate) fn pseudo_solve_with(evd: &EigDecomp, b: &Vector, rank_tol: f64) -> Vector {
    let n = evd.values.len();
    let mut s = Vector::zeros(n);
    let lmax = evd.values.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return s;
    }
    let cutoff = rank_tol * lmax;
    for (j, &lam) in evd.values.iter().enumerate() {
        if lam <= cutoff {
            continue;
        }
        let q = evd.vectors.column(j);
        let coef = q.dot(b) / lam;
        s.axpy(coef, &q, 1.0);
    }
    s
}

/// Largest eigenvalue of a positive semidefinite operator by power iteration
/// from the all-ones vector, stopped when the eigen-residual is below `rtol`
/// relative to the estimate.
pub fn power_iteration<F>(n: usize, apply: F, rtol: f64, max_iter: usize) -> f64
where
    F: Fn(&Vector) -> Vector,
{
    if n == 0 {
        return 0.0;
    }
    let mut v = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        est = v.dot(&w);
        // The eigen-residual, not the change in the Rayleigh quotient: the
        // latter stalls long before convergence when the top gap is small.
        if (&w - &v * est).norm() <= rtol * est.abs() {
            return est;
        }
        v = w / nw;
    }
    est
}
