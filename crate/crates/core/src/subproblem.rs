//! Exact solvers for the per-iteration models
//!
//! * cubic: `min ⟨g,s⟩ + ½ sᵀHs + (M/3)‖s‖³`,
//! * quadratic: `min ⟨g,s⟩ + ½ sᵀHs` with `H ≻ 0`,
//! * scalar-metric proximal cubic steps for separable `g`.

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, refined_solve, Cholesky, EigDecomp, SymMatrix, Vector, DEFAULT_RANK_TOL};

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const MAX_INNER_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSolution {
    pub step: Vector,
    /// Multiplier `σ = M‖s‖`.
    pub sigma: f64,
    /// `‖g + Hs + σ s‖`.
    pub residual: f64,
    pub hard_case: bool,
    pub inner_iterations: usize,
}

/// `⟨g,s⟩ + ½ sᵀHs + (M/3)‖s‖³`.
pub fn model_value(h: &SymMatrix, grad: &Vector, m_cubic: f64, s: &Vector) -> f64 {
    grad.dot(s) + 0.5 * h.quad_form(s) + m_cubic / 3.0 * s.norm().powi(3)
}

/// Stationarity residual `‖g + Hs + M‖s‖s‖` of the cubic model.
pub fn model_residual(h: &SymMatrix, grad: &Vector, m_cubic: f64, s: &Vector) -> f64 {
    (grad + h.mul_vec(s) + s * (m_cubic * s.norm())).norm()
}

fn check_inputs(h: &SymMatrix, grad: &Vector) -> Result<()> {
    if grad.len() != h.order() {
        return Err(Error::DimensionMismatch {
            expected: h.order(),
            found: grad.len(),
        });
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model gradient"));
    }
    Ok(())
}

/// `s = −H⁻¹g` for positive definite `H` by Cholesky with one refinement
/// step.
pub fn quad_step(h: &SymMatrix, grad: &Vector, rtol: f64) -> Result<Vector> {
    check_inputs(h, grad)?;
    let chol = Cholesky::factor(h, 0.0)?;
    let s = -refined_solve(h, 0.0, &chol, grad);
    let res = (grad + h.mul_vec(&s)).norm();
    if !(res <= rtol * (1.0 + grad.norm())) {
        return Err(Error::SubproblemNotConverged {
            iterations: 1,
            lo: 0.0,
            hi: 0.0,
            residual: res,
        });
    }
    Ok(s)
}

/// Newton step for a positive semidefinite model: the Cholesky route first
/// (so that it coincides with [`quad_step`] whenever `H ≻ 0`), falling back
/// to the least-norm stationary point when `H` is singular. Eigenvalues are
/// inverted by magnitude, so a metric made slightly indefinite by rounding
/// still yields its stationary point.
fn psd_newton_step(h: &SymMatrix, grad: &Vector, rtol: f64) -> Result<CubicSolution> {
    let gnorm = grad.norm();
    let target = rtol * (1.0 + gnorm);
    if let Ok(chol) = Cholesky::factor(h, 0.0) {
        let s = -refined_solve(h, 0.0, &chol, grad);
        let residual = (grad + h.mul_vec(&s)).norm();
        if residual <= target {
            return Ok(CubicSolution {
                step: s,
                sigma: 0.0,
                residual,
                hard_case: false,
                inner_iterations: 1,
            });
        }
    }
    let evd = eig_sym(h)?;
    let s = -stationary_point(&evd, grad);
    let residual = (grad + h.mul_vec(&s)).norm();
    if residual > target {
        return Err(Error::SubproblemNotConverged {
            iterations: 1,
            lo: 0.0,
            hi: 0.0,
            residual,
        });
    }
    Ok(CubicSolution {
        step: s,
        sigma: 0.0,
        residual,
        hard_case: false,
        inner_iterations: 1,
    })
}

/// `H⁺ g` with eigenvalues below `DEFAULT_RANK_TOL·max|λ|` in magnitude
/// treated as zero.
fn stationary_point(evd: &EigDecomp, grad: &Vector) -> Vector {
    let cutoff = DEFAULT_RANK_TOL * evd.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let gamma = evd.vectors.tr_mul(grad);
    let coef = Vector::from_iterator(
        gamma.len(),
        gamma.iter().zip(evd.values.iter()).map(|(g, &l)| if l.abs() > cutoff { g / l } else { 0.0 }),
    );
    &evd.vectors * coef
}

/// Global minimizer of the cubic model `⟨g,s⟩ + ½ sᵀHs + (M/3)‖s‖³`.
///
/// For `M > 0` the minimizer satisfies `(H + σI)s = −g`, `σ = M‖s‖`,
/// `H + σI ⪰ 0`. The multiplier is found by safeguarded Newton iteration on
/// `φ(σ) = 1/‖s(σ)‖ − M/σ` using shifted Cholesky factorizations; if that
/// stalls (near or in the hard case) the problem is finished in the
/// eigenbasis of `H`. `M = 0` reduces to a (least-norm) Newton step; `H` is
/// meant to be positive semidefinite then.
pub fn cubic_step_smooth(h: &SymMatrix, grad: &Vector, m_cubic: f64, rtol: f64) -> Result<CubicSolution> {
    check_inputs(h, grad)?;
    if !(m_cubic >= 0.0 && m_cubic.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cubic weight must be nonnegative, got {m_cubic}"
        )));
    }
    if m_cubic == 0.0 {
        return psd_newton_step(h, grad, rtol);
    }
    let gnorm = grad.norm();
    let target = rtol * (1.0 + gnorm);
    if gnorm == 0.0 {
        return eigen_cubic(h, grad, m_cubic, rtol, 0);
    }

    let mut lo = 0.0f64;
    let mut hi = (-h.gershgorin_lower()).max(0.0) + (m_cubic * gnorm).sqrt();
    let mut sigma = hi;
    let mut best: Option<CubicSolution> = None;
    for it in 1..=MAX_INNER_ITERATIONS {
        let chol = match Cholesky::factor(h, sigma) {
            Ok(c) => c,
            Err(_) => {
                lo = lo.max(sigma);
                if hi - lo <= 1e-15 * hi.max(1e-300) {
                    break;
                }
                sigma = 0.5 * (lo + hi);
                continue;
            }
        };
        let s = -refined_solve(h, sigma, &chol, grad);
        let snorm = s.norm();
        let gap = sigma - m_cubic * snorm;
        let residual = model_residual(h, grad, m_cubic, &s);
        // A relative test on the multiplier keeps the step accurate even when
        // ‖g‖ is tiny; the absolute residual test is the contract.
        if residual <= target && gap.abs() <= 1e-12 * sigma.max(f64::MIN_POSITIVE) + 1e-3 * target {
            return Ok(CubicSolution {
                step: s,
                sigma,
                residual,
                hard_case: false,
                inner_iterations: it,
            });
        }
        if residual <= target && best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(CubicSolution {
                step: s.clone(),
                sigma,
                residual,
                hard_case: false,
                inner_iterations: it,
            });
        }
        if gap > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let w = chol.solve_lower(&s);
        let phi = 1.0 / snorm - m_cubic / sigma;
        let dphi = w.norm_squared() / snorm.powi(3) + m_cubic / (sigma * sigma);
        let newton = sigma - phi / dphi;
        sigma = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if let Some(b) = best {
        return Ok(b);
    }
    eigen_cubic(h, grad, m_cubic, rtol, MAX_INNER_ITERATIONS)
}

/// Cubic model solved in the eigenbasis `H = Q diag(λ) Qᵀ`.
fn eigen_cubic(h: &SymMatrix, grad: &Vector, m: f64, rtol: f64, used: usize) -> Result<CubicSolution> {
    let evd = eig_sym(h)?;
    let n = h.order();
    let gnorm = grad.norm();
    let target = rtol * (1.0 + gnorm);
    let gamma = evd.vectors.tr_mul(grad);
    let lam_min = evd.values[0];
    let scale = evd.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let bottom: Vec<usize> = (0..n)
        .filter(|&i| evd.values[i] - lam_min <= 1e-12 * scale)
        .collect();
    let sigma_lo = (-lam_min).max(0.0);
    let gamma_bottom = bottom.iter().map(|&i| gamma[i] * gamma[i]).sum::<f64>().sqrt();

    let step_at = |sigma: f64, skip_bottom: bool| -> Vector {
        let mut coef = Vector::zeros(n);
        for i in 0..n {
            if skip_bottom && bottom.contains(&i) {
                continue;
            }
            let d = evd.values[i] + sigma;
            if d > 0.0 {
                coef[i] = -gamma[i] / d;
            }
        }
        &evd.vectors * coef
    };

    if gamma_bottom <= 0.1 * target {
        let s_perp = step_at(sigma_lo, true);
        let radius = sigma_lo / m;
        if s_perp.norm() <= radius {
            let alpha = (radius * radius - s_perp.norm_squared()).max(0.0).sqrt();
            let q = evd.vectors.column(bottom[0]).into_owned();
            let plus = &s_perp + &q * alpha;
            let minus = &s_perp - &q * alpha;
            let s = if plus[0] >= minus[0] { plus } else { minus };
            return finish(h, grad, m, s, sigma_lo, alpha > 0.0, used + 1, target);
        }
    }

    // ψ(σ) = ‖s(σ)‖ − σ/M is decreasing on (σ_lo, ∞) and positive near σ_lo.
    let psi = |sigma: f64| step_at(sigma, false).norm() - sigma / m;
    let mut lo = sigma_lo;
    let mut hi = sigma_lo + (m * gnorm).sqrt() + f64::EPSILON * scale;
    while psi(hi) > 0.0 {
        hi = sigma_lo + 2.0 * (hi - sigma_lo);
    }
    let mut iters = 0;
    while iters < 200 && hi - lo > 4.0 * f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if psi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    let sigma = hi;
    let s = step_at(sigma, false);
    finish(h, grad, m, s, sigma, false, used + iters, target)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    h: &SymMatrix,
    grad: &Vector,
    m: f64,
    s: Vector,
    sigma: f64,
    hard_case: bool,
    iterations: usize,
    target: f64,
) -> Result<CubicSolution> {
    let residual = model_residual(h, grad, m, &s);
    if !(residual <= target) {
        return Err(Error::SubproblemNotConverged {
            iterations,
            lo: sigma,
            hi: sigma,
            residual,
        });
    }
    Ok(CubicSolution {
        step: s,
        sigma,
        residual,
        hard_case,
        inner_iterations: iterations,
    })
}

/// Minimizer of `⟨g, x − x_c⟩ + (α/2)‖x − x_c‖² + (M/3)‖x − x_c‖³ + h(x)`
/// for separable `h` given by its proximal map
/// `prox(z, w) = argmin_p h(p) + (w/2)‖p − z‖²`.
///
/// Solves the scalar fixed point `r = ‖prox(x_c − g/(α+Mr), α+Mr) − x_c‖`
/// by bisection on `[0, r_max]`, `r_max = 2‖g‖/α + 1`.
pub fn cubic_step_scalar_prox<P>(
    alpha: f64,
    grad: &Vector,
    m_cubic: f64,
    prox: P,
    x_center: &Vector,
    rtol: f64,
) -> Result<Vector>
where
    P: Fn(&Vector, f64) -> Vector,
{
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if !(m_cubic >= 0.0 && m_cubic.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cubic weight must be nonnegative, got {m_cubic}"
        )));
    }
    if grad.len() != x_center.len() {
        return Err(Error::DimensionMismatch {
            expected: x_center.len(),
            found: grad.len(),
        });
    }
    let point = |r: f64| {
        let w = alpha + m_cubic * r;
        prox(&(x_center - grad / w), w)
    };
    if m_cubic == 0.0 {
        return Ok(point(0.0));
    }
    let excess = |r: f64| (point(r) - x_center).norm() - r;
    let mut lo = 0.0;
    let mut hi = 2.0 * grad.norm() / alpha + 1.0;
    let mut expansions = 0;
    while excess(hi) > 0.0 {
        if expansions == 60 {
            return Err(Error::BracketFailure(format!(
                "step length still exceeds r = {hi:e} after {expansions} expansions"
            )));
        }
        lo = hi;
        hi *= 2.0;
        expansions += 1;
    }
    if excess(lo) < 0.0 {
        return Err(Error::BracketFailure(format!(
            "fixed-point map is not monotone on [{lo:e}, {hi:e}]"
        )));
    }
    for _ in 0..200 {
        if hi - lo <= rtol * (1.0 + hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(point(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{L1Norm, SeparableRegularizer};
    use nalgebra::{dmatrix, DMatrix};
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn newton_step_one_dimensional() {
        let sol = cubic_step_smooth(&SymMatrix::identity(1), &v(&[-1.0]), 0.0, DEFAULT_RTOL).unwrap();
        assert!((sol.step[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pure_cubic_one_dimensional() {
        let sol = cubic_step_smooth(&SymMatrix::zeros(1), &v(&[-1.0]), 3.0, DEFAULT_RTOL).unwrap();
        assert!((sol.step[0] - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((sol.sigma - 3.0 * sol.step[0]).abs() < 1e-10);
        assert!(model_residual(&SymMatrix::zeros(1), &v(&[-1.0]), 3.0, &v(&[1.0 / 3f64.sqrt()])) < 1e-15);
    }

    #[test]
    fn hard_case() {
        let h = SymMatrix::from_diagonal(&[-1.0, 1.0]);
        let g = v(&[0.0, 1.0]);
        let sol = cubic_step_smooth(&h, &g, 1.0, DEFAULT_RTOL).unwrap();
        assert!(sol.hard_case);
        assert!((sol.sigma - 1.0).abs() < 1e-12);
        assert!((sol.step[0] - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((sol.step[1] + 0.5).abs() < 1e-12);
        let mirrored = v(&[-sol.step[0], sol.step[1]]);
        let a = model_value(&h, &g, 1.0, &sol.step);
        assert!((a - model_value(&h, &g, 1.0, &mirrored)).abs() < 1e-15);
        // Grid check of global optimality.
        let mut best = f64::INFINITY;
        for i in -300..=300 {
            for j in -300..=300 {
                let s = v(&[i as f64 * 0.01, j as f64 * 0.01]);
                best = best.min(model_value(&h, &g, 1.0, &s));
            }
        }
        assert!(a <= best + 1e-12);
    }

    #[test]
    fn zero_gradient_cases() {
        let sol = cubic_step_smooth(&SymMatrix::identity(2), &Vector::zeros(2), 1.0, DEFAULT_RTOL).unwrap();
        assert_eq!(sol.step, Vector::zeros(2));
        let h = SymMatrix::from_diagonal(&[-2.0, 1.0]);
        let sol = cubic_step_smooth(&h, &Vector::zeros(2), 1.0, DEFAULT_RTOL).unwrap();
        assert!((sol.step.norm() - 2.0).abs() < 1e-12);
        assert!(model_value(&h, &Vector::zeros(2), 1.0, &sol.step) < 0.0);
    }

    #[test]
    fn kernel_with_zero_weight() {
        let h = SymMatrix::from_diagonal(&[2.0, 0.0]);
        let sol = cubic_step_smooth(&h, &v(&[4.0, 0.0]), 0.0, DEFAULT_RTOL).unwrap();
        assert_eq!(sol.step.as_slice(), &[-2.0, 0.0]);
        // Indefinite metric (rounding-broken SR1): the stationary point.
        let h = SymMatrix::from_diagonal(&[1.0, -1.0]);
        let sol = cubic_step_smooth(&h, &v(&[1.0, 1.0]), 0.0, DEFAULT_RTOL).unwrap();
        assert_eq!(sol.step.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn quad_step_examples() {
        let s = quad_step(&SymMatrix::identity(2), &v(&[1.0, 2.0]), DEFAULT_RTOL).unwrap();
        assert_eq!(s.as_slice(), &[-1.0, -2.0]);
        let s = quad_step(&SymMatrix::from_diagonal(&[2.0, 4.0]), &v(&[2.0, 4.0]), DEFAULT_RTOL).unwrap();
        assert_eq!(s.as_slice(), &[-1.0, -1.0]);
        let h = SymMatrix::new(dmatrix![2.0, 1.0; 1.0, 2.0]).unwrap();
        let s = quad_step(&h, &v(&[3.0, 3.0]), DEFAULT_RTOL).unwrap();
        assert!((s - v(&[-1.0, -1.0])).norm() < 1e-15);
        assert!(matches!(
            quad_step(&SymMatrix::from_diagonal(&[1.0, -1.0]), &v(&[1.0, 1.0]), DEFAULT_RTOL),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn residual_of_zero_step() {
        let g = v(&[3.0, -4.0]);
        assert_eq!(model_residual(&SymMatrix::identity(2), &g, 2.0, &Vector::zeros(2)), 5.0);
    }

    #[test]
    fn scalar_prox_examples() {
        let id = |z: &Vector, _w: f64| z.clone();
        let xc = v(&[1.0, 2.0]);
        let x = cubic_step_scalar_prox(2.0, &v(&[2.0, -4.0]), 0.0, id, &xc, DEFAULT_RTOL).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 4.0]);

        let xc = v(&[0.5]);
        let x = cubic_step_scalar_prox(1.0, &v(&[-1.0]), 3.0, id, &xc, 1e-14).unwrap();
        let r = (-1.0 + 13f64.sqrt()) / 6.0;
        assert!((x[0] - (0.5 + r)).abs() < 1e-12);

        let l1 = L1Norm { tau: 10.0 };
        let xc = v(&[0.0, 0.0]);
        let x = cubic_step_scalar_prox(1.0, &v(&[0.1, -0.2]), 1.0, |z, w| l1.prox(z, w), &xc, DEFAULT_RTOL).unwrap();
        assert_eq!(x, xc);
    }

    #[test]
    fn scalar_prox_matches_smooth_solver_without_g() {
        let g = v(&[0.3, -1.2, 0.7]);
        let xc = v(&[1.0, 0.0, -1.0]);
        let x = cubic_step_scalar_prox(0.5, &g, 2.0, |z: &Vector, _| z.clone(), &xc, 1e-15).unwrap();
        let sol = cubic_step_smooth(&SymMatrix::scaled_identity(3, 0.5), &g, 2.0, DEFAULT_RTOL).unwrap();
        assert!((x - xc - sol.step).norm() < 1e-9);
    }

    #[test]
    fn ill_conditioned_tiny_gradient() {
        // The multiplier must be accurate relative to the spectrum even when
        // ‖g‖ is far below rtol.
        let h = SymMatrix::from_diagonal(&[1e-3, 1.0, 1e3]);
        let g = v(&[1e-12, 1e-12, 1e-12]);
        let sol = cubic_step_smooth(&h, &g, 10.0, DEFAULT_RTOL).unwrap();
        // Oracle: fixed-point iteration on σ = M‖s(σ)‖ in the diagonal basis.
        let mut sigma = 0.0;
        for _ in 0..50 {
            let s = v(&[-1e-12 / (1e-3 + sigma), -1e-12 / (1.0 + sigma), -1e-12 / (1e3 + sigma)]);
            sigma = 10.0 * s.norm();
        }
        let exact = v(&[-1e-12 / (1e-3 + sigma), -1e-12 / (1.0 + sigma), -1e-12 / (1e3 + sigma)]);
        assert!((&sol.step - &exact).norm() <= 1e-10 * exact.norm());
    }

    fn random_sym(n: usize, entries: &[f64]) -> SymMatrix {
        let raw = DMatrix::from_column_slice(n, n, &entries[..n * n]);
        SymMatrix::from_upper(raw)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn stationarity_and_descent(n in 1usize..=8, h in prop::collection::vec(-3.0f64..3.0, 64),
                                    g in prop::collection::vec(-3.0f64..3.0, 8), m in 0.01f64..10.0) {
            let h = random_sym(n, &h);
            let g = Vector::from_column_slice(&g[..n]);
            let sol = cubic_step_smooth(&h, &g, m, DEFAULT_RTOL).unwrap();
            prop_assert!(sol.residual <= DEFAULT_RTOL * (1.0 + g.norm()));
            prop_assert!(model_value(&h, &g, m, &sol.step) <= 1e-12);
            let lmin = h.min_eigenvalue().unwrap();
            prop_assert!(sol.sigma >= (-lmin).max(0.0) - 1e-10 * (1.0 + lmin.abs()));
        }

        #[test]
        fn agrees_with_quad_step(n in 1usize..=8, b in prop::collection::vec(-1.0f64..1.0, 64),
                                 g in prop::collection::vec(-3.0f64..3.0, 8)) {
            let b = DMatrix::from_column_slice(n, n, &b[..n * n]);
            let h = SymMatrix::from_upper(&b * b.transpose()).shifted(0.1);
            let g = Vector::from_column_slice(&g[..n]);
            let a = cubic_step_smooth(&h, &g, 0.0, DEFAULT_RTOL).unwrap().step;
            let q = quad_step(&h, &g, DEFAULT_RTOL).unwrap();
            prop_assert!((a - q).norm() <= 1e-9);
        }

        #[test]
        fn secular_norm_nonincreasing(n in 1usize..=6, h in prop::collection::vec(-3.0f64..3.0, 36),
                                      g in prop::collection::vec(-3.0f64..3.0, 6), t in 0.0f64..5.0) {
            let h = random_sym(n, &h);
            let g = Vector::from_column_slice(&g[..n]);
            let base = (-h.min_eigenvalue().unwrap()).max(0.0) + 1e-3;
            let s1 = crate::linalg::solve_shifted(&h, base + t, &g).unwrap().norm();
            let s2 = crate::linalg::solve_shifted(&h, base + t + 0.1, &g).unwrap().norm();
            prop_assert!(s2 <= s1 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn degenerate_bottom_eigenspace() {
        let e = EigDecomp {
            values: vec![-1.0, -1.0, 2.0],
            vectors: DMatrix::identity(3, 3),
        };
        let h = SymMatrix::from_upper(e.reconstruct());
        let g = v(&[0.0, 0.0, 3.0]);
        let sol = cubic_step_smooth(&h, &g, 2.0, DEFAULT_RTOL).unwrap();
        assert!(sol.residual <= DEFAULT_RTOL * 4.0);
        assert!((sol.sigma - 2.0 * sol.step.norm()).abs() < 1e-9);
    }
}
