//! SR1 metric update, correction/restart metrics and the trace potential.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, Vector};
use crate::problems::CompositeProblem;

pub const DEFAULT_SKIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Sr1Outcome {
    pub g_next: SymMatrix,
    pub skipped: bool,
    /// Potential drop `‖v‖² / uᵀv`; zero when skipped, negative only when
    /// rounding has broken `G ⪰ A`.
    pub nu_value: f64,
}

/// Symmetric rank-one update of `G` towards the implicit matrix `A` whose
/// action on `u` is `y = A u`:
/// `G₊ = G − v vᵀ / (uᵀv)` with `v = G u − y`.
///
/// The update is skipped (returning `G` unchanged) when `‖v‖ ≤ tol·‖u‖` or
/// `|uᵀv| ≤ tol·‖u‖·‖v‖`.
///
/// While `G ⪰ A` the denominator is nonnegative. Rounding can break that
/// order on ill-conditioned problems; a negative denominator is then applied
/// rather than skipped, since skipping freezes the error in `G` and the
/// iteration diverges, while applying it lets the hereditary property repair
/// the metric.
pub fn sr1_update(g: &SymMatrix, u: &Vector, y: &Vector, skip_tol: f64) -> Result<Sr1Outcome> {
    let n = g.order();
    for v in [u, y] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SR1 input vector"));
        }
    }
    let unorm = u.norm();
    if unorm == 0.0 {
        return Err(Error::InvalidStep);
    }
    let v = g.mul_vec(u) - y;
    let vnorm = v.norm();
    let utv = u.dot(&v);
    if vnorm <= skip_tol * unorm || utv.abs() <= skip_tol * unorm * vnorm {
        return Ok(Sr1Outcome {
            g_next: g.clone(),
            skipped: true,
            nu_value: 0.0,
        });
    }
    Ok(Sr1Outcome {
        g_next: g.rank_one_update(&v, -1.0 / utv),
        skipped: false,
        nu_value: vnorm * vnorm / utv,
    })
}

/// `V(G) = trace G`.
pub fn potential(g: &SymMatrix) -> f64 {
    g.trace()
}

/// How the metric is rebuilt when its trace exceeds `n·κ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RestartPolicy {
    /// `(L + λ)·I`.
    #[default]
    LipschitzIdentity,
    /// `∇²f(x_k) + λ·I`; also used as the initial metric.
    CurrentHessian,
}

/// Quasi-Newton state carried between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    pub g: SymMatrix,
    pub lambda: f64,
    pub r_prev: f64,
    pub restart_count: usize,
    pub kappa_bar: f64,
}

impl MetricState {
    pub fn new(g: SymMatrix, kappa_bar: f64) -> Self {
        Self {
            g,
            lambda: 0.0,
            r_prev: 0.0,
            restart_count: 0,
            kappa_bar,
        }
    }

    /// True when `trace G ≤ n·κ̄`, i.e. the correction branch applies.
    pub fn within_trace_budget(&self) -> bool {
        potential(&self.g) <= self.g.order() as f64 * self.kappa_bar
    }
}

/// `G + λ·I`.
pub fn corrected_metric(state: &MetricState, lambda_new: f64) -> Result<SymMatrix> {
    if !(lambda_new >= 0.0 && lambda_new.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "correction shift must be nonnegative, got {lambda_new}"
        )));
    }
    Ok(state.g.shifted(lambda_new))
}

/// Restart metric of order `n`: `(L + λ)·I` or `∇²f + λ·I`.
pub fn restart_metric(
    policy: RestartPolicy,
    n: usize,
    lipschitz: f64,
    lambda_new: f64,
    hessian: Option<&SymMatrix>,
) -> Result<SymMatrix> {
    if !(lambda_new >= 0.0 && lambda_new.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "restart shift must be nonnegative, got {lambda_new}"
        )));
    }
    match policy {
        RestartPolicy::LipschitzIdentity => Ok(SymMatrix::scaled_identity(n, lipschitz + lambda_new)),
        RestartPolicy::CurrentHessian => {
            let h = hessian.ok_or(Error::HessianUnavailable)?;
            if h.order() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: h.order(),
                });
            }
            Ok(h.shifted(lambda_new))
        }
    }
}

/// Composite Simpson approximation of `∫₀¹ ∇²f(x + t u) dt`, the averaged
/// Hessian whose action on `u` is the gradient difference. Diagnostic only;
/// the methods never form it.
pub fn quadrature_jk(problem: &CompositeProblem, x: &Vector, u: &Vector, panels: usize) -> Result<SymMatrix> {
    if panels < 2 || panels % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "Simpson quadrature needs an even panel count >= 2, got {panels}"
        )));
    }
    let n = problem.dim();
    let h = 1.0 / panels as f64;
    let mut acc = SymMatrix::zeros(n);
    for i in 0..=panels {
        let t = i as f64 * h;
        let w = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let hess = problem.f_hess(&(x + u * t))?;
        acc = acc.add(&hess.scaled(w * h / 3.0));
    }
    Ok(acc)
}
