use super::{check_start, failure, require_zero_g, Method, Recorder, RunTrace, SolverConfig, Termination};
use crate::error::Result;
use crate::linalg::Vector;
use crate::problems::CompositeProblem;

/// Heavy-ball momentum.
pub const HB_BETA: f64 = 0.9;
/// Armijo sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Backtracking halvings before a line search is declared failed.
pub const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstOrderMethod {
    /// `x − ∇f(x)/L`.
    Gd,
    /// Constant-step Nesterov with the `t_k` momentum schedule.
    Nag,
    /// `x − ∇f(x)/L + β(x − x_prev)`.
    Hb,
    /// Gradient step with Armijo backtracking from `1/L`.
    GdBt,
    /// Heavy-ball step with Armijo backtracking from `1/L`; momentum is
    /// dropped for the iteration if no step length is accepted.
    HbBt,
}

impl FirstOrderMethod {
    fn method(self) -> Method {
        match self {
            FirstOrderMethod::Gd => Method::Gd,
            FirstOrderMethod::Nag => Method::Nag,
            FirstOrderMethod::Hb => Method::Hb,
            FirstOrderMethod::GdBt => Method::GdBt,
            FirstOrderMethod::HbBt => Method::HbBt,
        }
    }
}

/// Backtracks `t` from `t0` until `F(x + t d + m) ≤ F(x) − c t ‖∇f‖²`.
fn armijo(
    problem: &CompositeProblem,
    x: &Vector,
    f: f64,
    grad: &Vector,
    momentum: Option<&Vector>,
    t0: f64,
) -> Option<(Vector, f64, Vector)> {
    let g2 = grad.norm_squared();
    let mut t = t0;
    for _ in 0..=MAX_HALVINGS {
        let mut cand = x - grad * t;
        if let Some(m) = momentum {
            cand += m;
        }
        let (fc, gc) = problem.f_value_and_grad(&cand);
        if fc.is_finite() && fc <= f - ARMIJO_C * t * g2 {
            return Some((cand, fc, gc));
        }
        t *= 0.5;
    }
    None
}

pub fn run_first_order(
    kind: FirstOrderMethod,
    problem: &CompositeProblem,
    x0: &Vector,
    cfg: &SolverConfig,
) -> Result<RunTrace> {
    let method = kind.method();
    require_zero_g(problem, method)?;
    check_start(problem, x0)?;
    let c = cfg.resolve(problem)?;
    let step = 1.0 / c.lipschitz;

    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let (mut f, mut grad) = problem.f_value_and_grad(&x);
    // Nesterov extrapolation point and schedule.
    let mut y = x.clone();
    let mut t_k = 1.0f64;
    let mut rec = Recorder::new(cfg);
    rec.push(f, grad.norm(), 0.0, 0.0, 0.0, false);
    let mut restarts = 0;
    let mut termination = if grad.norm() <= cfg.tol {
        Termination::Converged
    } else {
        Termination::MaxIter
    };
    if termination == Termination::MaxIter {
        for k in 0..cfg.max_iter {
            let mut dropped = false;
            let (x_next, f_next, grad_next) = match kind {
                FirstOrderMethod::Gd => {
                    let xn = &x - &grad * step;
                    let (fn_, gn) = problem.f_value_and_grad(&xn);
                    (xn, fn_, gn)
                }
                FirstOrderMethod::Nag => {
                    let gy = problem.f_grad(&y);
                    let xn = &y - gy * step;
                    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
                    y = &xn + (&xn - &x) * ((t_k - 1.0) / t_next);
                    t_k = t_next;
                    let (fn_, gn) = problem.f_value_and_grad(&xn);
                    (xn, fn_, gn)
                }
                FirstOrderMethod::Hb => {
                    let xn = &x - &grad * step + (&x - &x_prev) * HB_BETA;
                    let (fn_, gn) = problem.f_value_and_grad(&xn);
                    (xn, fn_, gn)
                }
                FirstOrderMethod::GdBt => match armijo(problem, &x, f, &grad, None, step) {
                    Some(r) => r,
                    None => {
                        termination = failure(k, "backtracking line search failed");
                        break;
                    }
                },
                FirstOrderMethod::HbBt => {
                    let m = (&x - &x_prev) * HB_BETA;
                    match armijo(problem, &x, f, &grad, Some(&m), step) {
                        Some(r) => r,
                        None => {
                            dropped = true;
                            match armijo(problem, &x, f, &grad, None, step) {
                                Some(r) => r,
                                None => {
                                    termination = failure(k, "backtracking line search failed");
                                    break;
                                }
                            }
                        }
                    }
                }
            };
            if !f_next.is_finite() || grad_next.iter().any(|v| !v.is_finite()) {
                termination = failure(k, "non-finite objective at the new iterate");
                break;
            }
            let r = (&x_next - &x).norm();
            x_prev = std::mem::replace(&mut x, x_next);
            f = f_next;
            grad = grad_next;
            if dropped {
                restarts += 1;
            }
            let gnorm = grad.norm();
            rec.push(f, gnorm, r, 0.0, 0.0, dropped);
            if gnorm <= cfg.tol {
                termination = Termination::Converged;
                break;
            }
        }
    }
    Ok(RunTrace {
        method,
        records: rec.records,
        x_final: x,
        termination,
        restart_total: restarts,
        metric_repairs: 0,
        constants: c,
        f_star: problem.f_star,
        audit: Vec::new(),
    })
}
