use super::{check_start, failure, require_zero_g, Method, Recorder, RunTrace, SolverConfig, Termination};
use crate::error::Result;
use crate::linalg::Vector;
use crate::problems::CompositeProblem;
use crate::subproblem::{cubic_step_smooth, quad_step};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonMethod {
    /// Cubic model on the exact Hessian with weight `L_H`.
    CubicNewton,
    /// Newton step on `∇²f + √(L_H‖∇f‖)·I`.
    GradNewton,
}

/// Regularized Newton baselines. `lambda` records the regularization
/// (`σ = L_H‖s‖` or the gradient shift), `traceG` the trace of `∇²f(x_k)`.
pub fn run_newton(
    kind: NewtonMethod,
    problem: &CompositeProblem,
    x0: &Vector,
    cfg: &SolverConfig,
) -> Result<RunTrace> {
    let method = match kind {
        NewtonMethod::CubicNewton => Method::CubicNewton,
        NewtonMethod::GradNewton => Method::GradNewton,
    };
    require_zero_g(problem, method)?;
    check_start(problem, x0)?;
    let c = cfg.resolve(problem)?;
    let lh = c.hessian_lipschitz;

    let mut x = x0.clone();
    let (mut f, mut grad) = problem.f_value_and_grad(&x);
    let mut hess = problem.f_hess(&x)?;
    let mut rec = Recorder::new(cfg);
    rec.push(f, grad.norm(), 0.0, 0.0, hess.trace(), false);
    let mut termination = if grad.norm() <= cfg.tol {
        Termination::Converged
    } else {
        Termination::MaxIter
    };
    if termination == Termination::MaxIter {
        for k in 0..cfg.max_iter {
            let step = match kind {
                NewtonMethod::CubicNewton => {
                    cubic_step_smooth(&hess, &grad, lh, cfg.subproblem_rtol).map(|sol| (sol.step, sol.sigma))
                }
                NewtonMethod::GradNewton => {
                    let shift = (lh * grad.norm()).sqrt();
                    quad_step(&hess.shifted(shift), &grad, cfg.subproblem_rtol).map(|s| (s, shift))
                }
            };
            let (s, lambda) = match step {
                Ok(v) => v,
                Err(e) => {
                    termination = failure(k, e);
                    break;
                }
            };
            let x_next = &x + &s;
            let (f_next, grad_next) = problem.f_value_and_grad(&x_next);
            if !f_next.is_finite() || grad_next.iter().any(|v| !v.is_finite()) {
                termination = failure(k, "non-finite objective at the new iterate");
                break;
            }
            x = x_next;
            f = f_next;
            grad = grad_next;
            hess = problem.f_hess(&x)?;
            let gnorm = grad.norm();
            rec.push(f, gnorm, s.norm(), lambda, hess.trace(), false);
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
        restart_total: 0,
        metric_repairs: 0,
        constants: c,
        f_star: problem.f_star,
        audit: Vec::new(),
    })
}
