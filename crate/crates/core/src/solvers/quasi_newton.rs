use super::{
    check_start, failure, require_zero_g, AuditLevel, AuditRecord, Method, Recorder, RunTrace, SolverConfig,
    Termination,
};
use crate::error::Result;
use crate::linalg::{loewner_gap, SymMatrix, Vector};
use crate::problems::CompositeProblem;
use crate::sr1::{potential, quadrature_jk, restart_metric, sr1_update, RestartPolicy};
use crate::subproblem::{cubic_step_smooth, model_residual};

fn initial_metric(problem: &CompositeProblem, x0: &Vector, cfg: &SolverConfig, lipschitz: f64) -> Result<SymMatrix> {
    match cfg.restart_policy {
        RestartPolicy::LipschitzIdentity => Ok(SymMatrix::scaled_identity(problem.dim(), lipschitz)),
        RestartPolicy::CurrentHessian => problem.f_hess(x0),
    }
}

struct StepAudit<'a> {
    k: usize,
    x: &'a Vector,
    u: &'a Vector,
    base: &'a SymMatrix,
    g_next: &'a SymMatrix,
    next_model_trace: f64,
    model_residual: f64,
    hard_case: bool,
    sr1_skipped: bool,
}

fn audit_step(problem: &CompositeProblem, level: AuditLevel, a: StepAudit<'_>) -> Result<Option<AuditRecord>> {
    if level == AuditLevel::Off {
        return Ok(None);
    }
    let (sandwich_lower, sandwich_upper) = match level {
        AuditLevel::Sandwich { panels } => {
            let j = quadrature_jk(problem, a.x, a.u, panels)?;
            (Some(loewner_gap(&j, a.g_next)?), Some(loewner_gap(a.g_next, a.base)?))
        }
        _ => (None, None),
    };
    Ok(Some(AuditRecord {
        k: a.k,
        base_norm: a.base.spectral_norm()?,
        base_trace: potential(a.base),
        next_model_trace: a.next_model_trace,
        sandwich_lower,
        sandwich_upper,
        model_residual: a.model_residual,
        hard_case: a.hard_case,
        sr1_skipped: a.sr1_skipped,
    }))
}

/// Repair budget per iteration.
const MAX_REPAIRS: usize = 5;
/// Rounding allowance, in ulps of `|f_k| + |f_{k+1}|`, before a trial step
/// counts as a descent failure.
const REPAIR_ULPS: f64 = 8.0;

fn repair_slack(f: f64, f_next: f64) -> f64 {
    REPAIR_ULPS * f64::EPSILON * (f.abs() + f_next.abs())
}

/// In exact arithmetic the metric dominates the curvature along every step
/// and each trial step descends. On long runs rounding can erode that order
/// (SR1 amplifies errors through small denominators), and a trial step then
/// overshoots. When the secant pair confirms it (`sᵀ(G s − y) < 0`), the SR1
/// update on the rejected pair makes the metric exact along `s` again and the
/// caller retries the step. Otherwise the failure is rounding in `f` and the
/// step stands.
fn repair(g: &SymMatrix, s: &Vector, y: &Vector, skip_tol: f64) -> Option<SymMatrix> {
    if s.dot(&(g.mul_vec(s) - y)) >= 0.0 {
        return None;
    }
    match sr1_update(g, s, y, skip_tol) {
        Ok(out) if !out.skipped => Some(out.g_next),
        _ => None,
    }
}

/// The cubic-regularized SR1 method (`always_correct = false`) and its restart-free variant.
fn cubic_core(
    problem: &CompositeProblem,
    x0: &Vector,
    cfg: &SolverConfig,
    always_correct: bool,
    safeguard: bool,
    method: Method,
) -> Result<RunTrace> {
    require_zero_g(problem, method)?;
    check_start(problem, x0)?;
    let c = cfg.resolve(problem)?;
    let (n, l, lh) = (c.n, c.lipschitz, c.hessian_lipschitz);
    let budget = n as f64 * c.kappa_bar;

    let mut x = x0.clone();
    let (mut f, mut grad) = problem.f_value_and_grad(&x);
    let mut g = initial_metric(problem, &x, cfg, l)?;
    let mut r_prev = 0.0;
    let mut restarts = 0;
    let mut repairs = 0;
    let mut audit = Vec::new();
    let mut rec = Recorder::new(cfg);
    let mut gnorm = grad.norm();
    rec.push(f, gnorm, 0.0, 0.0, potential(&g), false);

    let mut termination = if gnorm <= cfg.tol {
        Termination::Converged
    } else {
        Termination::MaxIter
    };
    if termination == Termination::MaxIter {
        for k in 0..cfg.max_iter {
            let correction = always_correct || potential(&g) <= budget;
            let hess_k = if !correction && cfg.restart_policy == RestartPolicy::CurrentHessian {
                Some(problem.f_hess(&x)?)
            } else {
                None
            };
            let mut repairs_left = if safeguard && correction { MAX_REPAIRS } else { 0 };
            let trial = loop {
                let model = if correction {
                    g.shifted(lh * r_prev)
                } else {
                    restart_metric(cfg.restart_policy, n, l, lh * r_prev, hess_k.as_ref())?
                };
                let sol = match cubic_step_smooth(&model, &grad, lh, cfg.subproblem_rtol) {
                    Ok(sol) => sol,
                    Err(e) => break Err(failure(k, e)),
                };
                let r = sol.step.norm();
                if r == 0.0 {
                    break Err(failure(k, "zero step at a non-stationary point"));
                }
                let x_next = &x + &sol.step;
                let (f_next, grad_next) = problem.f_value_and_grad(&x_next);
                if !f_next.is_finite() || grad_next.iter().any(|v| !v.is_finite()) {
                    break Err(failure(k, "non-finite objective at the new iterate"));
                }
                let y = &grad_next - &grad;
                if repairs_left > 0 && f_next > f - lh / 6.0 * r.powi(3) + repair_slack(f, f_next) {
                    if let Some(repaired) = repair(&g, &sol.step, &y, cfg.skip_tol) {
                        g = repaired;
                        repairs += 1;
                        repairs_left -= 1;
                        continue;
                    }
                }
                break Ok((model, sol, r, x_next, f_next, grad_next, y));
            };
            let (model, sol, r, x_next, f_next, grad_next, y) = match trial {
                Ok(t) => t,
                Err(t) => {
                    termination = t;
                    break;
                }
            };
            let s = sol.step.clone();
            let lambda = lh * (r_prev + r);
            let tilde = if correction {
                g.shifted(lambda)
            } else {
                restart_metric(cfg.restart_policy, n, l, lambda, hess_k.as_ref())?
            };
            let out = match sr1_update(&tilde, &s, &y, cfg.skip_tol) {
                Ok(out) => out,
                Err(e) => {
                    termination = failure(k, e);
                    break;
                }
            };
            // With g = 0 and an exact model solution, G̃_{k+1}u_k = −∇f(x_k),
            // so F′(x_{k+1}) = ∇f(x_{k+1}).
            gnorm = grad_next.norm();
            if let Some(a) = audit_step(
                problem,
                cfg.audit,
                StepAudit {
                    k,
                    x: &x,
                    u: &s,
                    base: &tilde,
                    g_next: &out.g_next,
                    next_model_trace: potential(&out.g_next),
                    model_residual: model_residual(&model, &grad, lh, &s),
                    hard_case: sol.hard_case,
                    sr1_skipped: out.skipped,
                },
            )? {
                audit.push(a);
            }
            g = out.g_next;
            x = x_next;
            f = f_next;
            grad = grad_next;
            r_prev = r;
            if !correction {
                restarts += 1;
            }
            rec.push(f, gnorm, r, lambda, potential(&g), !correction);
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
        metric_repairs: repairs,
        constants: c,
        f_star: problem.f_star,
        audit,
    })
}

/// Cubic SR1 PQN: SR1 metric with cubic regularization, correction
/// `λ_k = L_H(r_{k−1} + r_k)` and a restart whenever `trace G_k > n κ̄`.
pub fn cubic_sr1_pqn(problem: &CompositeProblem, x0: &Vector, cfg: &SolverConfig) -> Result<RunTrace> {
    cubic_core(problem, x0, cfg, false, true, Method::CubicSr1)
}

/// Classical SR1: the cubic method with `L_H = 0` and no repair of rejected
/// steps.
pub fn classical_sr1(problem: &CompositeProblem, x0: &Vector, cfg: &SolverConfig) -> Result<RunTrace> {
    let cfg = SolverConfig {
        hessian_lipschitz_override: Some(0.0),
        ..cfg.clone()
    };
    cubic_core(problem, x0, &cfg, false, false, Method::Sr1)
}

/// Cubic SR1 QN: the cubic method without the trace guard, for smooth
/// objectives.
pub fn cubic_sr1_qn_pl(problem: &CompositeProblem, x0: &Vector, cfg: &SolverConfig) -> Result<RunTrace> {
    cubic_core(problem, x0, cfg, true, true, Method::CubicSr1Qn)
}

/// Grad SR1 PQN: unit quasi-Newton steps on `G̃_k`, SR1 update, correction
/// `λ_{k+1} = √(L_H‖F′(x_{k+1})‖) + L_H r_k` and a restart to `L·I` when the
/// corrected trace exceeds `n κ̄`.
pub fn grad_sr1_pqn(problem: &CompositeProblem, x0: &Vector, cfg: &SolverConfig) -> Result<RunTrace> {
    let method = Method::GradSr1;
    require_zero_g(problem, method)?;
    check_start(problem, x0)?;
    let c = cfg.resolve(problem)?;
    let (n, l, lh) = (c.n, c.lipschitz, c.hessian_lipschitz);
    let budget = n as f64 * c.kappa_bar;

    let mut x = x0.clone();
    let (mut f, mut grad) = problem.f_value_and_grad(&x);
    let mut tilde = initial_metric(problem, &x, cfg, l)?;
    let mut restarts = 0;
    let mut repairs = 0;
    let mut audit = Vec::new();
    let mut rec = Recorder::new(cfg);
    let mut gnorm = grad.norm();
    rec.push(f, gnorm, 0.0, 0.0, potential(&tilde), false);

    let mut termination = if gnorm <= cfg.tol {
        Termination::Converged
    } else {
        Termination::MaxIter
    };
    if termination == Termination::MaxIter {
        for k in 0..cfg.max_iter {
            let mut repairs_left = MAX_REPAIRS;
            let trial = loop {
                // The M = 0 cubic solver is the Cholesky solve of `quad_step`
                // when G̃ ≻ 0, and tolerates a metric that rounding has left
                // singular.
                let s = match cubic_step_smooth(&tilde, &grad, 0.0, cfg.subproblem_rtol) {
                    Ok(sol) => sol.step,
                    Err(e) => break Err(failure(k, e)),
                };
                let r = s.norm();
                if r == 0.0 {
                    break Err(failure(k, "zero step at a non-stationary point"));
                }
                let x_next = &x + &s;
                let (f_next, grad_next) = problem.f_value_and_grad(&x_next);
                if !f_next.is_finite() || grad_next.iter().any(|v| !v.is_finite()) {
                    break Err(failure(k, "non-finite objective at the new iterate"));
                }
                let y = &grad_next - &grad;
                // With G̃ ⪰ J the step achieves at least the model decrease.
                if repairs_left > 0 && f_next > f + 0.5 * grad.dot(&s) + repair_slack(f, f_next) {
                    if let Some(repaired) = repair(&tilde, &s, &y, cfg.skip_tol) {
                        tilde = repaired;
                        repairs += 1;
                        repairs_left -= 1;
                        continue;
                    }
                }
                break Ok((s, r, x_next, f_next, grad_next, y));
            };
            let (s, r, x_next, f_next, grad_next, y) = match trial {
                Ok(t) => t,
                Err(t) => {
                    termination = t;
                    break;
                }
            };
            let out = match sr1_update(&tilde, &s, &y, cfg.skip_tol) {
                Ok(out) => out,
                Err(e) => {
                    termination = failure(k, e);
                    break;
                }
            };
            gnorm = grad_next.norm();
            let lambda = (lh * gnorm).sqrt() + lh * r;
            let hat = out.g_next.shifted(lambda);
            let restarted = potential(&hat) > budget;
            let next_tilde = if restarted {
                let hess = match cfg.restart_policy {
                    RestartPolicy::CurrentHessian => Some(problem.f_hess(&x_next)?),
                    RestartPolicy::LipschitzIdentity => None,
                };
                restart_metric(cfg.restart_policy, n, l, 0.0, hess.as_ref())?
            } else {
                hat
            };
            if let Some(a) = audit_step(
                problem,
                cfg.audit,
                StepAudit {
                    k,
                    x: &x,
                    u: &s,
                    base: &tilde,
                    g_next: &out.g_next,
                    next_model_trace: potential(&next_tilde),
                    model_residual: (&grad + tilde.mul_vec(&s)).norm(),
                    hard_case: false,
                    sr1_skipped: out.skipped,
                },
            )? {
                audit.push(a);
            }
            tilde = next_tilde;
            x = x_next;
            f = f_next;
            grad = grad_next;
            if restarted {
                restarts += 1;
            }
            rec.push(f, gnorm, r, lambda, potential(&tilde), restarted);
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
        metric_repairs: repairs,
        constants: c,
        f_star: problem.f_star,
        audit,
    })
}
