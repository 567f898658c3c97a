//! Non-asymptotic rate certificates: the constants of the convergence
//! theorems evaluated on a recorded run, and pointwise checks of the
//! resulting gradient-norm envelopes.
//!
//! `f_inf` stands for `F̄`/`min F` throughout; callers normally pass
//! [`resolve_f_inf`](crate::solvers::resolve_f_inf). When it is the best
//! value seen on the run, early-`k` envelopes are slightly optimistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{lh_times_radius, IterateRecord, RunTrace};

/// Gaps `F(x_k) − f_inf` below `DELTA_FLOOR_REL·max(1, |f_inf|)` are treated
/// as rounding noise by the empirical constant estimates.
pub const DELTA_FLOOR_REL: f64 = 1e-10;

/// Relative slack allowed when comparing an observed value to a bound.
const BOUND_SLACK: f64 = 1e-12;

/// Tabulated concave desingularizing function, linearly interpolated and
/// extended beyond the last knot with the last slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPhi {
    t: Vec<f64>,
    phi: Vec<f64>,
}

impl TabulatedPhi {
    /// Knots must start at `(0, 0)`, increase in `t`, and describe a
    /// nondecreasing concave function.
    pub fn new(t: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("tabulated phi: {m}")));
        if t.len() != phi.len() || t.len() < 2 {
            return bad("need at least two knots of matching length");
        }
        if t.iter().chain(&phi).any(|v| !v.is_finite()) {
            return bad("non-finite knot");
        }
        if t[0] != 0.0 || phi[0] != 0.0 {
            return bad("must start at (0, 0)");
        }
        let mut prev_slope = f64::INFINITY;
        for i in 1..t.len() {
            let dt = t[i] - t[i - 1];
            if dt <= 0.0 {
                return bad("knots must increase");
            }
            let slope = (phi[i] - phi[i - 1]) / dt;
            if slope < 0.0 {
                return bad("must be nondecreasing");
            }
            if slope > prev_slope * (1.0 + 1e-12) {
                return bad("must be concave");
            }
            prev_slope = slope;
        }
        Ok(Self { t, phi })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        let seg = match self.t.iter().position(|&k| k >= x) {
            Some(0) => return 0.0,
            Some(i) => i,
            None => n - 1,
        };
        let (t0, t1) = (self.t[seg - 1], self.t[seg]);
        let (p0, p1) = (self.phi[seg - 1], self.phi[seg]);
        p0 + (p1 - p0) * (x - t0) / (t1 - t0)
    }
}

/// Desingularizing function `φ` of the KL inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum KLSpec {
    /// `φ(t) = c t^{1−θ}`.
    Power { c: f64, theta: f64 },
    General(TabulatedPhi),
}

impl KLSpec {
    pub fn power(c: f64, theta: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("KL constant c must be positive, got {c}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("KL exponent must lie in (0, 1), got {theta}")));
        }
        Ok(KLSpec::Power { c, theta })
    }

    pub fn phi(&self, t: f64) -> f64 {
        match self {
            KLSpec::Power { c, theta } => c * t.max(0.0).powf(1.0 - theta),
            KLSpec::General(tab) => tab.eval(t.max(0.0)),
        }
    }

    fn power_params(&self) -> Option<(f64, f64)> {
        match *self {
            KLSpec::Power { c, theta } => Some((c, theta)),
            KLSpec::General(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicConstants {
    pub k0: usize,
    pub r: f64,
    pub d: f64,
    pub m: f64,
    pub c0: f64,
    pub c_cr1: f64,
    pub c_cr2: f64,
    pub c1: f64,
    /// Power-form constants; `None` for a tabulated `φ`.
    pub c2: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradConstants {
    pub k0: usize,
    pub r: f64,
    pub d: f64,
    pub m: f64,
    pub c0: f64,
    pub c_gr: f64,
    pub s1: f64,
    pub s2: Option<f64>,
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConstants {
    pub c_f: f64,
    /// `L_H·C_r`, kept as a product so that it is finite for `L_H = 0`.
    pub lh_c_r: f64,
    pub c_gd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlConstants {
    pub r: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "theorem", rename_all = "kebab-case")]
pub enum EnvelopeConstants {
    Cubic(CubicConstants),
    Grad(GradConstants),
    GradientDominated(GdConstants),
    Pl(PlConstants),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub n: usize,
    pub bound: f64,
    pub observed: f64,
    /// Trace index the observed value was read from.
    pub record: usize,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub constants: EnvelopeConstants,
    pub k0: usize,
    /// Which form of the bound was checked.
    pub case: String,
    /// `N` past which the theorem claims its superlinear regime, if it
    /// names one.
    pub threshold: Option<f64>,
    pub verdicts: Vec<Verdict>,
    pub first_violation: Option<usize>,
}

impl EnvelopeReport {
    fn new(constants: EnvelopeConstants, k0: usize, case: &str, threshold: Option<f64>, verdicts: Vec<Verdict>) -> Self {
        let first_violation = verdicts.iter().find(|v| !v.satisfied).map(|v| v.n);
        Self {
            constants,
            k0,
            case: case.to_string(),
            threshold,
            verdicts,
            first_violation,
        }
    }

    pub fn all_satisfied(&self) -> bool {
        self.first_violation.is_none()
    }

    /// Smallest `N₀` such that every checked `N ≥ N₀` is satisfied; `None`
    /// if the last checked `N` is violated or nothing was checked.
    pub fn satisfied_from(&self) -> Option<usize> {
        let last = self.verdicts.last()?;
        if !last.satisfied {
            return None;
        }
        Some(self.verdicts.iter().rev().find(|v| !v.satisfied).map_or(self.verdicts[0].n, |v| v.n + 1))
    }

    /// Every checked `N ≥ threshold` is satisfied (vacuously true when the
    /// trace ends before the threshold).
    pub fn satisfied_past_threshold(&self) -> bool {
        let t = self.threshold.unwrap_or(0.0);
        self.verdicts.iter().filter(|v| v.n as f64 >= t).all(|v| v.satisfied)
    }

    pub fn summary(&self) -> String {
        match (self.first_violation, self.verdicts.last()) {
            (_, None) => "NO DATA (trace too short)".to_string(),
            (None, Some(last)) => format!("SATISFIED for N=1..{}", last.n),
            (Some(first), Some(_)) => match self.satisfied_from() {
                Some(from) => format!("VIOLATED at N={first}; SATISFIED from N={from}"),
                None => format!("VIOLATED at N={first}"),
            },
        }
    }
}

fn gap_at(records: &[IterateRecord], k: usize, f_inf: f64) -> Result<f64> {
    let gap = records[k].f - f_inf;
    if !(gap >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "F(x_{k}) − f_inf = {gap} is negative; f_inf is not a lower bound"
        )));
    }
    Ok(gap)
}

fn check_k0(trace: &RunTrace, k0: usize) -> Result<()> {
    if k0 >= trace.records.len() {
        return Err(Error::InvalidArgument(format!(
            "k0 = {k0} outside a trace of {} records",
            trace.records.len()
        )));
    }
    Ok(())
}

fn require_curvature_constant(lh: f64) -> Result<()> {
    if lh <= 0.0 {
        return Err(Error::ConstantsUndefined(
            "the radius R = (6Δ₀/L_H)^{1/3} and M need L_H > 0".into(),
        ));
    }
    Ok(())
}

/// Length of the step leaving `x_{k0}`.
fn step_after(records: &[IterateRecord], k0: usize) -> f64 {
    records.get(k0 + 1).map_or(0.0, |r| r.r)
}

fn within(observed: f64, bound: f64) -> bool {
    observed <= bound + BOUND_SLACK * bound.abs()
}

fn window_min(records: &[IterateRecord], from: usize, to: usize) -> (f64, usize) {
    records[from..=to]
        .iter()
        .map(|r| (r.gnorm, r.k))
        .fold((f64::INFINITY, from), |a, b| if b.0 < a.0 { b } else { a })
}

/// Constants of the local rate for cubic-sr1.
pub fn cubic_constants(trace: &RunTrace, f_inf: f64, k0: usize, kl: &KLSpec) -> Result<CubicConstants> {
    let c = &trace.constants;
    require_curvature_constant(c.hessian_lipschitz)?;
    check_k0(trace, k0)?;
    let (n, l, lh, kb) = (c.n as f64, c.lipschitz, c.hessian_lipschitz, c.kappa_bar);
    let gap0 = gap_at(&trace.records, 0, f_inf)?;
    let gap_k0 = gap_at(&trace.records, k0, f_inf)?;
    let r = (6.0 * gap0 / lh).cbrt();
    let d = 2.0 * n * kb + 2.0 * l + 2.0 * lh * r;
    let m = 3.0 * d / lh;
    let phi = kl.phi(gap_k0);
    let rk0 = step_after(&trace.records, k0);
    let c0 = (1.5 * rk0 * rk0 + m * phi).sqrt();
    let c1 = 3.0 * phi;
    let (c2, cc) = match kl.power_params() {
        Some((kc, th)) => {
            let c2 = 3.0 * ((1.0 - th) * kc).powf(1.0 / th);
            (Some(c2), Some(c1.powf((1.0 - 2.0 * th) / (1.0 - th)) * c2.powf(th / (1.0 - th))))
        }
        None => (None, None),
    };
    Ok(CubicConstants {
        k0,
        r,
        d,
        m,
        c0,
        c_cr1: (n + 1.0) * l + n * kb + 2.0 * n * lh * r,
        c_cr2: 2.0 * n * lh * c0,
        c1,
        c2,
        c: cc,
    })
}

/// General-`φ` bound for cubic-sr1 on the window minimum.
pub fn cubic_general_bound(consts: &CubicConstants, n: usize, g_k0: f64) -> f64 {
    let nf = n as f64;
    let base = consts.c_cr1 / nf + consts.c_cr2 / nf.sqrt();
    (consts.c1 * base).powf(nf / (nf + 1.0)) * g_k0.powf(1.0 / (nf + 1.0))
}

pub fn check_cubic_envelope(trace: &RunTrace, consts: &CubicConstants, kl: &KLSpec) -> EnvelopeReport {
    let recs = &trace.records;
    let k0 = consts.k0;
    let g0 = recs[k0].gnorm;
    let mut verdicts = Vec::new();
    let case = match kl.power_params() {
        None => "general",
        Some((_, th)) if th < 0.5 => "theta<1/2",
        Some((_, th)) if th == 0.5 => "theta=1/2",
        Some(_) => "theta>1/2",
    };
    for nn in 1..recs.len().saturating_sub(k0) {
        let nf = nn as f64;
        let base = consts.c_cr1 / nf + consts.c_cr2 / nf.sqrt();
        let (bound, (observed, record)) = match kl.power_params() {
            None => (cubic_general_bound(consts, nn, g0), window_min(recs, k0, k0 + nn)),
            Some((_, th)) if th <= 0.5 => {
                let c = consts.c.unwrap_or(f64::NAN);
                ((c * base).powf(nf / 2.0) * g0, (recs[k0 + nn].gnorm, k0 + nn))
            }
            Some((_, th)) => {
                let c2 = consts.c2.unwrap_or(f64::NAN);
                let expo = nf / (2.0 + (nf - 1.0) * (2.0 - 1.0 / th));
                ((c2 * base * g0.powf(1.0 / (th * nf))).powf(expo), window_min(recs, k0, k0 + nn))
            }
        };
        verdicts.push(Verdict {
            n: nn,
            bound,
            observed,
            record,
            satisfied: within(observed, bound),
        });
    }
    let threshold = (kl.power_params().map(|p| p.1) == Some(0.5)).then(|| consts.c_cr1.max(consts.c_cr2 * consts.c_cr2));
    EnvelopeReport::new(EnvelopeConstants::Cubic(*consts), k0, case, threshold, verdicts)
}

/// Constants of the local rate for grad-sr1 (convex case).
pub fn grad_constants(trace: &RunTrace, f_inf: f64, k0: usize, kl: &KLSpec) -> Result<GradConstants> {
    let c = &trace.constants;
    require_curvature_constant(c.hessian_lipschitz)?;
    check_k0(trace, k0)?;
    let (n, l, lh, kb) = (c.n as f64, c.lipschitz, c.hessian_lipschitz, c.kappa_bar);
    let gap0 = gap_at(&trace.records, 0, f_inf)?;
    let gap_k0 = gap_at(&trace.records, k0, f_inf)?;
    let r = (6.0 * gap0 / lh).cbrt();
    let d = (lh * (n * kb + l)).sqrt() + lh * r;
    let m = (4.0 * (n * kb + l) / lh).sqrt();
    let phi = kl.phi(gap_k0);
    let rk0 = step_after(&trace.records, k0);
    let c0 = rk0.powf(1.5) / 3.0 + m * phi;
    let s1 = 2.0 * phi;
    let (s2, s) = match kl.power_params() {
        Some((kc, th)) => {
            let s2 = 2.0 * ((1.0 - th) * kc).powf(1.0 / th);
            (Some(s2), Some(s1.powf((1.0 - 2.0 * th) / (1.0 - th)) * s2.powf(th / (1.0 - th))))
        }
        None => (None, None),
    };
    Ok(GradConstants {
        k0,
        r,
        d,
        m,
        c0,
        c_gr: n * d * c0.cbrt(),
        s1,
        s2,
        s,
    })
}

pub fn check_grad_envelope(trace: &RunTrace, consts: &GradConstants, kl: &KLSpec) -> EnvelopeReport {
    let recs = &trace.records;
    let k0 = consts.k0;
    let g0 = recs[k0].gnorm;
    let nkb = trace.constants.n as f64 * trace.constants.kappa_bar;
    let case = match kl.power_params() {
        None => "general",
        Some((_, th)) if th < 0.5 => "theta<1/2",
        Some((_, th)) if th == 0.5 => "theta=1/2",
        Some(_) => "theta>1/2",
    };
    let mut verdicts = Vec::new();
    for nn in 1..recs.len().saturating_sub(k0) {
        let nf = nn as f64;
        let base = nkb / nf + consts.c_gr / nf.cbrt();
        let (bound, (observed, record)) = match kl.power_params() {
            None => (
                (consts.s1 * base).powf(nf / (nf + 1.0)) * g0.powf(1.0 / (nf + 1.0)),
                window_min(recs, k0, k0 + nn),
            ),
            Some((_, th)) if th <= 0.5 => {
                let s = consts.s.unwrap_or(f64::NAN);
                ((s * base).powf(nf / 2.0) * g0, (recs[k0 + nn].gnorm, k0 + nn))
            }
            Some((_, th)) => {
                let s2 = consts.s2.unwrap_or(f64::NAN);
                let expo = 1.0 / (2.0 / nf + (nf - 1.0) * (2.0 - 1.0 / th));
                ((s2 * base * g0.powf(1.0 / (th * nf))).powf(expo), window_min(recs, k0, k0 + nn))
            }
        };
        verdicts.push(Verdict {
            n: nn,
            bound,
            observed,
            record,
            satisfied: within(observed, bound),
        });
    }
    let threshold = (kl.power_params().map(|p| p.1) == Some(0.5)).then(|| nkb.max(consts.c_gr.powi(3)));
    EnvelopeReport::new(EnvelopeConstants::Grad(*consts), k0, case, threshold, verdicts)
}

/// Constants of the global rate for grad-sr1 under gradient domination
/// `f − min f ≤ (c/2)‖∇f‖²`.
pub fn gd_constants(trace: &RunTrace, c_pl: f64, f_inf: f64) -> Result<GdConstants> {
    if !(c_pl > 0.0 && c_pl.is_finite()) {
        return Err(Error::InvalidArgument(format!("gradient-domination constant must be positive, got {c_pl}")));
    }
    let k = &trace.constants;
    let (n, l, lh) = (k.n as f64, k.lipschitz, k.hessian_lipschitz);
    let nkb = n * k.kappa_bar;
    let gap0 = gap_at(&trace.records, 0, f_inf)?;
    let c_f = 4.0 * nkb * (c_pl * nkb * gap0).powf(0.25);
    let lh_c_r = lh.sqrt() * 4.0 * c_pl * nkb * (2.0 * nkb * gap0).powf(0.25)
        + lh / l * 2.0 * c_pl * nkb * (2.0 * nkb * gap0).sqrt();
    Ok(GdConstants {
        c_f,
        lh_c_r,
        c_gd: nkb + n * lh.sqrt() * c_f + n * lh_c_r,
    })
}

pub fn check_gd_envelope(trace: &RunTrace, c_pl: f64, f_inf: f64) -> Result<EnvelopeReport> {
    let consts = gd_constants(trace, c_pl, f_inf)?;
    let recs = &trace.records;
    let g0 = recs[0].gnorm;
    let verdicts = (1..recs.len())
        .map(|nn| {
            let nf = nn as f64;
            let bound = (c_pl * c_pl * consts.c_gd / (2.0 * nf)).powf(nf / 2.0) * g0.powf(2.0 / (nf + 1.0));
            let observed = recs[nn].gnorm;
            Verdict {
                n: nn,
                bound,
                observed,
                record: nn,
                satisfied: within(observed, bound),
            }
        })
        .collect();
    Ok(EnvelopeReport::new(
        EnvelopeConstants::GradientDominated(consts),
        0,
        "gradient-dominated",
        Some(consts.c_gd.ceil()),
        verdicts,
    ))
}

/// Constant of the global rate for cubic-sr1-qn under
/// `f − min f ≤ ‖∇f‖²/(2μ)`.
pub fn pl_constants(trace: &RunTrace, f_inf: f64) -> Result<PlConstants> {
    let k = &trace.constants;
    let n = k.n as f64;
    let gap0 = gap_at(&trace.records, 0, f_inf)?;
    let lh_r = lh_times_radius(k.hessian_lipschitz, gap0);
    let r = if k.hessian_lipschitz > 0.0 {
        (6.0 * gap0 / k.hessian_lipschitz).cbrt()
    } else {
        f64::INFINITY
    };
    // Both curvature terms equal 2n·L_H·R.
    Ok(PlConstants {
        r,
        c: 2.0 * n * k.lipschitz + 2.0 * n * lh_r + 2.0 * n * lh_r,
    })
}

pub fn check_pl_envelope(trace: &RunTrace, mu: f64, f_inf: f64) -> Result<EnvelopeReport> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("PL modulus must be positive, got {mu}")));
    }
    let consts = pl_constants(trace, f_inf)?;
    let recs = &trace.records;
    let g0 = recs[0].gnorm;
    let verdicts = (1..recs.len())
        .map(|nn| {
            let nf = nn as f64;
            let bound = 6.0 / mu * (consts.c / nf.cbrt()).powf(nf / 2.0) * g0;
            let observed = recs[nn].gnorm;
            Verdict {
                n: nn,
                bound,
                observed,
                record: nn,
                satisfied: within(observed, bound),
            }
        })
        .collect();
    Ok(EnvelopeReport::new(EnvelopeConstants::Pl(consts), 0, "pl", Some(consts.c.powi(3)), verdicts))
}

/// Candidate `k0` values `0, 1, …, len/2`.
pub fn k0_grid(len: usize) -> Vec<usize> {
    (0..=len / 2).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperlinearityIndex {
    /// `ρ_k = gnorm_{k+1}/gnorm_k`, 0 once the gradient vanishes.
    pub ratios: Vec<f64>,
    /// Largest ratio among the last `window` ones; `None` for a
    /// single-record trace.
    pub final_window_max: Option<f64>,
}

pub fn superlinearity_index(records: &[IterateRecord], window: usize) -> Result<SuperlinearityIndex> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    let ratios: Vec<f64> = records
        .windows(2)
        .map(|w| if w[0].gnorm == 0.0 { 0.0 } else { w[1].gnorm / w[0].gnorm })
        .collect();
    let tail = &ratios[ratios.len().saturating_sub(window)..];
    let final_window_max = (!tail.is_empty()).then(|| tail.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    Ok(SuperlinearityIndex {
        ratios,
        final_window_max,
    })
}

/// Records with a gap above the noise floor and a nonzero gradient, as
/// `(gap, gnorm)`.
fn informative(records: &[IterateRecord], f_inf: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let floor = DELTA_FLOOR_REL * f_inf.abs().max(1.0);
    records
        .iter()
        .map(move |r| (r.f - f_inf, r.gnorm))
        .filter(move |&(gap, g)| gap > floor && g > 0.0)
}

/// Empirical estimate of `c` in `f − min f ≤ (c/2)‖∇f‖²`: the largest
/// `2(f_k − f_inf)/gnorm_k²` on the trace.
pub fn empirical_gradient_domination(records: &[IterateRecord], f_inf: f64) -> Option<f64> {
    informative(records, f_inf).map(|(gap, g)| 2.0 * gap / (g * g)).reduce(f64::max)
}

/// Empirical estimate of `c` for `φ(t) = c t^{1−θ}`: the smallest `c` with
/// `φ′(f_k − f_inf)·gnorm_k ≥ 1` on every informative record.
pub fn empirical_kl_constant(records: &[IterateRecord], f_inf: f64, theta: f64) -> Option<f64> {
    informative(records, f_inf)
        .map(|(gap, g)| gap.powf(theta) / ((1.0 - theta) * g))
        .reduce(f64::max)
}

/// Empirical estimate of `μ` in `f − min f ≤ ‖∇f‖²/(2μ)`.
pub fn empirical_pl_modulus(records: &[IterateRecord], f_inf: f64) -> Option<f64> {
    informative(records, f_inf).map(|(gap, g)| g * g / (2.0 * gap)).reduce(f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::solvers::{Constants, Method, Termination};

    fn rec(k: usize, f: f64, gnorm: f64, r: f64) -> IterateRecord {
        IterateRecord {
            k,
            f,
            gnorm,
            r,
            lambda: 0.0,
            trace_g: 0.0,
            restarted: false,
            elapsed_s: 0.0,
        }
    }

    /// n = 2, L = 1, L_H = 3, κ̄ = 2, F(x₀) − f_inf = 4 so that R = 2.
    fn fabricated(gnorms: &[f64]) -> RunTrace {
        let fs = [5.0, 3.0, 2.0, 1.5, 1.25, 1.1];
        let rs = [0.0, 1.0, 2.0, 0.5, 0.25, 0.1];
        RunTrace {
            method: Method::CubicSr1,
            records: gnorms.iter().enumerate().map(|(k, &g)| rec(k, fs[k], g, rs[k])).collect(),
            x_final: Vector::zeros(2),
            termination: Termination::MaxIter,
            restart_total: 0,
            metric_repairs: 0,
            constants: Constants {
                n: 2,
                lipschitz: 1.0,
                hessian_lipschitz: 3.0,
                kappa_bar: 2.0,
            },
            f_star: Some(1.0),
            audit: Vec::new(),
        }
    }

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn cubic_constants_by_hand() {
        let t = fabricated(&[4.0, 2.0, 1.0, 0.5, 0.25, 0.1]);
        let kl = KLSpec::power(1.0, 0.5).unwrap();
        let k = cubic_constants(&t, 1.0, 1, &kl).unwrap();
        close(k.r, 2.0);
        close(k.d, 22.0);
        close(k.m, 22.0);
        // r_{k0} = ‖x₂ − x₁‖ = 2, φ(2) = √2.
        let c0 = (6.0 + 22.0 * 2f64.sqrt()).sqrt();
        close(k.c0, c0);
        close(k.c_cr1, 31.0);
        close(k.c_cr2, 12.0 * c0);
        close(k.c1, 3.0 * 2f64.sqrt());
        close(k.c2.unwrap(), 0.75);
        close(k.c.unwrap(), 0.75);
    }

    #[test]
    fn cubic_power_combination_off_half() {
        let t = fabricated(&[4.0, 2.0, 1.0]);
        let kl = KLSpec::power(2.0, 0.25).unwrap();
        let k = cubic_constants(&t, 1.0, 0, &kl).unwrap();
        // φ(4) = 2·4^{3/4}, C₁ = 3φ, C₂ = 3(1.5)^4, C = C₁^{2/3} C₂^{1/3}.
        let c1 = 6.0 * 4f64.powf(0.75);
        let c2 = 3.0 * 1.5f64.powi(4);
        close(k.c1, c1);
        close(k.c2.unwrap(), c2);
        close(k.c.unwrap(), c1.powf(2.0 / 3.0) * c2.powf(1.0 / 3.0));
    }

    #[test]
    fn cubic_constants_degenerate_and_errors() {
        let mut t = fabricated(&[0.0]);
        t.records[0].f = 1.0;
        let kl = KLSpec::power(1.0, 0.5).unwrap();
        let k = cubic_constants(&t, 1.0, 0, &kl).unwrap();
        assert_eq!(k.c0, 0.0);
        assert_eq!(k.c_cr2, 0.0);
        assert!(cubic_constants(&t, 1.0, 1, &kl).is_err());
        assert!(cubic_constants(&t, 2.0, 0, &kl).is_err());
        t.constants.hessian_lipschitz = 0.0;
        assert!(matches!(cubic_constants(&t, 1.0, 0, &kl), Err(Error::ConstantsUndefined(_))));
    }

    #[test]
    fn grad_constants_by_hand() {
        let t = fabricated(&[4.0, 2.0, 1.0, 0.5]);
        let kl = KLSpec::power(1.0, 0.5).unwrap();
        let k = grad_constants(&t, 1.0, 1, &kl).unwrap();
        let d = 15f64.sqrt() + 6.0;
        let m = (20.0f64 / 3.0).sqrt();
        let c0 = 2f64.powf(1.5) / 3.0 + m * 2f64.sqrt();
        close(k.d, d);
        close(k.m, m);
        close(k.c0, c0);
        close(k.c_gr, 2.0 * d * c0.cbrt());
        close(k.s1, 2.0 * 2f64.sqrt());
        close(k.s2.unwrap(), 0.5);
        close(k.s.unwrap(), 0.5);
    }

    #[test]
    fn gd_constants_by_hand() {
        let t = fabricated(&[4.0, 2.0]);
        let k = gd_constants(&t, 1.0, 1.0).unwrap();
        // nκ̄ = 4, Δ₀ = 4.
        let c_f = 16.0 * 16f64.powf(0.25);
        let c_r = 16.0 / 3f64.sqrt() * 32f64.powf(0.25) + 8.0 * 32f64.sqrt();
        close(k.c_f, c_f);
        close(k.lh_c_r, 3.0 * c_r);
        close(k.c_gd, 4.0 + 2.0 * 3f64.sqrt() * c_f + 2.0 * 3.0 * c_r);
        let report = check_gd_envelope(&t, 1.0, 1.0).unwrap();
        let v = report.verdicts[0];
        close(v.bound, (k.c_gd / 2.0).sqrt() * 4.0);
        assert_eq!(report.threshold, Some(k.c_gd.ceil()));
    }

    #[test]
    fn pl_constants_by_hand() {
        let t = fabricated(&[4.0, 2.0, 1.0]);
        let k = pl_constants(&t, 1.0).unwrap();
        close(k.c, 52.0);
        let report = check_pl_envelope(&t, 0.5, 1.0).unwrap();
        close(report.verdicts[0].bound, 12.0 * 52f64.sqrt() * 4.0);
        let n2 = 12.0 * 52.0 / 2f64.cbrt() * 4.0;
        close(report.verdicts[1].bound, n2);
    }

    #[test]
    fn pl_rate_decays_like_cube_root() {
        let t = fabricated(&[4.0, 2.0, 1.0, 0.5, 0.25, 0.1]);
        let report = check_pl_envelope(&t, 1.0, 1.0).unwrap();
        let c = pl_constants(&t, 1.0).unwrap().c;
        for v in &report.verdicts {
            let nf = v.n as f64;
            close(v.bound.ln(), 6f64.ln() + nf / 2.0 * (c.ln() - nf.ln() / 3.0) + 4f64.ln());
        }
    }

    #[test]
    fn zero_gradient_is_trivially_satisfied() {
        let mut t = fabricated(&[0.0, 0.0]);
        t.records[1].f = 5.0;
        let kl = KLSpec::power(1.0, 0.5).unwrap();
        let k = cubic_constants(&t, 1.0, 0, &kl).unwrap();
        assert!(check_cubic_envelope(&t, &k, &kl).all_satisfied());
        let k = grad_constants(&t, 1.0, 0, &kl).unwrap();
        assert!(check_grad_envelope(&t, &k, &kl).all_satisfied());
        assert!(check_gd_envelope(&t, 1.0, 1.0).unwrap().all_satisfied());
        assert!(check_pl_envelope(&t, 1.0, 1.0).unwrap().all_satisfied());
    }

    #[test]
    fn constant_trace_with_small_c_is_flagged() {
        let mut t = fabricated(&[1.0; 6]);
        for r in &mut t.records {
            r.f = 1.0 + 1e-6;
            r.r = 1e-6;
        }
        t.records[0].f = 1.0 + 1e-6;
        let kl = KLSpec::power(1e-3, 0.5).unwrap();
        let k = cubic_constants(&t, 1.0, 0, &kl).unwrap();
        let rep = check_cubic_envelope(&t, &k, &kl);
        assert_eq!(rep.first_violation, Some(1));
        assert_eq!(rep.summary(), "VIOLATED at N=1");
        let k = grad_constants(&t, 1.0, 0, &kl).unwrap();
        assert!(check_grad_envelope(&t, &k, &kl).first_violation.is_some());
    }

    #[test]
    fn observed_values_cite_records() {
        let t = fabricated(&[4.0, 2.0, 3.0, 0.5, 0.25, 0.1]);
        let kl = KLSpec::power(1.0, 0.75).unwrap();
        let k = cubic_constants(&t, 1.0, 1, &kl).unwrap();
        for v in check_cubic_envelope(&t, &k, &kl).verdicts {
            assert_eq!(v.observed.to_bits(), t.records[v.record].gnorm.to_bits());
            assert!(v.record >= 1 && v.record <= 1 + v.n);
        }
    }

    #[test]
    fn tabulated_phi() {
        let tab = TabulatedPhi::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 3.0]).unwrap();
        assert_eq!(tab.eval(0.0), 0.0);
        assert_eq!(tab.eval(0.5), 1.0);
        assert_eq!(tab.eval(2.0), 2.5);
        assert_eq!(tab.eval(5.0), 4.0);
        assert!(TabulatedPhi::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 3.0]).is_err());
        assert!(TabulatedPhi::new(vec![0.0, 1.0], vec![0.5, 1.0]).is_err());
        let kl = KLSpec::General(tab);
        let t = fabricated(&[4.0, 2.0, 1.0]);
        let k = cubic_constants(&t, 1.0, 0, &kl).unwrap();
        assert!(k.c2.is_none());
        // φ(4) extends the last segment: 3 + 0.5.
        close(k.c1, 3.0 * 3.5);
        let rep = check_cubic_envelope(&t, &k, &kl);
        assert_eq!(rep.case, "general");
        close(rep.verdicts[1].bound, cubic_general_bound(&k, 2, 4.0));
    }

    #[test]
    fn superlinearity_examples() {
        let geo: Vec<_> = (0..8).map(|k| rec(k, 0.0, 2f64.powi(-(k as i32)), 0.0)).collect();
        let s = superlinearity_index(&geo, 3).unwrap();
        assert!(s.ratios.iter().all(|&r| r == 0.5));
        assert_eq!(s.final_window_max, Some(0.5));
        let sup: Vec<_> = (0..6).map(|k| rec(k, 0.0, 2f64.powi(-((k * k) as i32)), 0.0)).collect();
        let s = superlinearity_index(&sup, 2).unwrap();
        for (k, r) in s.ratios.iter().enumerate() {
            assert_eq!(*r, 2f64.powi(-(2 * k as i32 + 1)));
        }
        let mut done = geo.clone();
        done[3].gnorm = 0.0;
        assert_eq!(superlinearity_index(&done, 1).unwrap().ratios[3], 0.0);
        assert!(superlinearity_index(&geo, 0).is_err());
        assert_eq!(superlinearity_index(&geo[..1], 4).unwrap().final_window_max, None);
    }

    #[test]
    fn empirical_constants() {
        let recs = vec![rec(0, 3.0, 2.0, 0.0), rec(1, 1.5, 1.0, 0.0), rec(2, 1.0, 0.0, 0.0)];
        close(empirical_gradient_domination(&recs, 1.0).unwrap(), 1.0);
        close(empirical_pl_modulus(&recs, 1.0).unwrap(), 1.0);
        close(empirical_kl_constant(&recs, 1.0, 0.5).unwrap(), 2f64.sqrt());
        assert_eq!(empirical_gradient_domination(&recs[2..], 1.0), None);
    }

    #[test]
    fn summary_lines() {
        let mk = |sat: &[bool]| {
            let verdicts = sat
                .iter()
                .enumerate()
                .map(|(i, &s)| Verdict {
                    n: i + 1,
                    bound: 1.0,
                    observed: 0.0,
                    record: i + 1,
                    satisfied: s,
                })
                .collect();
            EnvelopeReport::new(EnvelopeConstants::Pl(PlConstants { r: 1.0, c: 1.0 }), 0, "pl", Some(2.0), verdicts)
        };
        assert_eq!(mk(&[true, true]).summary(), "SATISFIED for N=1..2");
        assert_eq!(mk(&[false, true, true]).summary(), "VIOLATED at N=1; SATISFIED from N=2");
        assert!(mk(&[false, true, true]).satisfied_past_threshold());
        assert_eq!(mk(&[true, false]).summary(), "VIOLATED at N=2");
        assert_eq!(mk(&[]).summary(), "NO DATA (trace too short)");
    }
}
