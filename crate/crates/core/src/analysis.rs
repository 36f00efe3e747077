//! Post-processing of trajectories: decay-envelope fits with the certified
//! kernel rate, Levine convexity verification, the closed-form lower bound
//! on the blow-up time, the optimized upper bound over (eta, mu), and the
//! assembled blow-up report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{levine_series, lyapunov_l};
use crate::kernel::{blowup_mass_bound, KernelSpec};
use crate::problem::ProblemSpec;
use crate::solver::{InitialNorms, RunStatus, Trajectory};
use crate::well::WellReport;

/// Scalar time series extracted from a trajectory's records; everything the
/// report builders need, detached from mesh-sized state.
#[derive(Debug, Clone)]
pub struct RunSeries {
    pub status: RunStatus,
    pub t_obs: f64,
    pub t: Vec<f64>,
    pub e: Vec<f64>,
    pub elastic: Vec<f64>,
    pub memory: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub l2_sq: Vec<f64>,
    pub cum_hardy_sq: Vec<f64>,
    pub cum_hardy_cross: Vec<f64>,
    pub cum_damping: Vec<f64>,
    pub init: InitialNorms,
}

impl From<&Trajectory> for RunSeries {
    fn from(traj: &Trajectory) -> Self {
        let r = &traj.records;
        RunSeries {
            status: traj.status,
            t_obs: traj.t_obs,
            t: r.iter().map(|x| x.t).collect(),
            e: r.iter().map(|x| x.e).collect(),
            elastic: r.iter().map(|x| x.elastic).collect(),
            memory: r.iter().map(|x| x.memory).collect(),
            phi: r.iter().map(|x| x.phi).collect(),
            psi: r.iter().map(|x| x.psi).collect(),
            l2_sq: r.iter().map(|x| x.l2_norm * x.l2_norm).collect(),
            cum_hardy_sq: r.iter().map(|x| x.cum_hardy_sq).collect(),
            cum_hardy_cross: r.iter().map(|x| x.cum_hardy_cross).collect(),
            cum_damping: r.iter().map(|x| x.cum_damping).collect(),
            init: traj.init,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayBranch {
    Exponential,
    Polynomial,
    Improved,
}

/// One least-squares envelope fit of `log E` against the branch coordinate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub branch: DecayBranch,
    pub fitted_slope: f64,
    pub intercept: f64,
    pub fit_r2: f64,
    /// Envelope exponent used for extrapolation: the theoretical rate for
    /// the polynomial branches, the fitted slope for the exponential one.
    pub envelope_slope: f64,
    pub envelope_constant_c: f64,
    pub extrapolation_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub t1: f64,
    pub q: f64,
    pub branch: DecayBranch,
    /// Flat copies of the primary fit, `None` when no fit was possible.
    pub fitted_slope: Option<f64>,
    pub fit_r2: Option<f64>,
    pub envelope_constant_c: Option<f64>,
    pub extrapolation_pass: Option<bool>,
    pub fit: Option<DecayFit>,
    /// The standard-rate fit, kept alongside when the improved branch applies.
    pub standard_fit: Option<DecayFit>,
    pub monotone_pass: bool,
    pub non_decaying: bool,
    pub lyapunov_c1: Option<f64>,
    pub lyapunov_c2: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayParams {
    /// Fit window start.
    pub t1: f64,
    /// Lyapunov diagnostic weights.
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams { t1: 0.5, eps1: 0.01, eps2: 0.01 }
    }
}

/// (intercept, slope, r^2) of ordinary least squares y ~ a + b x.
fn linfit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = syy - slope * sxy;
    let r2 = if syy > 0.0 { 1.0 - (ss_res / syy).max(0.0) } else { 1.0 };
    Some((intercept, slope, r2))
}

fn branch_coordinate(branch: DecayBranch, q: f64, xi0: f64, dt: f64) -> f64 {
    match branch {
        DecayBranch::Exponential => xi0 * dt,
        DecayBranch::Polynomial => (1.0 + xi0.powf(2.0 * q - 1.0) * dt).ln(),
        DecayBranch::Improved => (1.0 + xi0.powf(q) * dt).ln(),
    }
}

fn fit_branch(branch: DecayBranch, q: f64, xi0: f64, dts: &[f64], e: &[f64]) -> Option<DecayFit> {
    if dts.len() < 6 {
        return None;
    }
    let x: Vec<f64> = dts.iter().map(|&d| branch_coordinate(branch, q, xi0, d)).collect();
    let y: Vec<f64> = e.iter().map(|&v| v.ln()).collect();
    let (intercept, slope, r2) = linfit(&x, &y)?;
    let envelope_slope = match branch {
        DecayBranch::Exponential => slope,
        DecayBranch::Polynomial => -1.0 / (2.0 * q - 2.0),
        DecayBranch::Improved => -1.0 / (q - 1.0),
    };
    let half = x.len() / 2;
    let mut c = 0.0f64;
    for i in 0..half {
        c = c.max(e[i] / (envelope_slope * x[i]).exp());
    }
    let mut pass = c > 0.0;
    for i in half..x.len() {
        if e[i] > 1.1 * c * (envelope_slope * x[i]).exp() {
            pass = false;
            break;
        }
    }
    Some(DecayFit {
        branch,
        fitted_slope: slope,
        intercept,
        fit_r2: r2,
        envelope_slope,
        envelope_constant_c: c,
        extrapolation_pass: pass,
    })
}

/// Envelope fits on a bare (t, E) series: the primary branch selected by the
/// certified decay exponent, plus the standard-rate fit when the improved
/// rate applies. Returns `(primary, standard, non_decaying)`.
pub fn fit_decay_series(
    t: &[f64],
    e: &[f64],
    q: f64,
    xi0: f64,
    improved: bool,
    t1: f64,
) -> (Option<DecayFit>, Option<DecayFit>, bool) {
    let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= t1).collect();
    if idx.is_empty() || idx.iter().any(|&i| e[i] <= 0.0) {
        return (None, None, false);
    }
    let dts: Vec<f64> = idx.iter().map(|&i| t[i] - t1).collect();
    let ew: Vec<f64> = idx.iter().map(|&i| e[i]).collect();
    let (primary_branch, standard) = if q == 1.0 {
        (DecayBranch::Exponential, None)
    } else if improved {
        (DecayBranch::Improved, fit_branch(DecayBranch::Polynomial, q, xi0, &dts, &ew))
    } else {
        (DecayBranch::Polynomial, None)
    };
    let fit = fit_branch(primary_branch, q, xi0, &dts, &ew);
    let non_decaying = fit.map(|f| f.fitted_slope > -1e-10).unwrap_or(false);
    (fit, standard, non_decaying)
}

/// Full decay report for a completed trajectory.
pub fn fit_decay(
    series: &RunSeries,
    kernel: &KernelSpec,
    params: &DecayParams,
) -> Result<DecayReport> {
    if series.status != RunStatus::Completed {
        return Err(Error::InvalidInput(format!(
            "decay fit needs a completed trajectory, run ended with {:?}",
            series.status
        )));
    }
    let q = kernel.decay_exponent();
    let xi0 = kernel.xi0();
    let improved = kernel.improved_rate_applies().unwrap_or(false);
    let (fit, standard_fit, non_decaying) =
        fit_decay_series(&series.t, &series.e, q, xi0, improved, params.t1);
    let branch = fit.map(|f| f.branch).unwrap_or(if q == 1.0 {
        DecayBranch::Exponential
    } else if improved {
        DecayBranch::Improved
    } else {
        DecayBranch::Polynomial
    });

    // monotonicity within ten times the worst balance defect
    let e0 = series.init.e0;
    let mut defect = 0.0f64;
    for i in 0..series.e.len() {
        defect = defect.max(series.e[i] + series.cum_damping[i] - e0);
    }
    let slack = (10.0 * defect).max(1e-12 * e0.abs());
    let monotone_pass = series.e.windows(2).all(|w| w[1] <= w[0] + slack);

    let (mut c1, mut c2) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut equivalence_ok = true;
    for i in 0..series.e.len() {
        if series.e[i] <= 0.0 {
            equivalence_ok = false;
            break;
        }
        let l = lyapunov_l(series.e[i], series.phi[i], series.psi[i], params.eps1, params.eps2);
        let ratio = l / series.e[i];
        c1 = c1.min(ratio);
        c2 = c2.max(ratio);
    }
    Ok(DecayReport {
        t1: params.t1,
        q,
        branch,
        fitted_slope: fit.as_ref().map(|f| f.fitted_slope),
        fit_r2: fit.as_ref().map(|f| f.fit_r2),
        envelope_constant_c: fit.as_ref().map(|f| f.envelope_constant_c),
        extrapolation_pass: fit.as_ref().map(|f| f.extrapolation_pass),
        fit,
        standard_fit,
        monotone_pass,
        non_decaying,
        lyapunov_c1: equivalence_ok.then_some(c1),
        lyapunov_c2: equivalence_ok.then_some(c2),
    })
}

/// `T_* = ln(1 + l^{p-1} M(0)^{2-p}) / ((p-2) K B_{2(p-1)})`.
pub fn blowup_lower_bound(p: f64, k_sup: f64, b2p2: f64, ell: f64, m0: f64) -> Result<f64> {
    if m0 <= 0.0 {
        return Err(Error::DegenerateField(
            "zero data cannot blow up; M(0) must be positive".into(),
        ));
    }
    if k_sup <= 0.0 || b2p2 <= 0.0 {
        return Err(Error::InvalidInput("lower bound needs positive K and B_{2(p-1)}".into()));
    }
    Ok((1.0 + ell.powf(p - 1.0) * m0.powf(2.0 - p)).ln() / ((p - 2.0) * k_sup * b2p2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum E0Case {
    NegativeE0,
    ZeroE0,
    PositiveE0,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UpperBound {
    /// Bound at the optimum, denominator `(p-2) uv0 + eta mu - 2 h0`.
    pub t_upper: f64,
    /// Variant 4G(0)/((p-2)G'(0)) solved for T at the same point,
    /// denominator `(p-2)(uv0 + eta mu) - 2 h0`; the two coincide at p = 3.
    pub t_upper_proof_form: f64,
    pub eta_star: f64,
    pub mu_star: f64,
    pub case: E0Case,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaMuSearch {
    pub mu_min: f64,
    pub mu_max: f64,
    pub eta_points: usize,
    pub mu_points: usize,
    pub refine_rounds: usize,
}

impl Default for EtaMuSearch {
    fn default() -> Self {
        EtaMuSearch { mu_min: 1e-4, mu_max: 1e4, eta_points: 48, mu_points: 64, refine_rounds: 2 }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Minimize the statement-form upper bound
/// `(2||u0||^2 + 2 eta mu^2) / ((p-2)(u0,u1) + eta mu - 2 h0)`
/// over the case-admissible (eta, mu) box.
pub fn blowup_upper_bound(
    init: &InitialNorms,
    p: f64,
    d: f64,
    search: &EtaMuSearch,
) -> Result<UpperBound> {
    let e0 = init.e0;
    let case = if e0 < 0.0 {
        E0Case::NegativeE0
    } else if e0 == 0.0 {
        E0Case::ZeroE0
    } else {
        E0Case::PositiveE0
    };
    let num = |eta: f64, mu: f64| 2.0 * init.l2_sq0 + 2.0 * eta * mu * mu;
    let den_statement = |eta: f64, mu: f64| (p - 2.0) * init.uv0 + eta * mu - 2.0 * init.hardy0;
    let den_proof = |eta: f64, mu: f64| (p - 2.0) * (init.uv0 + eta * mu) - 2.0 * init.hardy0;

    if case == E0Case::ZeroE0 {
        // zero energy pins eta = 0 and needs (u0, u1) > 0 for G' > 0
        if init.uv0 <= 0.0 {
            return Err(Error::Infeasible("zero-energy case requires (u0, u1) > 0".into()));
        }
        let den = den_statement(0.0, 1.0);
        if den <= 0.0 {
            return Err(Error::Infeasible(format!(
                "denominator (p-2)(u0,u1) - 2 h0 = {den} is not positive"
            )));
        }
        let t = num(0.0, 1.0) / den;
        return Ok(UpperBound {
            t_upper: t,
            t_upper_proof_form: t,
            eta_star: 0.0,
            mu_star: 0.0,
            case,
        });
    }

    let eta_max = match case {
        E0Case::NegativeE0 => -2.0 * e0,
        E0Case::PositiveE0 => {
            if e0 >= d {
                return Err(Error::NotApplicable(format!(
                    "positive-energy case needs E0 < d (E0 = {e0}, d = {d})"
                )));
            }
            let gamma_t0 = ((p - 2.0) / (2.0 * p)) * init.grad_sq0 - d;
            if gamma_t0 <= 0.0 {
                return Err(Error::NotApplicable(format!(
                    "a-priori gamma estimate {gamma_t0} is not positive"
                )));
            }
            2.0 * (e0 / d) * gamma_t0
        }
        E0Case::ZeroE0 => unreachable!(),
    };

    let mut best: Option<(f64, f64, f64)> = None;
    let scan = |etas: &[f64], mus: &[f64], best: &mut Option<(f64, f64, f64)>| {
        for &eta in etas {
            if !(eta > 0.0 && eta < eta_max) {
                continue;
            }
            for &mu in mus {
                if mu <= 0.0 {
                    continue;
                }
                // G'(0) = 2 (u0,u1) + 2 eta mu must be positive
                if init.uv0 + eta * mu <= 0.0 {
                    continue;
                }
                let den = den_statement(eta, mu);
                if den <= 0.0 {
                    continue;
                }
                let t = num(eta, mu) / den;
                if best.map(|b| t < b.0).unwrap_or(true) {
                    *best = Some((t, eta, mu));
                }
            }
        }
    };

    let etas = log_grid(eta_max * 1e-6, eta_max * (1.0 - 1e-9), search.eta_points);
    let mus = log_grid(search.mu_min, search.mu_max, search.mu_points);
    scan(&etas, &mus, &mut best);
    for _ in 0..search.refine_rounds {
        let Some((_, e_star, m_star)) = best else { break };
        let etas = log_grid(
            (e_star / 4.0).max(eta_max * 1e-9),
            (e_star * 4.0).min(eta_max * (1.0 - 1e-9)),
            search.eta_points,
        );
        let mus = log_grid(
            (m_star / 4.0).max(search.mu_min),
            (m_star * 4.0).min(search.mu_max),
            search.mu_points,
        );
        scan(&etas, &mus, &mut best);
    }
    match best {
        Some((t, eta, mu)) => {
            let dp = den_proof(eta, mu);
            Ok(UpperBound {
                t_upper: t,
                t_upper_proof_form: if dp > 0.0 { num(eta, mu) / dp } else { f64::INFINITY },
                eta_star: eta,
                mu_star: mu,
                case,
            })
        }
        None => Err(Error::Infeasible(
            "no admissible (eta, mu) makes the upper-bound denominator positive".into(),
        )),
    }
}

/// `gamma_run = min_t ((p-2)/p)(elastic + memory) - d`, with the a-priori
/// t = 0 estimate `((p-2)/2p)||grad u0||^2 - d` alongside.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma_run: f64,
    pub t_at_min: f64,
    pub gamma_t0: f64,
    pub positive: bool,
    /// Sign agreement between the run minimum and the t = 0 estimate.
    pub agrees_with_t0: bool,
}

pub fn estimate_gamma(series: &RunSeries, p: f64, d: f64) -> GammaEstimate {
    let factor = (p - 2.0) / p;
    let mut gamma_run = f64::INFINITY;
    let mut t_at_min = 0.0;
    for i in 0..series.t.len() {
        let v = factor * (series.elastic[i] + series.memory[i]) - d;
        if v < gamma_run {
            gamma_run = v;
            t_at_min = series.t[i];
        }
    }
    let gamma_t0 = ((p - 2.0) / (2.0 * p)) * series.init.grad_sq0 - d;
    GammaEstimate {
        gamma_run,
        t_at_min,
        gamma_t0,
        positive: gamma_run > 0.0,
        agrees_with_t0: (gamma_run > 0.0) == (gamma_t0 > 0.0),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvexityCheck {
    /// min over interior records of G G'' - ((p+2)/4) G'^2.
    pub min_combination: f64,
    pub t_at_min: f64,
    /// Acceptance threshold -5 * (max record spacing) * scale.
    pub threshold: f64,
    pub scale: f64,
    pub pass: bool,
}

/// Second derivative by non-uniform central differences of G', then the
/// Levine combination pointwise.
pub fn convexity_check(t: &[f64], g: &[f64], gp: &[f64], p: f64) -> Result<ConvexityCheck> {
    let n = t.len();
    if n < 3 || g.len() != n || gp.len() != n {
        return Err(Error::InvalidInput(format!(
            "convexity check needs at least 3 aligned records, got {n}"
        )));
    }
    let mut min_combination = f64::INFINITY;
    let mut t_at_min = t[0];
    let mut scale = 0.0f64;
    let mut max_spacing = 0.0f64;
    for i in 1..n - 1 {
        let gpp = (gp[i + 1] - gp[i - 1]) / (t[i + 1] - t[i - 1]);
        let comb = g[i] * gpp - (p + 2.0) / 4.0 * gp[i] * gp[i];
        if comb < min_combination {
            min_combination = comb;
            t_at_min = t[i];
        }
        scale = scale.max((g[i] * gpp).abs());
        max_spacing = max_spacing.max(t[i + 1] - t[i]).max(t[i] - t[i - 1]);
    }
    let threshold = -5.0 * max_spacing * scale;
    Ok(ConvexityCheck {
        min_combination,
        t_at_min,
        threshold,
        scale,
        pass: min_combination >= threshold,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupReport {
    pub t_obs: f64,
    pub t_lower: f64,
    pub t_upper: Option<f64>,
    pub t_upper_proof_form: Option<f64>,
    pub eta_star: Option<f64>,
    pub mu_star: Option<f64>,
    pub theta: f64,
    pub case: E0Case,
    /// Min over the run of `((p-2)/p)(elastic + memory) - d`; `gamma` below
    /// carries the argmin time and the t = 0 cross-check.
    pub gamma_run: f64,
    pub gamma: GammaEstimate,
    /// `1 - l < blowup_mass_bound(p, theta)`.
    pub condition_5_1_ok: bool,
    /// Min over the run of `G G'' - ((p+2)/4) G'^2`; `convexity` below
    /// carries the argmin time, the differencing threshold, and the verdict.
    pub convexity_min: f64,
    pub convexity: ConvexityCheck,
    pub lower_ok: bool,
    pub upper_ok: Option<bool>,
    /// Why the upper bound is absent, when it is.
    pub upper_bound_note: Option<String>,
}

/// Assemble the full blow-up report for a trajectory that ended in blow-up.
pub fn blowup_report(
    series: &RunSeries,
    problem: &ProblemSpec,
    kernel: &KernelSpec,
    well: &WellReport,
    search: &EtaMuSearch,
) -> Result<BlowupReport> {
    let t_obs = match series.status {
        RunStatus::BlewUp { t_obs } => t_obs,
        other => {
            return Err(Error::InvalidInput(format!(
                "blow-up report needs a blown-up trajectory, run ended with {other:?}"
            )))
        }
    };
    let p = problem.p;
    let ell = kernel.ell();
    let init = &series.init;
    let theta = init.e0 / well.d;
    let t_lower = blowup_lower_bound(p, problem.k.sup(), well.b2p2, ell, init.m0)?;
    let condition_5_1_ok = match blowup_mass_bound(p, theta) {
        Ok(bound) => !bound.degenerate && (1.0 - ell) < bound.value,
        Err(_) => false,
    };
    let (upper, note) = if condition_5_1_ok {
        match blowup_upper_bound(init, p, well.d, search) {
            Ok(u) => (Some(u), None),
            Err(e) => (None, Some(format!("upper bound not applicable: {e}"))),
        }
    } else {
        (
            None,
            Some("upper bound not applicable: kernel mass exceeds the smallness condition".into()),
        )
    };
    let gamma = estimate_gamma(series, p, well.d);
    // Levine pair with the optimized parameters (fall back to eta = 1, mu = 1)
    let (eta, mu) = upper.map(|u| (u.eta_star, u.mu_star)).unwrap_or((1.0, 1.0));
    let (g, gp) = levine_series(
        &series.t,
        &series.l2_sq,
        &series.cum_hardy_sq,
        &series.phi,
        &series.cum_hardy_cross,
        init.hardy0,
        eta,
        if mu > 0.0 { mu } else { 1.0 },
        t_obs,
    );
    let convexity = convexity_check(&series.t, &g, &gp, p)?;
    let case = upper.map(|u| u.case).unwrap_or(if init.e0 < 0.0 {
        E0Case::NegativeE0
    } else if init.e0 == 0.0 {
        E0Case::ZeroE0
    } else {
        E0Case::PositiveE0
    });
    Ok(BlowupReport {
        t_obs,
        t_lower,
        t_upper: upper.map(|u| u.t_upper),
        t_upper_proof_form: upper.map(|u| u.t_upper_proof_form),
        eta_star: upper.map(|u| u.eta_star),
        mu_star: upper.map(|u| u.mu_star),
        theta,
        case,
        gamma_run: gamma.gamma_run,
        gamma,
        condition_5_1_ok,
        convexity_min: convexity.min_combination,
        convexity,
        lower_ok: t_obs >= t_lower * 0.98,
        upper_ok: upper.map(|u| t_obs <= u.t_upper),
        upper_bound_note: note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic_series(t_end: f64, n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect();
        let e: Vec<f64> = t.iter().map(|&x| f(x)).collect();
        (t, e)
    }

    #[test]
    fn exponential_slope_recovered_to_four_digits() {
        let (t, e) = synthetic_series(10.0, 401, |x| (-2.0 * x).exp());
        let (fit, standard, non_decaying) = fit_decay_series(&t, &e, 1.0, 1.0, false, 0.5);
        let fit = fit.unwrap();
        assert_eq!(fit.branch, DecayBranch::Exponential);
        assert_relative_eq!(fit.fitted_slope, -2.0, max_relative = 1e-6);
        assert!(fit.fit_r2 > 1.0 - 1e-12);
        // log E = -2 t = -2 (x + t1) in the coordinate x = t - t1
        assert_relative_eq!(fit.intercept, -1.0, max_relative = 1e-9);
        assert!(fit.extrapolation_pass);
        assert!(standard.is_none());
        assert!(!non_decaying);
    }

    #[test]
    fn polynomial_series_recovers_both_rates() {
        // E = (1+t)^{-4} with q = 1.25, xi0 = 1: improved rate applies,
        // improved envelope exponent -1/(q-1) = -4, standard -1/(2q-2) = -2
        let (t, e) = synthetic_series(30.0, 601, |x| (1.0 + x).powi(-4));
        let (fit, standard, non_decaying) = fit_decay_series(&t, &e, 1.25, 1.0, true, 0.0);
        let fit = fit.unwrap();
        assert_eq!(fit.branch, DecayBranch::Improved);
        assert_relative_eq!(fit.fitted_slope, -4.0, max_relative = 1e-6);
        assert_relative_eq!(fit.envelope_slope, -4.0, max_relative = 1e-12);
        assert!(fit.fit_r2 > 1.0 - 1e-12);
        assert!(fit.extrapolation_pass);
        let st = standard.unwrap();
        assert_eq!(st.branch, DecayBranch::Polynomial);
        assert_relative_eq!(st.fitted_slope, -4.0, max_relative = 1e-6);
        assert_relative_eq!(st.envelope_slope, -2.0, max_relative = 1e-12);
        // decay faster than the standard envelope is consistent with it
        assert!(st.extrapolation_pass);
        assert!(!non_decaying);
    }

    #[test]
    fn constant_energy_is_flagged_non_decaying() {
        let (t, e) = synthetic_series(10.0, 101, |_| 2.0);
        let (fit, _, non_decaying) = fit_decay_series(&t, &e, 1.0, 1.0, false, 0.5);
        let fit = fit.unwrap();
        assert!(fit.fitted_slope.abs() < 1e-12);
        assert!(non_decaying);
        // constant envelope, C = E, trivially extrapolates
        assert_relative_eq!(fit.envelope_constant_c, 2.0, max_relative = 1e-12);
        assert!(fit.extrapolation_pass);
    }

    #[test]
    fn nonpositive_energy_gives_no_fit() {
        let (t, e) = synthetic_series(10.0, 101, |x| 1.0 - x / 5.0);
        let (fit, standard, _) = fit_decay_series(&t, &e, 1.0, 1.0, false, 0.5);
        assert!(fit.is_none());
        assert!(standard.is_none());
    }

    #[test]
    fn lower_bound_hand_value_and_monotonicity() {
        // p = 3, K = 1, B = 1, l = 0.5, M0 = 1: ln(1 + 0.25)
        let t = blowup_lower_bound(3.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        assert_relative_eq!(t, 1.25f64.ln(), max_relative = 1e-15);
        // decreasing in M(0)
        let t2 = blowup_lower_bound(3.0, 1.0, 1.0, 0.5, 2.0).unwrap();
        assert!(t2 < t);
        // increasing in ell
        let t3 = blowup_lower_bound(3.0, 1.0, 1.0, 0.8, 1.0).unwrap();
        assert!(t3 > t);
        // vanishing-mass limit
        let t4 = blowup_lower_bound(3.0, 1.0, 1.0, 1e-12, 1.0).unwrap();
        assert!((0.0..1e-20).contains(&t4));
        assert!(blowup_lower_bound(3.0, 1.0, 1.0, 0.5, 0.0).is_err());
        // grid of (p, m0): monotone decreasing in m0
        for p in [2.5, 3.0, 3.5] {
            let mut prev = f64::INFINITY;
            for m0 in [0.5, 1.0, 2.0, 4.0] {
                let v = blowup_lower_bound(p, 1.0, 1.0, 0.5, m0).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }

    fn init_with(e0: f64, l2_sq0: f64, uv0: f64, hardy0: f64, grad_sq0: f64) -> InitialNorms {
        InitialNorms {
            e0,
            i0: 0.0,
            j0: 0.0,
            kin0: 0.0,
            l2_sq0,
            grad_sq0,
            hardy0,
            m0: l2_sq0 + grad_sq0,
            uv0,
        }
    }

    #[test]
    fn upper_bound_zero_energy_case_is_the_direct_substitution() {
        let init = init_with(0.0, 2.0, 1.0, 0.2, 1.0);
        let u = blowup_upper_bound(&init, 3.0, 1.0, &EtaMuSearch::default()).unwrap();
        assert_eq!(u.case, E0Case::ZeroE0);
        // T = 2*2 / ((p-2)*1 - 2*0.2) = 4 / 0.6
        assert_relative_eq!(u.t_upper, 4.0 / 0.6, max_relative = 1e-14);
        assert_relative_eq!(u.t_upper_proof_form, u.t_upper, max_relative = 1e-14);
        assert_eq!(u.eta_star, 0.0);
        // negative inner product: no feasible eta in the zero-energy case
        let bad = init_with(0.0, 2.0, -1.0, 0.2, 1.0);
        assert!(matches!(
            blowup_upper_bound(&bad, 3.0, 1.0, &EtaMuSearch::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn upper_bound_search_is_grid_refinement_invariant() {
        let init = init_with(-0.5, 1.0, 0.3, 0.05, 2.0);
        let coarse = blowup_upper_bound(&init, 3.0, 1.0, &EtaMuSearch::default()).unwrap();
        let fine = blowup_upper_bound(
            &init,
            3.0,
            1.0,
            &EtaMuSearch { eta_points: 96, mu_points: 128, ..EtaMuSearch::default() },
        )
        .unwrap();
        assert_eq!(coarse.case, E0Case::NegativeE0);
        assert_relative_eq!(coarse.t_upper, fine.t_upper, max_relative = 1e-2);
        // optimizer beats an arbitrary feasible point
        let arbitrary = (2.0 * init.l2_sq0 + 2.0 * 0.5 * 1.0)
            / ((3.0 - 2.0) * init.uv0 + 0.5 * 1.0 - 2.0 * init.hardy0);
        assert!(coarse.t_upper <= arbitrary + 1e-12);
        // eta stays inside the case range (0, -2 E0)
        assert!(coarse.eta_star > 0.0 && coarse.eta_star < 1.0);
        // p = 3: proof and statement forms coincide at the optimum
        assert_relative_eq!(coarse.t_upper_proof_form, coarse.t_upper, max_relative = 1e-12);
    }

    #[test]
    fn upper_bound_positive_energy_needs_the_gamma_estimate() {
        // gradient too small: a-priori gamma nonpositive
        let small = init_with(0.5, 1.0, 0.5, 0.0, 1.0);
        assert!(matches!(
            blowup_upper_bound(&small, 3.0, 1.0, &EtaMuSearch::default()),
            Err(Error::NotApplicable(_))
        ));
        // E0 >= d rejected
        let over = init_with(1.5, 1.0, 0.5, 0.0, 100.0);
        assert!(matches!(
            blowup_upper_bound(&over, 3.0, 1.0, &EtaMuSearch::default()),
            Err(Error::NotApplicable(_))
        ));
        // feasible positive-energy case
        let ok = init_with(0.5, 1.0, 0.5, 0.0, 100.0);
        let u = blowup_upper_bound(&ok, 3.0, 1.0, &EtaMuSearch::default()).unwrap();
        assert_eq!(u.case, E0Case::PositiveE0);
        assert!(u.t_upper > 0.0);
        let gamma_t0 = (1.0 / 6.0) * 100.0 - 1.0;
        assert!(u.eta_star < 2.0 * 0.5 * gamma_t0);
    }

    #[test]
    fn convexity_zero_solution_closed_form() {
        // u = 0, eta = 1, mu = 2: G = (t+mu)^2, G' = 2(t+mu), G'' = 2
        // combination = 2(t+mu)^2 - (p+2)(t+mu)^2 = -p (t+mu)^2
        let n = 51;
        let t: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        let zeros = vec![0.0; n];
        let (g, gp) = levine_series(&t, &zeros, &zeros, &zeros, &zeros, 0.0, 1.0, 2.0, 5.0);
        let p = 3.0;
        let check = convexity_check(&t, &g, &gp, p).unwrap();
        // central differences are exact on the quadratic G
        let worst_t = t[n - 2];
        assert_relative_eq!(
            check.min_combination,
            -p * (worst_t + 2.0) * (worst_t + 2.0),
            max_relative = 1e-10
        );
        assert!(!check.pass);
        assert!(convexity_check(&t[..2], &g[..2], &gp[..2], p).is_err());
    }

    #[test]
    fn convexity_differencing_is_second_order() {
        // G = (t+1)^3: G'' = 6(t+1); central differencing of G' = 3(t+1)^2
        // is exact for the quadratic G', so use G' = exp(t) instead
        let comb_err = |dt: f64| {
            let n = (1.0 / dt) as usize + 1;
            let t: Vec<f64> = (0..n).map(|i| dt * i as f64).collect();
            let g: Vec<f64> = t.iter().map(|&x| x.exp()).collect();
            let gp = g.clone();
            let check = convexity_check(&t, &g, &gp, 2.5).unwrap();
            // exact combination: e^{2t}(1 - (p+2)/4), minimized at largest t
            let exact = |x: f64| (2.0 * x).exp() * (1.0 - 4.5 / 4.0);
            let worst = t[n - 2];
            (check.min_combination - exact(worst)).abs()
        };
        let coarse = comb_err(0.02);
        let fine = comb_err(0.01);
        assert!(coarse / fine > 3.0, "not second order: {coarse} vs {fine}");
    }

    #[test]
    fn gamma_estimate_minimum_and_t0_value() {
        let init = init_with(0.1, 1.0, 0.0, 0.0, 12.0);
        let series = RunSeries {
            status: RunStatus::BlewUp { t_obs: 1.0 },
            t_obs: 1.0,
            t: vec![0.0, 0.5, 1.0],
            e: vec![0.0; 3],
            elastic: vec![2.0, 1.5, 3.0],
            memory: vec![0.0, 0.2, 0.5],
            phi: vec![0.0; 3],
            psi: vec![0.0; 3],
            l2_sq: vec![0.0; 3],
            cum_hardy_sq: vec![0.0; 3],
            cum_hardy_cross: vec![0.0; 3],
            cum_damping: vec![0.0; 3],
            init,
        };
        let p = 3.0;
        let d = 0.4;
        let g = estimate_gamma(&series, p, d);
        // minimum of (1/3)(elastic+memory) - d over records: at t = 0.5
        assert_relative_eq!(g.gamma_run, (1.0 / 3.0) * 1.7 - 0.4, max_relative = 1e-14);
        assert_relative_eq!(g.t_at_min, 0.5, max_relative = 1e-15);
        assert_relative_eq!(g.gamma_t0, (1.0 / 6.0) * 12.0 - 0.4, max_relative = 1e-14);
        assert!(g.positive);
        assert!(g.agrees_with_t0);
    }
}
