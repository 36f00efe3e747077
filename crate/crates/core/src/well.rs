//! Potential-well machinery: the well depth `d` by constrained maximization,
//! optimal embedding constants `B_r`, Nehari scaling `lambda*`, and the
//! classification of initial data into the stable set W or the unstable
//! set V, including the small-energy admissibility threshold.
//!
//! All extremal problems are solved by projected gradient ascent in the
//! H1 metric: the raw pointwise gradient is preconditioned by one
//! `solve_neg_laplacian` pass, which keeps the iteration count independent
//! of the mesh resolution. Positivity of iterates is automatic because the
//! inverse of the discrete operator is entrywise nonnegative.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::random_smooth;
use crate::functionals::j_and_i;
use crate::mesh::{RadialField, RadialMesh};
use crate::problem::ProblemSpec;

/// Optimizer controls shared by `well_depth` and `estimate_b_r`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptParams {
    pub max_iter: usize,
    /// Relative flatness of the objective over `window` iterations.
    pub tol: f64,
    pub window: usize,
    /// Random positive re-initializations for the agreement check.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptParams {
    fn default() -> Self {
        OptParams { max_iter: 2000, tol: 1e-8, window: 50, restarts: 5, seed: 7 }
    }
}

/// Output of `well_depth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellReport {
    /// Depth of the potential well.
    pub d: f64,
    /// Optimal embedding constants: sup of the integral `int |w|^r` over
    /// `||grad w|| = 1`, for r = 2, p, 2(p-1).
    pub b2: f64,
    pub bp: f64,
    pub b2p2: f64,
    /// Nehari scaling of the reported minimizer (the minimizer is stored
    /// with `ell ||grad w||^2 = 1`, so this is the rescaling that puts it
    /// on the manifold).
    pub lambda_star_of_minimizer: f64,
    pub minimizer: RadialField,
    pub iterations: usize,
    /// Objective flatness at exit (relative change over the last window).
    pub residual: f64,
    pub converged: bool,
    /// Spread of d across random restarts: (max - min)/min.
    pub restart_spread: f64,
    /// Small-energy admissibility threshold
    /// `((p-2) ell / 2p) (ell / (2 K B_p))^{2/(p-2)}`.
    pub small_energy_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellSet {
    #[serde(alias = "W")]
    W,
    #[serde(alias = "V")]
    V,
    #[serde(alias = "Boundary")]
    Boundary,
    #[serde(alias = "Neither")]
    Neither,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Classification {
    pub e0: f64,
    pub i0: f64,
    pub set: WellSet,
    /// `E(0) < min(d, small_energy_threshold)`.
    pub satisfies_rr31: bool,
    /// `E(0)/d`.
    pub theta: f64,
}

/// `lambda* = (ell ||grad w||^2 / int k|w|^p)^{1/(p-2)}`, the unique scaling
/// placing a ray on the Nehari manifold.
pub fn lambda_star(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    ell: f64,
    w: &RadialField,
) -> Result<f64> {
    let a = mesh.grad_sq_norm(w);
    let b = mesh.weighted_lp_norm(w, &problem.k, problem.p);
    if b <= 0.0 || a <= 0.0 {
        return Err(Error::DegenerateField(
            "lambda_star needs a nonzero field with positive source integral".into(),
        ));
    }
    Ok((ell * a / b).powf(1.0 / (problem.p - 2.0)))
}

/// `sup_lambda J(lambda w) = (1/2 - 1/p) ell A (ell A / B)^{2/(p-2)}`.
pub fn mountain_pass_value(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    ell: f64,
    w: &RadialField,
) -> Result<f64> {
    let a = mesh.grad_sq_norm(w);
    let b = mesh.weighted_lp_norm(w, &problem.k, problem.p);
    if b <= 0.0 || a <= 0.0 {
        return Err(Error::DegenerateField(
            "mountain_pass_value needs a nonzero field with positive source integral".into(),
        ));
    }
    let la = ell * a;
    Ok((0.5 - 1.0 / problem.p) * la * (la / b).powf(2.0 / (problem.p - 2.0)))
}

struct AscentOutcome {
    x: RadialField,
    objective: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
}

/// Maximize `objective` over `constraint_coeff * ||grad x||^2 = 1` starting
/// from `x0 > 0`. `gradient` is the pointwise L2-Riesz gradient field of the
/// objective; it is lifted to the H1 metric by one elliptic solve.
fn ascend(
    mesh: &RadialMesh,
    objective: &dyn Fn(&RadialField) -> f64,
    gradient: &dyn Fn(&RadialField) -> RadialField,
    constraint_coeff: f64,
    mut x: RadialField,
    params: &OptParams,
) -> AscentOutcome {
    let normalize = |y: &mut RadialField| {
        let q = mesh.grad_sq_norm(y);
        y.scale(1.0 / (constraint_coeff * q).sqrt());
    };
    normalize(&mut x);
    let mut val = objective(&x);
    let mut step = 0.5;
    let mut values = Vec::with_capacity(params.max_iter + 1);
    values.push(val);
    let mut stalls = 0usize;
    let mut iterations = 0usize;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for iter in 0..params.max_iter {
        iterations = iter + 1;
        let dir = mesh.solve_neg_laplacian(&gradient(&x));
        let mut improved = false;
        for _ in 0..40 {
            let mut y = x.clone();
            y.axpy(step, &dir);
            normalize(&mut y);
            let vy = objective(&y);
            if vy > val {
                x = y;
                val = vy;
                step = (step * 1.5).min(1e3);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if improved {
            stalls = 0;
        } else {
            step = 0.5;
            stalls += 1;
        }
        values.push(val);
        if iterations > params.window {
            let old = values[iterations - params.window];
            residual = ((val - old) / val).abs();
            if residual < params.tol {
                converged = true;
                break;
            }
        }
        if stalls >= 2 {
            residual = 0.0;
            converged = true;
            break;
        }
    }
    AscentOutcome { x, objective: val, iterations, residual, converged }
}

fn positive_random_field(mesh: &RadialMesh, rng: &mut ChaCha8Rng) -> RadialField {
    let raw = random_smooth(mesh, rng);
    RadialField::from_fn(mesh.cells, |i| raw[i].abs() + 0.05)
}

/// Optimal constant in `int |w|^r <= B_r ||grad w||^r`: maximizes the
/// integral over the unit gradient sphere. Valid for
/// `2 <= r <= 2n/(n-2)` (the Sobolev range).
pub fn estimate_b_r(mesh: &RadialMesh, r: f64, params: &OptParams) -> Result<f64> {
    let hi = 2.0 * mesh.dim as f64 / (mesh.dim as f64 - 2.0);
    if !(2.0..=hi).contains(&r) {
        return Err(Error::EmbeddingRange { r, lo: 2.0, hi });
    }
    let objective = |w: &RadialField| mesh.lp_integral(w, r);
    let gradient =
        |w: &RadialField| RadialField::from_fn(mesh.cells, |i| r * w[i].abs().powf(r - 2.0) * w[i]);
    let x0 = mesh.field_from_fn(|rad| 1.0 - (rad / mesh.radius) * (rad / mesh.radius));
    let out = ascend(mesh, &objective, &gradient, 1.0, x0, params);
    Ok(out.objective)
}

/// Well depth by constrained maximization of `B(w) = int k|w|^p` over
/// `ell ||grad w||^2 = 1`; then `d = (1/2 - 1/p) B_max^{-2/(p-2)}`.
/// Restarted from random positive fields to report an agreement spread.
pub fn well_depth(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    ell: f64,
    params: &OptParams,
) -> Result<WellReport> {
    if problem.k.sup() == 0.0 {
        return Err(Error::DegenerateField(
            "source weight vanishes identically; the Nehari manifold is empty".into(),
        ));
    }
    let p = problem.p;
    let objective = |w: &RadialField| mesh.weighted_lp_norm(w, &problem.k, p);
    let gradient = |w: &RadialField| {
        RadialField::from_fn(mesh.cells, |i| {
            p * problem.k.eval(mesh.nodes[i], mesh.radius) * w[i].abs().powf(p - 2.0) * w[i]
        })
    };
    let d_of = |b_max: f64| (0.5 - 1.0 / p) * b_max.powf(-2.0 / (p - 2.0));

    let x0 = mesh.field_from_fn(|r| 1.0 - (r / mesh.radius) * (r / mesh.radius));
    let main = ascend(mesh, &objective, &gradient, ell, x0, params);
    let mut best = main;
    let mut d_lo = d_of(best.objective);
    let mut d_hi = d_lo;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..params.restarts {
        let start = positive_random_field(mesh, &mut rng);
        let out = ascend(mesh, &objective, &gradient, ell, start, params);
        let d_r = d_of(out.objective);
        d_lo = d_lo.min(d_r);
        d_hi = d_hi.max(d_r);
        if out.objective > best.objective {
            best = out;
        }
    }

    let b2 = estimate_b_r(mesh, 2.0, params)?;
    let bp = estimate_b_r(mesh, p, params)?;
    let b2p2 = estimate_b_r(mesh, 2.0 * (p - 1.0), params)?;
    let kk = problem.k.sup();
    let threshold = ((p - 2.0) * ell / (2.0 * p)) * (ell / (2.0 * kk * bp)).powf(2.0 / (p - 2.0));
    let lam = lambda_star(mesh, problem, ell, &best.x)?;
    Ok(WellReport {
        d: d_of(best.objective),
        b2,
        bp,
        b2p2,
        lambda_star_of_minimizer: lam,
        minimizer: best.x,
        iterations: best.iterations,
        residual: best.residual,
        converged: best.converged,
        restart_spread: (d_hi - d_lo) / d_lo,
        small_energy_threshold: threshold,
    })
}

/// Classify initial data against the well: energy at t = 0 (full elastic
/// coefficient, no memory), Nehari sign, and the admissibility threshold.
pub fn classify(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    ell: f64,
    u0: &RadialField,
    v0: &RadialField,
    well: &WellReport,
) -> Classification {
    let ji = j_and_i(mesh, problem, ell, u0);
    let e0 = 0.5 * mesh.l2_norm_sq(v0) + 0.5 * ji.grad_sq - ji.source_integral / problem.p;
    let i0 = ji.i;
    let set = if mesh.linf_norm(u0) == 0.0 {
        WellSet::Neither
    } else if i0.abs() <= 1e-10 * ell * ji.grad_sq {
        WellSet::Boundary
    } else if e0 >= well.d {
        WellSet::Neither
    } else if i0 > 0.0 {
        WellSet::W
    } else {
        WellSet::V
    };
    Classification {
        e0,
        i0,
        set,
        satisfies_rr31: e0 < well.d.min(well.small_energy_threshold),
        theta: e0 / well.d,
    }
}

/// Find an amplitude `c` so that `(c * profile, v0)` lands in the requested
/// set with the requested energy margin: for W, `E(0) <= (1-m) min(d, thr)`
/// and `I > 0` with scaling margin; for V, `c` past the Nehari scaling and
/// `E(0) <= (1-m) d`. The achieved classification is re-verified.
#[allow(clippy::too_many_arguments)]
pub fn scale_into(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    ell: f64,
    well: &WellReport,
    target: WellSet,
    profile: &RadialField,
    v0: &RadialField,
    margin: f64,
) -> Result<(f64, Classification)> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidInput(format!("margin {margin} must lie in [0, 1)")));
    }
    let a = mesh.grad_sq_norm(profile);
    let b = mesh.weighted_lp_norm(profile, &problem.k, problem.p);
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::DegenerateField("scale_into needs a nonzero profile".into()));
    }
    let p = problem.p;
    let kin = 0.5 * mesh.l2_norm_sq(v0);
    let e0_of = |c: f64| kin + 0.5 * a * c * c - b * c.powf(p) / p;
    let lam = (ell * a / b).powf(1.0 / (p - 2.0));
    // amplitude where E0(c) peaks (ignoring the constant kinetic part)
    let c_peak = (a / b).powf(1.0 / (p - 2.0));

    let c = match target {
        WellSet::W => {
            let cap = well.d.min(well.small_energy_threshold);
            let target_e = (1.0 - margin) * cap;
            if kin >= target_e {
                return Err(Error::Infeasible(format!(
                    "kinetic energy {kin} alone exceeds the W target {target_e}"
                )));
            }
            let root = if e0_of(c_peak) <= target_e {
                c_peak
            } else {
                bisect_increasing(&e0_of, target_e, 0.0, c_peak)
            };
            root.min(lam / (1.0 + margin))
        }
        WellSet::V => {
            let target_e = (1.0 - margin) * well.d;
            let mut lo = (lam * (1.0 + margin)).max(c_peak);
            if e0_of(lo) > target_e {
                let mut hi = lo * 2.0;
                while e0_of(hi) > target_e {
                    lo = hi;
                    hi *= 2.0;
                    if !hi.is_finite() {
                        return Err(Error::Infeasible(
                            "no amplitude reaches the V energy target".into(),
                        ));
                    }
                }
                // E0 is decreasing past the peak
                lo = bisect_decreasing(&e0_of, target_e, lo, hi);
            }
            lo
        }
        _ => return Err(Error::InvalidInput("scale_into targets are the sets W and V".into())),
    };
    let u0 = profile.scaled(c);
    let class = classify(mesh, problem, ell, &u0, v0, well);
    let ok = match target {
        WellSet::W => class.set == WellSet::W,
        WellSet::V => class.set == WellSet::V,
        _ => unreachable!(),
    };
    if !ok {
        return Err(Error::Infeasible(format!(
            "scaled amplitude {c} classifies as {:?}, not {:?}",
            class.set, target
        )));
    }
    Ok((c, class))
}

fn bisect_increasing(f: &dyn Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn bisect_decreasing(f: &dyn Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
