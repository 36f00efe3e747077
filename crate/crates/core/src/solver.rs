//! Time integration: central second differences in time with the damping
//! term taken implicitly (one diagonal solve per step), trapezoid memory
//! convolution over the full stored history, optional amplitude-adaptive
//! step shrinking, and per-step functional records.
//!
//! The velocity at step n is the central difference through step n+1, so a
//! record is emitted one step after its field is accepted; the final record
//! uses a ghost step past the horizon (central difference) or a backward
//! difference when the run ends abnormally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{
    dissipation_rate, energy_parts, j_and_i, lambda_value, phi_psi, FunctionalRecord,
    HistoryBuffer, MemorySums,
};
use crate::kernel::KernelSpec;
use crate::mesh::{RadialField, RadialMesh};
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub enabled: bool,
    pub dt_min: f64,
    /// Exponent e in dt = dt0 / (1 + ||u||_inf^e); defaults to (p-2)/2.
    pub shrink_exponent: Option<f64>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig { enabled: true, dt_min: 1e-10, shrink_exponent: None }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt0: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Sup-norm threshold that declares numerical blow-up.
    pub u_max: f64,
    pub adapt: AdaptConfig,
    pub record_stride: usize,
    /// Drop the second-order term of the Taylor start (diagnostics only).
    pub first_order_start: bool,
    /// (eta, mu) used for the G, G' columns of the records; reports
    /// recompute the Levine pair with optimized parameters afterwards.
    pub record_eta: f64,
    pub record_mu: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt0: 1e-3,
            cfl_safety: 0.5,
            t_end: 1.0,
            u_max: 1e6,
            adapt: AdaptConfig::default(),
            record_stride: 1,
            first_order_start: false,
            record_eta: 1.0,
            record_mu: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return Err(Error::InvalidInput(format!("dt0 {} must be positive", self.dt0)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!("t_end {} must be nonnegative", self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "cfl_safety {} must lie in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(Error::InvalidInput(format!("u_max {} must be positive", self.u_max)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidInput("record_stride must be at least 1".into()));
        }
        if !(self.adapt.dt_min > 0.0 && self.adapt.dt_min.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "adapt.dt_min {} must be positive",
                self.adapt.dt_min
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    #[serde(rename = "blewup")]
    BlewUp {
        t_obs: f64,
    },
    DtUnderflow {
        t: f64,
    },
    NanDetected {
        t: f64,
    },
}

/// Scalar invariants of the initial data, frozen before stepping.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InitialNorms {
    pub e0: f64,
    pub i0: f64,
    pub j0: f64,
    pub kin0: f64,
    pub l2_sq0: f64,
    pub grad_sq0: f64,
    /// ||u0 r^{-sigma/2}||^2, the h0 constant of the Levine functional.
    pub hardy0: f64,
    pub m0: f64,
    /// (u0, v0).
    pub uv0: f64,
}

#[derive(Debug)]
pub struct Trajectory {
    pub status: RunStatus,
    pub records: Vec<FunctionalRecord>,
    pub history: HistoryBuffer,
    pub init: InitialNorms,
    /// Final time reached (threshold-crossing time for a blow-up run).
    pub t_obs: f64,
}

/// Running trapezoid integrals advanced once per accepted interval.
struct Accumulators {
    cum_damping: f64,
    cum_hardy_sq: f64,
    cum_hardy_cross: f64,
    diss_integral: f64,
    g_acc: Vec<f64>,
    q_acc: f64,
    prev_t: f64,
    prev_hardy_v_sq: f64,
    prev_hardy_uv: f64,
    prev_diss: f64,
}

/// Velocity-dependent integrand values at one time level.
struct Integrands {
    hardy_v_sq: f64,
    hardy_uv: f64,
    diss: f64,
}

impl Accumulators {
    fn new(cells: usize) -> Self {
        Accumulators {
            cum_damping: 0.0,
            cum_hardy_sq: 0.0,
            cum_hardy_cross: 0.0,
            diss_integral: 0.0,
            g_acc: vec![0.0; cells + 1],
            q_acc: 0.0,
            prev_t: 0.0,
            prev_hardy_v_sq: 0.0,
            prev_hardy_uv: 0.0,
            prev_diss: 0.0,
        }
    }

    fn stash(&mut self, t: f64, ints: &Integrands) {
        self.prev_t = t;
        self.prev_hardy_v_sq = ints.hardy_v_sq;
        self.prev_hardy_uv = ints.hardy_uv;
        self.prev_diss = ints.diss;
    }

    /// Advance all integrals over [t_{n-1}, t_n] and cache the right-end
    /// integrands for the next interval.
    fn advance(
        &mut self,
        history: &HistoryBuffer,
        n: usize,
        ints: &Integrands,
        damping_scale: f64,
    ) {
        let t = history.times[n];
        let w = 0.5 * (t - self.prev_t);
        self.cum_damping += w * damping_scale * (self.prev_hardy_v_sq + ints.hardy_v_sq);
        self.cum_hardy_sq += w * (self.prev_hardy_v_sq + ints.hardy_v_sq);
        self.cum_hardy_cross += w * (self.prev_hardy_uv + ints.hardy_uv);
        self.diss_integral += w * (self.prev_diss + ints.diss);
        let ga = &history.face_grads[n - 1];
        let gb = &history.face_grads[n];
        for k in 0..self.g_acc.len() {
            self.g_acc[k] += w * (ga[k] + gb[k]);
        }
        self.q_acc += w * (history.grad_sq[n - 1] + history.grad_sq[n]);
        self.stash(t, ints);
    }
}

fn is_finite_field(u: &RadialField) -> bool {
    u.as_slice().iter().all(|x| x.is_finite())
}

pub fn run(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    kernel: &KernelSpec,
    u0: &RadialField,
    v0: &RadialField,
    config: &SolverConfig,
) -> Result<Trajectory> {
    run_custom(mesh, problem, kernel, u0, v0, config, None, 1.0)
}

/// Full-control entry point: an explicit forcing term g(t) on the right-hand
/// side and a scale on the damping term (0 switches damping off entirely,
/// for conservation checks and manufactured runs).
#[allow(clippy::too_many_arguments)]
pub fn run_custom(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    kernel: &KernelSpec,
    u0: &RadialField,
    v0: &RadialField,
    config: &SolverConfig,
    forcing: Option<&dyn Fn(f64) -> RadialField>,
    damping_scale: f64,
) -> Result<Trajectory> {
    config.validate()?;
    assert_eq!(u0.len(), mesh.cells, "initial displacement length mismatch");
    assert_eq!(v0.len(), mesh.cells, "initial velocity length mismatch");
    let ell = kernel.ell();
    let damping: Vec<f64> =
        mesh.nodes.iter().map(|&r| damping_scale * problem.damping_coeff(r)).collect();
    let dt0 = config.dt0.min(config.cfl_safety * mesh.h);
    let shrink_e = config.adapt.shrink_exponent.unwrap_or((problem.p - 2.0) / 2.0);

    let ji0 = j_and_i(mesh, problem, ell, u0);
    let kin0 = 0.5 * mesh.l2_norm_sq(v0);
    let init = InitialNorms {
        e0: kin0 + 0.5 * ji0.grad_sq - ji0.source_integral / problem.p,
        i0: ji0.i,
        j0: ji0.j,
        kin0,
        l2_sq0: mesh.l2_norm_sq(u0),
        grad_sq0: ji0.grad_sq,
        hardy0: mesh.hardy_norm_sq(u0, problem.sigma),
        m0: 2.0 * kin0 + ji0.grad_sq,
        uv0: mesh.inner(u0, v0),
    };

    let mut history = HistoryBuffer::new();
    history.push(mesh, 0.0, u0.clone());
    let mut accs = Accumulators::new(mesh.cells);
    let mut records: Vec<FunctionalRecord> = Vec::new();

    let emit = |records: &mut Vec<FunctionalRecord>,
                history: &HistoryBuffer,
                n: usize,
                v: &RadialField,
                sums: &MemorySums,
                accs: &Accumulators,
                ints: &Integrands| {
        let t = history.times[n];
        let u = &history.fields[n];
        let g_n = &history.face_grads[n];
        let q_n = history.grad_sq[n];
        let parts = energy_parts(mesh, problem, kernel, t, u, v, sums, g_n, q_n);
        let (phi, psi) = phi_psi(mesh, u, v, sums);
        let ji = j_and_i(mesh, problem, ell, u);
        let l2_sq = mesh.l2_norm_sq(u);
        let tm = t + config.record_mu;
        records.push(FunctionalRecord {
            t,
            e: parts.e,
            kinetic: parts.kinetic,
            elastic: parts.elastic,
            memory: parts.memory,
            source: parts.source,
            dissipation_rate: ints.diss,
            cum_damping: accs.cum_damping,
            phi,
            psi,
            m: parts.m(),
            g: l2_sq
                + accs.cum_hardy_sq
                + (config.t_end - t) * init.hardy0
                + config.record_eta * tm * tm,
            gp: 2.0 * phi + 2.0 * accs.cum_hardy_cross + 2.0 * config.record_eta * tm,
            lambda: lambda_value(mesh, t, g_n, q_n, &accs.g_acc, accs.q_acc),
            l2_norm: l2_sq.sqrt(),
            grad_norm: q_n.max(0.0).sqrt(),
            linf_norm: mesh.linf_norm(u),
            i_of_u: ji.i,
            j_of_u: ji.j,
            diss_integral: accs.diss_integral,
            cum_hardy_sq: accs.cum_hardy_sq,
            cum_hardy_cross: accs.cum_hardy_cross,
        });
    };

    let integrands =
        |history: &HistoryBuffer, n: usize, v: &RadialField, sums: &MemorySums| Integrands {
            hardy_v_sq: mesh.hardy_norm_sq(v, problem.sigma),
            hardy_uv: mesh.inner_hardy(&history.fields[n], v, problem.sigma),
            diss: dissipation_rate(
                mesh,
                problem,
                kernel,
                history.times[n],
                v,
                sums,
                &history.face_grads[n],
                history.grad_sq[n],
                damping_scale,
            ),
        };

    let rhs_at = |history: &HistoryBuffer, n: usize, sums: &MemorySums| {
        let lap_u = mesh.laplacian_from_grads(&history.face_grads[n]);
        let lap_w = mesh.laplacian_from_grads(&sums.w_grads);
        let u = &history.fields[n];
        let mut out = RadialField::from_fn(mesh.cells, |i| {
            lap_u[i] - lap_w[i]
                + problem.k.eval(mesh.nodes[i], mesh.radius)
                    * u[i].abs().powf(problem.p - 2.0)
                    * u[i]
        });
        if let Some(g) = forcing {
            out.axpy(1.0, &g(history.times[n]));
        }
        out
    };

    let raw_dt = |linf: f64| {
        if config.adapt.enabled {
            dt0 / (1.0 + linf.powf(shrink_e))
        } else {
            dt0
        }
    };
    let sized_dt = |remaining: f64, dt_raw: f64| {
        if remaining <= 1.5 * dt_raw {
            remaining
        } else {
            dt_raw
        }
    };

    // record 0: the velocity is the given initial velocity, no lag
    let sums0 = MemorySums::at(mesh, &history, kernel, 0);
    let ints0 = integrands(&history, 0, v0, &sums0);
    emit(&mut records, &history, 0, v0, &sums0, &accs, &ints0);
    accs.stash(0.0, &ints0);

    let finish = |status: RunStatus, t_obs: f64, records, history| {
        Ok(Trajectory { status, records, history, init, t_obs })
    };

    if config.t_end <= 1e-12 {
        return finish(RunStatus::Completed, 0.0, records, history);
    }

    // Taylor start; the memory term vanishes at t = 0 and the damping term
    // is left out (exact when v0 = 0)
    let dt1_raw = raw_dt(mesh.linf_norm(u0));
    if dt1_raw < config.adapt.dt_min {
        return finish(RunStatus::DtUnderflow { t: 0.0 }, 0.0, records, history);
    }
    let dt1 = sized_dt(config.t_end, dt1_raw);
    let rhs0 = rhs_at(&history, 0, &sums0);
    let mut u1 = u0.clone();
    u1.axpy(dt1, v0);
    if !config.first_order_start {
        u1.axpy(0.5 * dt1 * dt1, &rhs0);
    }
    if !is_finite_field(&u1) {
        return finish(RunStatus::NanDetected { t: 0.0 }, 0.0, records, history);
    }
    history.push(mesh, dt1, u1);
    let mut dt_minus = dt1;
    if history.grad_sq[1].is_finite() && mesh.linf_norm(&history.fields[1]) >= config.u_max {
        let n = 1;
        let sums = MemorySums::at(mesh, &history, kernel, n);
        let mut v = history.fields[1].clone();
        v.axpy(-1.0, &history.fields[0]);
        v.scale(1.0 / dt1);
        let ints = integrands(&history, n, &v, &sums);
        accs.advance(&history, n, &ints, damping_scale);
        emit(&mut records, &history, n, &v, &sums, &accs, &ints);
        return finish(RunStatus::BlewUp { t_obs: dt1 }, dt1, records, history);
    }

    loop {
        let n = history.len() - 1;
        let t_n = history.times[n];
        let remaining = config.t_end - t_n;
        let sums = MemorySums::at(mesh, &history, kernel, n);

        if remaining <= 1e-12 {
            // ghost step past the horizon for a centered final velocity
            let rhs = rhs_at(&history, n, &sums);
            let ghost = step_update(mesh, &history, n, dt_minus, dt_minus, &rhs, &damping);
            let v = if is_finite_field(&ghost) {
                let mut v = ghost;
                v.axpy(-1.0, &history.fields[n - 1]);
                v.scale(1.0 / (2.0 * dt_minus));
                v
            } else {
                backward_velocity(&history, n, dt_minus)
            };
            let ints = integrands(&history, n, &v, &sums);
            accs.advance(&history, n, &ints, damping_scale);
            emit(&mut records, &history, n, &v, &sums, &accs, &ints);
            return finish(RunStatus::Completed, t_n, records, history);
        }

        let dt_raw = raw_dt(mesh.linf_norm(&history.fields[n]));
        if dt_raw < config.adapt.dt_min {
            let v = backward_velocity(&history, n, dt_minus);
            let ints = integrands(&history, n, &v, &sums);
            accs.advance(&history, n, &ints, damping_scale);
            emit(&mut records, &history, n, &v, &sums, &accs, &ints);
            return finish(RunStatus::DtUnderflow { t: t_n }, t_n, records, history);
        }
        let dt_plus = sized_dt(remaining, dt_raw);

        let rhs = rhs_at(&history, n, &sums);
        let u_next = step_update(mesh, &history, n, dt_minus, dt_plus, &rhs, &damping);
        if !is_finite_field(&u_next) {
            let v = backward_velocity(&history, n, dt_minus);
            let ints = integrands(&history, n, &v, &sums);
            accs.advance(&history, n, &ints, damping_scale);
            emit(&mut records, &history, n, &v, &sums, &accs, &ints);
            return finish(RunStatus::NanDetected { t: t_n }, t_n, records, history);
        }
        let mut v = u_next.clone();
        v.axpy(-1.0, &history.fields[n - 1]);
        v.scale(1.0 / (dt_minus + dt_plus));
        let ints = integrands(&history, n, &v, &sums);
        accs.advance(&history, n, &ints, damping_scale);
        if n.is_multiple_of(config.record_stride) {
            emit(&mut records, &history, n, &v, &sums, &accs, &ints);
        }

        let t_next = t_n + dt_plus;
        let blow = mesh.linf_norm(&u_next) >= config.u_max;
        history.push(mesh, t_next, u_next);
        if blow {
            let m = history.len() - 1;
            let sums_m = MemorySums::at(mesh, &history, kernel, m);
            let v_m = backward_velocity(&history, m, dt_plus);
            let ints_m = integrands(&history, m, &v_m, &sums_m);
            accs.advance(&history, m, &ints_m, damping_scale);
            emit(&mut records, &history, m, &v_m, &sums_m, &accs, &ints_m);
            return finish(RunStatus::BlewUp { t_obs: t_next }, t_next, records, history);
        }
        dt_minus = dt_plus;
    }
}

fn backward_velocity(history: &HistoryBuffer, n: usize, dt: f64) -> RadialField {
    let mut v = history.fields[n].clone();
    v.axpy(-1.0, &history.fields[n - 1]);
    v.scale(1.0 / dt);
    v
}

/// One step of the damped central scheme on a non-uniform pair of steps:
/// `U+ (2/dt+ + a) = (dt+ + dt-) RHS + 2 U/dt+ + 2(U - U-)/dt- + a U-`.
/// Reduces to `(1 + dt a/2) U+ = 2U - (1 - dt a/2) U- + dt^2 RHS` when
/// dt+ = dt-.
fn step_update(
    mesh: &RadialMesh,
    history: &HistoryBuffer,
    n: usize,
    dt_minus: f64,
    dt_plus: f64,
    rhs: &RadialField,
    damping: &[f64],
) -> RadialField {
    let u = &history.fields[n];
    let up = &history.fields[n - 1];
    RadialField::from_fn(mesh.cells, |i| {
        let a = damping[i];
        let num = (dt_plus + dt_minus) * rhs[i]
            + 2.0 * u[i] / dt_plus
            + 2.0 * (u[i] - up[i]) / dt_minus
            + a * up[i];
        num / (2.0 / dt_plus + a)
    })
}
