//! Functionals evaluated along a discrete trajectory: energy and its parts,
//! the memory discrepancy (f o grad u), dissipation rate, Nehari pair (J, I),
//! the auxiliary phi/psi/L/M/Lambda quantities, and the Levine pair (G, G').
//!
//! Memory integrals are trapezoid sums over the full stored history. The
//! quadratic expansion `||grad u(t) - grad u(s)||^2 = Q(t) - 2<g(t),g(s)> + Q(s)`
//! lets every convolution reduce to one weighted field sum per step
//! (`MemorySums`), which the solver reuses for the PDE right-hand side.

use serde::{Deserialize, Serialize};

use crate::kernel::KernelSpec;
use crate::mesh::{RadialField, RadialMesh};
use crate::problem::ProblemSpec;

/// Snapshots of the solution at every accepted step, with cached face
/// gradients and gradient norms. This is the convolution argument.
#[derive(Debug, Clone, Default)]
pub struct HistoryBuffer {
    pub times: Vec<f64>,
    pub fields: Vec<RadialField>,
    pub face_grads: Vec<Vec<f64>>,
    pub grad_sq: Vec<f64>,
}

impl HistoryBuffer {
    pub fn new() -> Self {
        HistoryBuffer::default()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, mesh: &RadialMesh, t: f64, field: RadialField) {
        if let Some(&last) = self.times.last() {
            assert!(t > last, "history times must be strictly increasing: {t} after {last}");
        }
        let g = mesh.face_gradients(&field);
        let q = mesh.grad_form_from(&g, &g);
        self.times.push(t);
        self.fields.push(field);
        self.face_grads.push(g);
        self.grad_sq.push(q);
    }

    /// Trapezoid weights for snapshots `0..=upto` over `[t_0, t_upto]`.
    /// Valid on non-uniform grids. A single snapshot gets weight zero
    /// (empty integral).
    pub fn trapezoid_weights(&self, upto: usize) -> Vec<f64> {
        assert!(upto < self.len(), "snapshot index {upto} out of range");
        let t = &self.times;
        if upto == 0 {
            return vec![0.0];
        }
        let mut tau = Vec::with_capacity(upto + 1);
        tau.push((t[1] - t[0]) / 2.0);
        for j in 1..upto {
            tau.push((t[j + 1] - t[j - 1]) / 2.0);
        }
        tau.push((t[upto] - t[upto - 1]) / 2.0);
        tau
    }
}

/// Kernel-weighted history sums at one time level: everything the solver and
/// the functionals need from the convolution, in one pass.
///
/// With `c_j = tau_j f(t_n - t_j)` and `c'_j = tau_j f'(t_n - t_j)`:
/// `mass_quad = sum c_j`, `w_field = sum c_j U_j`, `w_grads = sum c_j g_j`,
/// `sum_f_gradsq = sum c_j Q_j`, and the primed analogues.
#[derive(Debug, Clone)]
pub struct MemorySums {
    pub mass_quad: f64,
    pub w_field: RadialField,
    pub w_grads: Vec<f64>,
    pub sum_f_gradsq: f64,
    pub massp_quad: f64,
    pub wp_grads: Vec<f64>,
    pub sum_fp_gradsq: f64,
}

impl MemorySums {
    #[allow(clippy::needless_range_loop)]
    pub fn at(mesh: &RadialMesh, history: &HistoryBuffer, kernel: &KernelSpec, idx: usize) -> Self {
        let t_n = history.times[idx];
        let tau = history.trapezoid_weights(idx);
        let mut sums = MemorySums {
            mass_quad: 0.0,
            w_field: RadialField::zeros(mesh.cells),
            w_grads: vec![0.0; mesh.cells + 1],
            sum_f_gradsq: 0.0,
            massp_quad: 0.0,
            wp_grads: vec![0.0; mesh.cells + 1],
            sum_fp_gradsq: 0.0,
        };
        for j in 0..=idx {
            let lag = t_n - history.times[j];
            let c = tau[j] * kernel.eval(lag);
            let cp = tau[j] * kernel.eval_deriv(lag);
            sums.mass_quad += c;
            sums.massp_quad += cp;
            sums.sum_f_gradsq += c * history.grad_sq[j];
            sums.sum_fp_gradsq += cp * history.grad_sq[j];
            sums.w_field.axpy(c, &history.fields[j]);
            let g = &history.face_grads[j];
            for k in 0..=mesh.cells {
                sums.w_grads[k] += c * g[k];
                sums.wp_grads[k] += cp * g[k];
            }
        }
        sums
    }
}

/// `(f o grad u)(t) = int_0^t f(t-s) ||grad u(t) - grad u(s)||^2 ds`,
/// expanded through the precomputed sums; clamped at zero against roundoff.
pub fn f_circ_grad(mesh: &RadialMesh, sums: &MemorySums, g_n: &[f64], q_n: f64) -> f64 {
    (sums.mass_quad * q_n - 2.0 * mesh.grad_form_from(g_n, &sums.w_grads) + sums.sum_f_gradsq)
        .max(0.0)
}

/// The same combination with `f'` weights; nonpositive for admissible kernels.
pub fn fp_circ_grad(mesh: &RadialMesh, sums: &MemorySums, g_n: &[f64], q_n: f64) -> f64 {
    (sums.massp_quad * q_n - 2.0 * mesh.grad_form_from(g_n, &sums.wp_grads) + sums.sum_fp_gradsq)
        .min(0.0)
}

/// Convenience wrapper over the full history (used by tests and reports).
pub fn f_circ_grad_at(
    mesh: &RadialMesh,
    history: &HistoryBuffer,
    kernel: &KernelSpec,
    idx: usize,
) -> f64 {
    let sums = MemorySums::at(mesh, history, kernel, idx);
    f_circ_grad(mesh, &sums, &history.face_grads[idx], history.grad_sq[idx])
}

/// The energy and its four pieces: `e = kinetic + elastic + memory - source`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub elastic: f64,
    pub memory: f64,
    pub source: f64,
    pub e: f64,
}

impl EnergyParts {
    /// `M = ||u_t||^2 + (1 - int f)||grad u||^2 + (f o grad u)`, no source
    /// term and no 1/2 factors; equals `2E + (2/p) int k|u|^p` identically.
    pub fn m(&self) -> f64 {
        2.0 * (self.kinetic + self.elastic + self.memory)
    }
}

/// Energy at time `t` for state `(u, v)` with memory sums at the same level.
/// The elastic coefficient uses the exact cumulative kernel mass; the memory
/// piece uses the quadrature mass so a constant history gives zero exactly
/// (up to roundoff).
#[allow(clippy::too_many_arguments)]
pub fn energy_parts(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    kernel: &KernelSpec,
    t: f64,
    u: &RadialField,
    v: &RadialField,
    sums: &MemorySums,
    g_n: &[f64],
    q_n: f64,
) -> EnergyParts {
    let kinetic = 0.5 * mesh.l2_norm_sq(v);
    let elastic = 0.5 * (1.0 - kernel.cumulative_mass(t)) * q_n;
    let memory = 0.5 * f_circ_grad(mesh, sums, g_n, q_n);
    let source = mesh.weighted_lp_norm(u, &problem.k, problem.p) / problem.p;
    EnergyParts { kinetic, elastic, memory, source, e: kinetic + elastic + memory - source }
}

/// Right-hand side of the energy identity:
/// `E' = (1/2)(f' o grad u) - (f(t)/2)||grad u||^2 - ||u_t r^{-sigma/2}||^2`.
/// `damping_scale` mirrors the solver's damping switch (1 for the full model).
#[allow(clippy::too_many_arguments)]
pub fn dissipation_rate(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    kernel: &KernelSpec,
    t: f64,
    v: &RadialField,
    sums: &MemorySums,
    g_n: &[f64],
    q_n: f64,
    damping_scale: f64,
) -> f64 {
    0.5 * fp_circ_grad(mesh, sums, g_n, q_n)
        - 0.5 * kernel.eval(t) * q_n
        - damping_scale * mesh.hardy_norm_sq(v, problem.sigma)
}

/// Nehari pair and its ingredients: `J = (l/2)A - B/p`, `I = lA - B` with
/// `A = ||grad w||^2`, `B = int k|w|^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JI {
    pub j: f64,
    pub i: f64,
    pub grad_sq: f64,
    pub source_integral: f64,
}

pub fn j_and_i(mesh: &RadialMesh, problem: &ProblemSpec, ell: f64, w: &RadialField) -> JI {
    let a = mesh.grad_sq_norm(w);
    let b = mesh.weighted_lp_norm(w, &problem.k, problem.p);
    JI { j: 0.5 * ell * a - b / problem.p, i: ell * a - b, grad_sq: a, source_integral: b }
}

/// `phi = (u_t, u)` and `psi = -(u_t, int_0^t f(t-s)(u(t) - u(s)) ds)`.
pub fn phi_psi(
    mesh: &RadialMesh,
    u: &RadialField,
    v: &RadialField,
    sums: &MemorySums,
) -> (f64, f64) {
    let phi = mesh.inner(v, u);
    let mut diff = u.scaled(sums.mass_quad);
    diff.axpy(-1.0, &sums.w_field);
    let psi = -mesh.inner(v, &diff);
    (phi, psi)
}

/// Diagnostic Lyapunov combination `L = E + eps1 phi + eps2 psi`.
pub fn lyapunov_l(e: f64, phi: f64, psi: f64, eps1: f64, eps2: f64) -> f64 {
    e + eps1 * phi + eps2 * psi
}

/// `Lambda(t) = int_0^t ||grad u(t) - grad u(s)||^2 ds` from the running
/// trapezoid accumulators `g_acc = int g ds` and `q_acc = int Q ds`.
pub fn lambda_value(
    mesh: &RadialMesh,
    t_n: f64,
    g_n: &[f64],
    q_n: f64,
    g_acc: &[f64],
    q_acc: f64,
) -> f64 {
    (t_n * q_n - 2.0 * mesh.grad_form_from(g_n, g_acc) + q_acc).max(0.0)
}

/// Full-history trapezoid version of `Lambda` (tests and reports).
#[allow(clippy::needless_range_loop)]
pub fn lambda_accumulator(mesh: &RadialMesh, history: &HistoryBuffer, idx: usize) -> f64 {
    let tau = history.trapezoid_weights(idx);
    let mut g_acc = vec![0.0; mesh.cells + 1];
    let mut q_acc = 0.0;
    for j in 0..=idx {
        for k in 0..=mesh.cells {
            g_acc[k] += tau[j] * history.face_grads[j][k];
        }
        q_acc += tau[j] * history.grad_sq[j];
    }
    let t_n = history.times[idx] - history.times[0];
    lambda_value(mesh, t_n, &history.face_grads[idx], history.grad_sq[idx], &g_acc, q_acc)
}

/// One row of the trajectory time series. The first seventeen fields are the
/// series schema written to records files; the trailing fields are the
/// auxiliary series needed to rebuild Levine functionals for any (eta, mu, T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub t: f64,
    pub e: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub memory: f64,
    pub source: f64,
    pub dissipation_rate: f64,
    pub cum_damping: f64,
    pub phi: f64,
    pub psi: f64,
    pub m: f64,
    pub g: f64,
    pub gp: f64,
    pub lambda: f64,
    pub l2_norm: f64,
    pub grad_norm: f64,
    pub linf_norm: f64,
    pub i_of_u: f64,
    pub j_of_u: f64,
    pub diss_integral: f64,
    pub cum_hardy_sq: f64,
    pub cum_hardy_cross: f64,
}

/// Levine pair along a series:
/// `G = ||u||^2 + int_0^t ||u r^{-sigma/2}||^2 ds + (T - t) h0 + eta (t + mu)^2`,
/// `G' = 2 phi + 2 int_0^t (u, u_s)_sigma ds + 2 eta (t + mu)`,
/// where `h0 = ||u(0) r^{-sigma/2}||^2` and the integrals are the recorded
/// running accumulators.
#[allow(clippy::too_many_arguments)]
pub fn levine_series(
    t: &[f64],
    l2_sq: &[f64],
    cum_hardy_sq: &[f64],
    phi: &[f64],
    cum_hardy_cross: &[f64],
    hardy0: f64,
    eta: f64,
    mu: f64,
    t_cap: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = t.len();
    assert!(
        l2_sq.len() == n && cum_hardy_sq.len() == n && phi.len() == n && cum_hardy_cross.len() == n,
        "levine_series: input lengths differ"
    );
    let mut g = Vec::with_capacity(n);
    let mut gp = Vec::with_capacity(n);
    for i in 0..n {
        g.push(
            l2_sq[i] + cum_hardy_sq[i] + (t_cap - t[i]) * hardy0 + eta * (t[i] + mu) * (t[i] + mu),
        );
        gp.push(2.0 * phi[i] + 2.0 * cum_hardy_cross[i] + 2.0 * eta * (t[i] + mu));
    }
    (g, gp)
}
