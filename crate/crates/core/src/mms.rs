//! Manufactured-solution harness: a separable exact solution
//! `u(r,t) = A (R^2 - r^2 + offset) cos(omega t)` driven through the full
//! solver by the forcing term that makes it exact, and the error report
//! used for convergence-order measurements.
//!
//! The memory term of the forcing needs `(f * cos)(t)`; the exponential
//! family has a closed form, the polynomial family is integrated by
//! composite Simpson (error far below the scheme's own truncation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::mesh::{RadialField, RadialMesh};
use crate::problem::ProblemSpec;
use crate::solver::{run_custom, RunStatus, SolverConfig};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManufacturedSolution {
    pub amplitude: f64,
    pub omega: f64,
    /// Shifts the radial shape off the boundary condition; any nonzero
    /// value is rejected by `run_mms` (negative-control knob).
    pub radial_offset: f64,
}

impl Default for ManufacturedSolution {
    fn default() -> Self {
        ManufacturedSolution { amplitude: 1.0, omega: std::f64::consts::PI, radial_offset: 0.0 }
    }
}

impl ManufacturedSolution {
    fn shape(&self, r: f64, radius: f64) -> f64 {
        radius * radius - r * r + self.radial_offset
    }

    pub fn eval(&self, r: f64, radius: f64, t: f64) -> f64 {
        self.amplitude * self.shape(r, radius) * (self.omega * t).cos()
    }

    pub fn exact_field(&self, mesh: &RadialMesh, t: f64) -> RadialField {
        mesh.field_from_fn(|r| self.eval(r, mesh.radius, t))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MmsReport {
    pub cells: usize,
    pub dt: f64,
    pub t_end: f64,
    /// max-in-time weighted-L2 error, relative to the exact solution's
    /// max-in-time weighted-L2 norm.
    pub rel_l2_error: f64,
    pub linf_error: f64,
    pub steps: usize,
}

/// `int_0^t f(t-s) cos(omega s) ds`: closed form for the exponential
/// kernel, composite Simpson otherwise.
pub fn kernel_cos_convolution(kernel: &KernelSpec, omega: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match *kernel {
        KernelSpec::Exponential { b, lambda } => {
            b * (lambda * (omega * t).cos() + omega * (omega * t).sin()
                - lambda * (-lambda * t).exp())
                / (lambda * lambda + omega * omega)
        }
        KernelSpec::PolynomialShift { .. } => {
            let panels = (128.0 + t * (1.0 + omega.abs()) * 32.0).min(4096.0) as usize;
            simpson(|s| kernel.eval(t - s) * (omega * s).cos(), 0.0, t, panels)
        }
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2) + panels % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Drive the exact solution through the solver on a fixed step and report
/// the discretization error. The initial velocity is exactly zero, so the
/// Taylor start is third-order consistent.
pub fn run_mms(
    mesh: &RadialMesh,
    problem: &ProblemSpec,
    kernel: &KernelSpec,
    ms: &ManufacturedSolution,
    config: &SolverConfig,
) -> Result<MmsReport> {
    if ms.radial_offset != 0.0 {
        return Err(Error::InvalidInput(format!(
            "manufactured radial_offset {} violates the boundary condition",
            ms.radial_offset
        )));
    }
    let mut config = *config;
    config.adapt.enabled = false;
    let a = ms.amplitude;
    let omega = ms.omega;
    let two_n = 2.0 * problem.dim as f64;
    let p = problem.p;
    let radius = mesh.radius;
    let forcing = |t: f64| {
        let c = (omega * t).cos();
        let s = (omega * t).sin();
        let conv = kernel_cos_convolution(kernel, omega, t);
        mesh.field_from_fn(|r| {
            let shape = ms.shape(r, radius);
            let u = a * shape * c;
            -a * omega * omega * shape * c + two_n * a * c
                - two_n * a * conv
                - a * omega * problem.damping_coeff(r) * shape * s
                - problem.k.eval(r, radius) * u.abs().powf(p - 2.0) * u
        })
    };
    let u0 = ms.exact_field(mesh, 0.0);
    let v0 = RadialField::zeros(mesh.cells);
    let traj = run_custom(mesh, problem, kernel, &u0, &v0, &config, Some(&forcing), 1.0)?;
    if traj.status != RunStatus::Completed {
        return Err(Error::NonConvergence(format!(
            "manufactured run ended early with {:?}",
            traj.status
        )));
    }
    let mut max_err = 0.0f64;
    let mut max_ref = 0.0f64;
    let mut max_linf = 0.0f64;
    for (i, t) in traj.history.times.iter().enumerate() {
        let exact = ms.exact_field(mesh, *t);
        let mut diff = traj.history.fields[i].clone();
        diff.axpy(-1.0, &exact);
        max_err = max_err.max(mesh.l2_norm(&diff));
        max_ref = max_ref.max(mesh.l2_norm(&exact));
        max_linf = max_linf.max(mesh.linf_norm(&diff));
    }
    let steps = traj.history.len() - 1;
    Ok(MmsReport {
        cells: mesh.cells,
        dt: config.dt0.min(config.cfl_safety * mesh.h),
        t_end: config.t_end,
        rel_l2_error: if max_ref > 0.0 { max_err / max_ref } else { max_err },
        linf_error: max_linf,
        steps,
    })
}

/// Observed order under a factor-two refinement.
pub fn convergence_order(coarse_error: f64, fine_error: f64) -> f64 {
    (coarse_error / fine_error).log2()
}
