//! Relaxation kernel families for the memory convolution term.
//!
//! Both families admit closed forms for the kernel, its derivative, its
//! cumulative mass, and the decay pair (xi0, q), so every envelope and
//! bound downstream is exactly evaluable. `certify` checks the standing
//! assumptions on a sample grid and reports the result as flags rather
//! than panicking, so inadmissible kernels can be diagnosed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the pointwise decay-inequality check in `certify`.
pub const DECAY_CERT_REL_TOL: f64 = 1e-10;

/// Relaxation kernel `f(t)` entering the memory convolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `f(t) = b exp(-lambda t)` with `b, lambda > 0`.
    Exponential { b: f64, lambda: f64 },
    /// `f(t) = b (1 + t)^(-nu)` with `b > 0`, `nu > 1`.
    PolynomialShift { b: f64, nu: f64 },
}

/// Certification result: decay pair plus admissibility flags.
///
/// `a1_ok` covers positivity at zero, monotone decrease on the sample grid,
/// and residual stiffness `ell` in (0, 1). `a2_ok` certifies the pointwise
/// inequality `f' <= -xi0 f^q` within `DECAY_CERT_REL_TOL * f(0)`.
/// `q_beyond_standard` is a warning flag raised when `q >= 3/2`; such
/// kernels are accepted up to `q < 2` but fall outside the standard
/// envelope range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelCertificate {
    pub ell: f64,
    pub q: f64,
    pub xi0: f64,
    pub a1_ok: bool,
    pub a2_ok: bool,
    pub sample_grid_max_violation: f64,
    pub q_beyond_standard: bool,
}

/// Admissible total-mass bound for the blow-up theory at energy ratio theta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassBound {
    pub value: f64,
    /// True when theta = 1 makes the bound collapse to zero (no admissible mass).
    pub degenerate: bool,
}

impl KernelSpec {
    pub fn exponential(b: f64, lambda: f64) -> Result<Self> {
        let k = KernelSpec::Exponential { b, lambda };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial_shift(b: f64, nu: f64) -> Result<Self> {
        let k = KernelSpec::PolynomialShift { b, nu };
        k.validate()?;
        Ok(k)
    }

    /// Parameter-range check. Mass constraints are certified, not validated,
    /// so kernels with total mass outside (0, 1) construct fine and fail
    /// `certify` instead.
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Exponential { b, lambda } => {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(Error::KernelParam(format!("b = {b} must be positive")));
                }
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::KernelParam(format!("lambda = {lambda} must be positive")));
                }
            }
            KernelSpec::PolynomialShift { b, nu } => {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(Error::KernelParam(format!("b = {b} must be positive")));
                }
                if !(nu > 1.0 && nu.is_finite()) {
                    return Err(Error::KernelParam(format!(
                        "nu = {nu} must exceed 1 for a finite kernel mass"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Kernel value `f(t)`, `t >= 0`.
    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match *self {
            KernelSpec::Exponential { b, lambda } => b * (-lambda * t).exp(),
            KernelSpec::PolynomialShift { b, nu } => b * (1.0 + t).powf(-nu),
        }
    }

    /// Kernel derivative `f'(t)`, closed form.
    pub fn eval_deriv(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match *self {
            KernelSpec::Exponential { b, lambda } => -lambda * b * (-lambda * t).exp(),
            KernelSpec::PolynomialShift { b, nu } => -nu * b * (1.0 + t).powf(-nu - 1.0),
        }
    }

    /// Cumulative mass `int_0^t f(s) ds`. Accepts `t = +inf` for the total.
    pub fn cumulative_mass(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match *self {
            KernelSpec::Exponential { b, lambda } => b / lambda * (1.0 - (-lambda * t).exp()),
            KernelSpec::PolynomialShift { b, nu } => {
                b / (nu - 1.0) * (1.0 - (1.0 + t).powf(1.0 - nu))
            }
        }
    }

    /// Total kernel mass `int_0^inf f`.
    pub fn total_mass(&self) -> f64 {
        self.cumulative_mass(f64::INFINITY)
    }

    /// Residual stiffness `ell = 1 - int_0^inf f`.
    pub fn ell(&self) -> f64 {
        1.0 - self.total_mass()
    }

    /// Decay exponent `q` in `f' <= -xi0 f^q`: 1 for exponential kernels,
    /// `(nu + 1)/nu` for polynomial-shift kernels.
    pub fn decay_exponent(&self) -> f64 {
        match *self {
            KernelSpec::Exponential { .. } => 1.0,
            KernelSpec::PolynomialShift { nu, .. } => (nu + 1.0) / nu,
        }
    }

    /// Decay coefficient `xi0` in `f' <= -xi0 f^q`.
    pub fn xi0(&self) -> f64 {
        match *self {
            KernelSpec::Exponential { lambda, .. } => lambda,
            KernelSpec::PolynomialShift { b, nu } => nu * b.powf(-1.0 / nu),
        }
    }

    /// `int_t1^t xi(s)^power ds` for the constant modulation `xi = xi0`.
    pub fn xi_power_integral(&self, t1: f64, t: f64, power: f64) -> f64 {
        debug_assert!(0.0 <= t1 && t1 <= t);
        self.xi0().powf(power) * (t - t1)
    }

    /// Whether the improved decay envelope applies: for constant `xi` the
    /// integral test reduces to `q < 3/2`. Rejects `q = 1`, where the
    /// exponential envelope is the right object.
    pub fn improved_rate_applies(&self) -> Result<bool> {
        let q = self.decay_exponent();
        if q == 1.0 {
            return Err(Error::NotApplicable(
                "improved-rate condition is defined for q > 1 only".into(),
            ));
        }
        Ok(q < 1.5)
    }

    /// Certify the standing assumptions on a grid of `sample_count` points,
    /// log-spaced over `(0, horizon]` plus `t = 0`. Deterministic.
    pub fn certify(&self, sample_count: usize, horizon: f64) -> Result<KernelCertificate> {
        if sample_count < 2 {
            return Err(Error::InvalidInput(format!(
                "certify needs at least 2 samples, got {sample_count}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("certify horizon {horizon} must be positive")));
        }
        let ell = self.ell();
        let q = self.decay_exponent();
        let xi0 = self.xi0();
        let f0 = self.eval(0.0);

        let mut a1_ok = f0 > 0.0 && ell > 0.0 && ell < 1.0;
        let mut max_violation = f64::NEG_INFINITY;
        let mut prev_f = f64::INFINITY;
        for t in certify_grid(sample_count, horizon) {
            let f = self.eval(t);
            let fp = self.eval_deriv(t);
            if fp > 1e-15 * f0 || f > prev_f + 1e-15 * f0 {
                a1_ok = false;
            }
            prev_f = f;
            let viol = fp + xi0 * f.powf(q);
            if viol > max_violation {
                max_violation = viol;
            }
        }
        let a2_ok = max_violation <= DECAY_CERT_REL_TOL * f0;
        Ok(KernelCertificate {
            ell,
            q,
            xi0,
            a1_ok,
            a2_ok,
            sample_grid_max_violation: max_violation,
            q_beyond_standard: q >= 1.5,
        })
    }
}

fn certify_grid(sample_count: usize, horizon: f64) -> Vec<f64> {
    let mut grid = Vec::with_capacity(sample_count);
    grid.push(0.0);
    if sample_count == 2 {
        grid.push(horizon);
        return grid;
    }
    let t_min = horizon * 1e-8;
    let m = sample_count - 1;
    let ratio = (horizon / t_min).ln() / (m - 1) as f64;
    for i in 0..m {
        grid.push(t_min * (ratio * i as f64).exp());
    }
    grid
}

/// Admissible total kernel mass for blow-up at energy ratio `theta <= 1`:
/// `(p-2) / (p-2 + ((1-theta+)^2 p + 2 theta+ (1-theta+))^{-1})` with
/// `theta+ = max(0, theta)`. At `theta = 1` the bracket vanishes and the
/// bound collapses to zero, reported through the `degenerate` flag.
pub fn blowup_mass_bound(p: f64, theta: f64) -> Result<MassBound> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("mass bound requires p > 2, got p = {p}")));
    }
    if theta > 1.0 {
        return Err(Error::InvalidInput(format!("mass bound requires theta <= 1, got {theta}")));
    }
    let tp = theta.max(0.0);
    let bracket = (1.0 - tp) * (1.0 - tp) * p + 2.0 * tp * (1.0 - tp);
    if bracket <= 0.0 {
        return Ok(MassBound { value: 0.0, degenerate: true });
    }
    let value = (p - 2.0) / (p - 2.0 + 1.0 / bracket);
    Ok(MassBound { value, degenerate: false })
}
