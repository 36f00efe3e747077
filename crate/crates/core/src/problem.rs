//! Problem data: domain, exponents, and source weight for the wave model
//! `u_tt - lap u + int_0^t f(t-s) lap u(s) ds + |x|^(-sigma) u_t = k(x)|u|^(p-2) u`
//! posed on a ball of radius `R` in dimension `n >= 3` with zero boundary data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial source weight `k(x) = k(|x|)`, bounded and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum KProfile {
    /// `k = c` everywhere.
    Constant { c: f64 },
    /// `k(r) = c (1 - (r/R)^2)`, peak value `c` at the origin, vanishing at
    /// the boundary.
    Bump { c: f64 },
}

impl KProfile {
    pub fn eval(&self, r: f64, radius: f64) -> f64 {
        match *self {
            KProfile::Constant { c } => c,
            KProfile::Bump { c } => {
                let s = r / radius;
                if s >= 1.0 {
                    0.0
                } else {
                    c * (1.0 - s * s)
                }
            }
        }
    }

    /// Supremum of the weight, used by embedding-based thresholds.
    pub fn sup(&self) -> f64 {
        match *self {
            KProfile::Constant { c } | KProfile::Bump { c } => c,
        }
    }

    fn validate(&self) -> Result<()> {
        let c = self.sup();
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::ProblemParam(format!(
                "source weight peak {c} must be finite and nonnegative"
            )));
        }
        Ok(())
    }
}

/// Static problem data, independent of the kernel and of initial states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Space dimension, at least 3.
    #[serde(rename = "n")]
    pub dim: u32,
    /// Ball radius.
    #[serde(rename = "R")]
    pub radius: f64,
    /// Source exponent, `2 < p < (2n - 2)/(n - 2)`.
    pub p: f64,
    /// Damping singularity strength, `0 <= sigma <= 2`.
    pub sigma: f64,
    /// Source weight profile.
    pub k: KProfile,
}

impl ProblemSpec {
    pub fn new(dim: u32, radius: f64, p: f64, sigma: f64, k: KProfile) -> Result<Self> {
        let spec = ProblemSpec { dim, radius, p, sigma, k };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::ProblemParam(format!(
                "dimension n = {} must be at least 3",
                self.dim
            )));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::ProblemParam(format!(
                "radius R = {} must be positive",
                self.radius
            )));
        }
        let p_max = self.p_upper_limit();
        if !(self.p > 2.0 && self.p < p_max) {
            return Err(Error::ProblemParam(format!(
                "exponent p = {} must lie in (2, (2n-2)/(n-2)) = (2, {}) for n = {}",
                self.p, p_max, self.dim
            )));
        }
        if !(0.0..=2.0).contains(&self.sigma) {
            return Err(Error::ProblemParam(format!(
                "singularity strength sigma = {} must lie in [0, 2]",
                self.sigma
            )));
        }
        self.k.validate()
    }

    /// Supercritical cutoff `(2n - 2)/(n - 2)` for the source exponent.
    pub fn p_upper_limit(&self) -> f64 {
        let n = self.dim as f64;
        (2.0 * n - 2.0) / (n - 2.0)
    }

    /// Damping coefficient `a(r) = r^(-sigma)`; `sigma = 0` gives 1 everywhere.
    pub fn damping_coeff(&self, r: f64) -> f64 {
        if self.sigma == 0.0 {
            1.0
        } else {
            r.powf(-self.sigma)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> ProblemSpec {
        ProblemSpec::new(3, 1.0, 3.0, 0.5, KProfile::Constant { c: 1.0 }).unwrap()
    }

    #[test]
    fn accepts_reference_configuration() {
        let s = base();
        assert_eq!(s.p_upper_limit(), 4.0);
        assert_eq!(s.dim, 3);
    }

    #[test]
    fn p_window_is_enforced() {
        assert!(ProblemSpec::new(3, 1.0, 2.0, 0.0, KProfile::Constant { c: 1.0 }).is_err());
        assert!(ProblemSpec::new(3, 1.0, 4.0, 0.0, KProfile::Constant { c: 1.0 }).is_err());
        assert!(ProblemSpec::new(3, 1.0, 3.99, 0.0, KProfile::Constant { c: 1.0 }).is_ok());
        // n = 4: window is (2, 3)
        assert!(ProblemSpec::new(4, 1.0, 3.0, 0.0, KProfile::Constant { c: 1.0 }).is_err());
        assert!(ProblemSpec::new(4, 1.0, 2.9, 0.0, KProfile::Constant { c: 1.0 }).is_ok());
        // n = 5: window is (2, 8/3)
        assert!(ProblemSpec::new(5, 1.0, 2.5, 0.0, KProfile::Constant { c: 1.0 }).is_ok());
        assert!(ProblemSpec::new(5, 1.0, 2.7, 0.0, KProfile::Constant { c: 1.0 }).is_err());
    }

    #[test]
    fn dimension_and_sigma_ranges() {
        assert!(ProblemSpec::new(2, 1.0, 2.5, 0.0, KProfile::Constant { c: 1.0 }).is_err());
        assert!(ProblemSpec::new(3, 1.0, 3.0, -0.1, KProfile::Constant { c: 1.0 }).is_err());
        assert!(ProblemSpec::new(3, 1.0, 3.0, 2.1, KProfile::Constant { c: 1.0 }).is_err());
        assert!(ProblemSpec::new(3, 1.0, 3.0, 2.0, KProfile::Constant { c: 1.0 }).is_ok());
        assert!(ProblemSpec::new(3, 0.0, 3.0, 0.0, KProfile::Constant { c: 1.0 }).is_err());
    }

    #[test]
    fn damping_coefficient_values() {
        let s = base();
        assert_relative_eq!(s.damping_coeff(0.25), 2.0, max_relative = 1e-15);
        let flat = ProblemSpec::new(3, 1.0, 3.0, 0.0, KProfile::Constant { c: 1.0 }).unwrap();
        assert_eq!(flat.damping_coeff(0.0), 1.0);
        let hardy = ProblemSpec::new(3, 1.0, 3.0, 2.0, KProfile::Constant { c: 1.0 }).unwrap();
        assert_relative_eq!(hardy.damping_coeff(0.5), 4.0, max_relative = 1e-15);
    }

    #[test]
    fn bump_profile_shape() {
        let k = KProfile::Bump { c: 2.0 };
        assert_relative_eq!(k.eval(0.0, 1.0), 2.0, max_relative = 1e-15);
        assert_eq!(k.eval(1.0, 1.0), 0.0);
        assert_eq!(k.eval(1.5, 1.0), 0.0);
        assert_relative_eq!(k.eval(0.5, 1.0), 1.5, max_relative = 1e-15);
        assert_eq!(k.sup(), 2.0);
        // monotone decreasing in r
        let mut prev = f64::INFINITY;
        for i in 0..=40 {
            let v = k.eval(i as f64 / 40.0, 1.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_weight_is_allowed_here() {
        assert!(ProblemSpec::new(3, 1.0, 3.0, 0.0, KProfile::Constant { c: 0.0 }).is_ok());
        assert!(ProblemSpec::new(3, 1.0, 3.0, 0.0, KProfile::Constant { c: -1.0 }).is_err());
    }

    #[test]
    fn serde_round_trip_with_renames() {
        let s = base();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"n\":3"));
        assert!(json.contains("\"R\":1.0"));
        assert!(json.contains("\"profile\":\"constant\""));
        let back: ProblemSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        let err: std::result::Result<ProblemSpec, _> =
            serde_json::from_str("{\"n\":3,\"R\":1.0,\"p\":3.0,\"sigma\":0.5,\"k\":{\"profile\":\"constant\",\"c\":1.0},\"extra\":1}");
        assert!(err.is_err());
    }
}
