//! Named radial profiles for initial data and optimizer seeds. Every
//! builtin vanishes at `r = R` so the Dirichlet condition holds from the
//! first step, and peaks at the origin with value 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::{RadialField, RadialMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `exp(1 - 1/(1 - (r/R)^2))`, compactly supported and flat at the rim.
    Bump,
    /// `(1 - (r/R)^2)^2`.
    Quartic,
    /// `sin(pi r/R)/(pi r/R)`, the fundamental radial Dirichlet mode for n=3.
    Sinc,
    /// `(exp(-s (r/R)^2) - exp(-s)) / (1 - exp(-s))`.
    Gauss {
        sharpness: f64,
    },
    Zero,
}

impl Profile {
    pub fn eval(&self, r: f64, radius: f64) -> f64 {
        let s = r / radius;
        match *self {
            Profile::Bump => {
                if s >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                }
            }
            Profile::Quartic => {
                let w = 1.0 - s * s;
                if w <= 0.0 {
                    0.0
                } else {
                    w * w
                }
            }
            Profile::Sinc => sinc(std::f64::consts::PI * s),
            Profile::Gauss { sharpness } => {
                let floor = (-sharpness).exp();
                (((-sharpness * s * s).exp() - floor) / (1.0 - floor)).max(0.0)
            }
            Profile::Zero => 0.0,
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

pub fn build_profile(mesh: &RadialMesh, profile: &Profile) -> RadialField {
    mesh.field_from_fn(|r| profile.eval(r, mesh.radius))
}

/// Random superposition of the first five sinc modes; each mode vanishes at
/// `r = R`, so the sample respects the boundary condition. Mode amplitudes
/// shrink like 1/m^2 to keep samples smooth.
pub fn random_smooth(mesh: &RadialMesh, rng: &mut impl Rng) -> RadialField {
    let coeffs: Vec<f64> = (1..=5).map(|m| rng.gen_range(-1.0..1.0) / (m * m) as f64).collect();
    mesh.field_from_fn(|r| {
        let s = r / mesh.radius;
        coeffs
            .iter()
            .enumerate()
            .map(|(idx, &a)| a * sinc((idx + 1) as f64 * std::f64::consts::PI * s))
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::RadialMesh;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn profiles_peak_at_origin_and_vanish_at_rim() {
        let all =
            [Profile::Bump, Profile::Quartic, Profile::Sinc, Profile::Gauss { sharpness: 4.0 }];
        for p in all {
            assert_relative_eq!(p.eval(0.0, 2.0), 1.0, max_relative = 1e-12);
            assert!(p.eval(2.0, 2.0).abs() < 1e-15);
            // strictly decreasing in r for these shapes
            let mut prev = f64::INFINITY;
            for i in 0..=50 {
                let v = p.eval(2.0 * i as f64 / 50.0, 2.0);
                assert!(v < prev + 1e-15);
                prev = v;
            }
        }
        assert_eq!(Profile::Zero.eval(0.3, 1.0), 0.0);
    }

    #[test]
    fn profile_hand_values() {
        assert_relative_eq!(Profile::Quartic.eval(1.0, 2.0), 0.5625, max_relative = 1e-15);
        assert_relative_eq!(
            Profile::Sinc.eval(0.5, 1.0),
            (std::f64::consts::FRAC_PI_2).sin() / std::f64::consts::FRAC_PI_2,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            Profile::Bump.eval(0.5, 1.0),
            (1.0f64 - 1.0 / 0.75).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn sinc_is_continuous_at_zero() {
        assert_relative_eq!(sinc(1e-9), 1.0, max_relative = 1e-12);
        assert_relative_eq!(sinc(2e-8), sinc(1.9999e-8), max_relative = 1e-9);
    }

    #[test]
    fn build_profile_matches_eval() {
        let mesh = RadialMesh::new(3, 32, 1.5).unwrap();
        let f = build_profile(&mesh, &Profile::Quartic);
        for (i, &r) in mesh.nodes.iter().enumerate() {
            assert_eq!(f[i], Profile::Quartic.eval(r, 1.5));
        }
    }

    #[test]
    fn random_smooth_is_seeded_and_bounded() {
        let mesh = RadialMesh::new(3, 64, 1.0).unwrap();
        let a = random_smooth(&mesh, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_smooth(&mesh, &mut ChaCha8Rng::seed_from_u64(9));
        let c = random_smooth(&mesh, &mut ChaCha8Rng::seed_from_u64(10));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(mesh.linf_norm(&a) <= 1.0 + 0.25 + 1.0 / 9.0 + 1.0 / 16.0 + 1.0 / 25.0);
        assert!(mesh.l2_norm(&a) > 0.0);
    }
}
