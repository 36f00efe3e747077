//! Experiment configuration: schema-validated JSON, unknown keys rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use viscowave::analysis::{DecayParams, EtaMuSearch};
use viscowave::fields::Profile;
use viscowave::kernel::KernelSpec;
use viscowave::problem::ProblemSpec;
use viscowave::solver::SolverConfig;
use viscowave::well::{OptParams, WellSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub mesh: MeshSection,
    pub kernel: KernelSpec,
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub optimizer: OptParams,
    /// Seed for randomized optimizer restarts; the --seed flag wins.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsSection>,
    /// Dotted config keys to arrays of values; Cartesian product.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<BTreeMap<String, Vec<Value>>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(rename = "N")]
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub profile: Profile,
    /// Fixed displacement amplitude; mutually exclusive with auto_scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_scale: Option<AutoScale>,
    #[serde(default)]
    pub velocity: VelocitySection,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoScale {
    pub target: WellSet,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocitySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    pub amplitude: f64,
    /// v0 = proportional * u0, applied after displacement scaling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proportional: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub t1: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eta_mu_search: EtaMuSearch,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let d = DecayParams::default();
        AnalysisSection {
            t1: d.t1,
            eps1: d.eps1,
            eps2: d.eps2,
            eta_mu_search: EtaMuSearch::default(),
        }
    }
}

impl AnalysisSection {
    pub fn decay_params(&self) -> DecayParams {
        DecayParams { t1: self.t1, eps1: self.eps1, eps2: self.eps2 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmsSection {
    pub cells: usize,
    pub t_end: f64,
    /// dt0 = dt_frac * h on the coarse mesh; the fine run halves it.
    pub dt_frac: f64,
    pub amplitude: f64,
    pub omega: f64,
    pub radial_offset: f64,
    pub first_order_start: bool,
}

impl Default for MmsSection {
    fn default() -> Self {
        MmsSection {
            cells: 64,
            t_end: 0.5,
            dt_frac: 0.5,
            amplitude: 1.0,
            omega: std::f64::consts::PI,
            radial_offset: 0.0,
            first_order_start: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.problem.validate().map_err(|e| e.to_string())?;
        self.kernel.validate().map_err(|e| e.to_string())?;
        self.solver.validate().map_err(|e| e.to_string())?;
        if self.mesh.cells < 4 {
            return Err(format!("mesh.N = {} must be at least 4", self.mesh.cells));
        }
        let init = &self.initial;
        match (init.amplitude, &init.auto_scale) {
            (Some(_), Some(_)) => {
                return Err("initial.amplitude and initial.auto_scale are mutually exclusive".into())
            }
            (None, None) => return Err("initial data needs either amplitude or auto_scale".into()),
            (None, Some(auto)) => {
                if !matches!(auto.target, WellSet::W | WellSet::V) {
                    return Err("auto_scale.target must be \"w\" or \"v\"".into());
                }
                if !(0.0..1.0).contains(&auto.margin) {
                    return Err(format!("auto_scale.margin = {} must lie in [0, 1)", auto.margin));
                }
            }
            (Some(a), None) => {
                if !a.is_finite() {
                    return Err(format!("initial.amplitude = {a} must be finite"));
                }
            }
        }
        if init.velocity.profile.is_some() && init.velocity.proportional.is_some() {
            return Err("velocity.profile and velocity.proportional are mutually exclusive".into());
        }
        if let Some(mms) = &self.mms {
            if mms.cells < 8 {
                return Err(format!("mms.cells = {} must be at least 8", mms.cells));
            }
            if !(mms.t_end > 0.0 && mms.dt_frac > 0.0) {
                return Err("mms.t_end and mms.dt_frac must be positive".into());
            }
        }
        Ok(())
    }

    /// Optimizer parameters with the effective seed folded in.
    pub fn optimizer_with_seed(&self, cli_seed: Option<u64>) -> OptParams {
        let mut opt = self.optimizer;
        if let Some(seed) = cli_seed.or(self.seed) {
            opt.seed = seed;
        }
        opt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
            "problem": {"n": 3, "R": 1.0, "p": 3.0, "sigma": 1.0,
                        "k": {"profile": "constant", "c": 1.0}},
            "mesh": {"N": 16},
            "kernel": {"family": "exponential", "b": 0.5, "lambda": 1.0},
            "initial": {"profile": {"shape": "bump"}, "amplitude": 1.0, "velocity": {}}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(&minimal()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.solver.record_stride, 1);
        assert_eq!(cfg.analysis.t1, 0.5);
        assert!(cfg.seed.is_none());
        assert!(cfg.mms.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let top = minimal().replace("\"mesh\"", "\"grid\": 1, \"mesh\"");
        assert!(ExperimentConfig::from_json(&top).is_err());
        let nested = minimal().replace("\"amplitude\": 1.0", "\"amplitude\": 1.0, \"amp\": 2");
        assert!(ExperimentConfig::from_json(&nested).is_err());
    }

    #[test]
    fn amplitude_and_auto_scale_are_mutually_exclusive() {
        let both = minimal().replace(
            "\"amplitude\": 1.0",
            "\"amplitude\": 1.0, \"auto_scale\": {\"target\": \"W\"}",
        );
        assert!(ExperimentConfig::from_json(&both).is_err());
        let neither = minimal().replace("\"amplitude\": 1.0, ", "");
        assert!(ExperimentConfig::from_json(&neither).is_err());
    }

    #[test]
    fn auto_scale_accepts_both_target_spellings() {
        for target in ["\"W\"", "\"w\"", "\"V\"", "\"v\""] {
            let text = minimal().replace(
                "\"amplitude\": 1.0",
                &format!("\"auto_scale\": {{\"target\": {target}}}"),
            );
            let cfg = ExperimentConfig::from_json(&text).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("target {target}: {e}"));
            assert_eq!(cfg.initial.auto_scale.as_ref().unwrap().margin, 0.5);
        }
    }

    #[test]
    fn velocity_profile_and_proportional_conflict() {
        let text = minimal().replace(
            "\"velocity\": {}",
            "\"velocity\": {\"profile\": {\"shape\": \"quartic\"}, \"proportional\": 0.5}",
        );
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn seed_precedence_is_flag_then_config() {
        let text = minimal().replace("\"mesh\"", "\"seed\": 42, \"mesh\"");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.optimizer_with_seed(None).seed, 42);
        assert_eq!(cfg.optimizer_with_seed(Some(7)).seed, 7);
        let no_seed = ExperimentConfig::from_json(&minimal()).unwrap();
        assert_eq!(no_seed.optimizer_with_seed(None).seed, OptParams::default().seed);
    }
}
