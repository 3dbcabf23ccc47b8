//! Experiment configuration file (TOML). Every section and field is
//! optional; omitted values keep their defaults.
//!
//! ```toml
//! [matrix]
//! conditions = ["EO", "ST"]
//! seeds = [0, 1, 2]
//!
//! [params]
//! window_w = 15
//!
//! [sim.profiles.Struggling]
//! name = "Struggling"
//! initial_knowledge = 0.1
//! gain_multiplier = 0.8
//! confusion_threshold = 0.3
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::harness::{ExperimentMatrix, SimSettings};
use crate::safety::ConstraintParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub matrix: ExperimentMatrix,
    pub params: ConstraintParams,
    pub sim: SimSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let p = &self.params;
        if p.window_w == 0 {
            return bad("params.window_w must be positive".into());
        }
        if !(p.theta_min > 0.0 && p.theta_min <= 1.0) {
            return bad(format!("params.theta_min {} outside (0, 1]", p.theta_min));
        }
        if !(0.0..=1.0).contains(&p.delta_min) {
            return bad(format!("params.delta_min {} outside [0, 1]", p.delta_min));
        }
        if p.weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("params.weights must be non-negative".into());
        }
        for (kind, prof) in &self.sim.profiles {
            if prof.name != *kind {
                return bad(format!("profile entry {kind} is named {}", prof.name));
            }
            if !(prof.gain_multiplier > 0.0) {
                return bad(format!("profile {kind}: gain_multiplier must be positive"));
            }
        }
        if self.matrix.session_length == 0 {
            return bad("matrix.session_length must be positive".into());
        }
        Ok(())
    }
}
