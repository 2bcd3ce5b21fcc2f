//! Run configuration: every tunable of a run, loadable from TOML or JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajmine_core::genloop::LoopSpec;
use trajmine_core::sim::{NoiseSpec, SceneSpec};
use trajmine_core::{MatchingStrategy, MiningConfig, TrackerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {}: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scene: SceneSpec,
    pub noise: NoiseSpec,
    /// Number of consecutive seeds, starting at the run seed, to evaluate.
    pub seeds: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            noise: NoiseSpec::default(),
            seeds: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    /// Source still images for video generation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    /// Pseudo dataset to render.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds video generation and simulation; overrides `genloop.seed` and
    /// `sim.scene.seed`.
    pub seed: u64,
    pub matching: MatchingStrategy,
    pub tmm: MiningConfig,
    pub tracker: TrackerConfig,
    pub genloop: LoopSpec,
    pub sim: SimConfig,
    pub paths: PathConfig,
}

impl RunConfig {
    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|reason| ConfigError::Parse {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Copies the run seed into the generators and checks every section.
    pub fn finalize(mut self) -> Result<Self, ConfigError> {
        self.genloop.seed = self.seed;
        self.sim.scene.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section: &str, e: &dyn std::fmt::Display| {
            ConfigError::Invalid(format!("{section}: {e}"))
        };
        self.tmm.validate().map_err(|e| invalid("tmm", &e))?;
        self.genloop.validate().map_err(|e| invalid("genloop", &e))?;
        let t = &self.tracker;
        if !(t.margin >= 0.0 && t.margin.is_finite()) {
            return Err(invalid("tracker", &"margin must be >= 0"));
        }
        if !(-1.0..=1.0).contains(&t.tau_track) {
            return Err(invalid("tracker", &"tau_track must lie in [-1, 1]"));
        }
        let n = &self.sim.noise;
        for (name, p) in [("p_miss", n.p_miss), ("p_false", n.p_false)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("sim.noise", &format_args!("{name} must lie in [0, 1]")));
            }
        }
        if !(n.jitter_sigma >= 0.0 && n.jitter_sigma.is_finite()) {
            return Err(invalid("sim.noise", &"jitter_sigma must be >= 0"));
        }
        if self.sim.seeds == 0 {
            return Err(invalid("sim", &"seeds must be >= 1"));
        }
        Ok(())
    }

    /// JSON form embedded in every output.
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configs always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajmine_core::genloop::LoopMode;

    #[test]
    fn toml_sections() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(
            &p,
            r#"
seed = 9
matching = "greedy"

[tmm]
theta_iou = 0.4

[genloop]
mode = "straight"

[sim.noise]
forced_dropouts = [[0, 7]]
"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&p).unwrap().finalize().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.matching, MatchingStrategy::Greedy);
        assert_eq!(cfg.tmm.theta_iou, 0.4);
        assert_eq!(cfg.tmm.n_ctx, 2);
        assert_eq!(cfg.genloop.mode, LoopMode::GenStraight);
        assert_eq!(cfg.genloop.seed, 9);
        assert_eq!(cfg.sim.scene.seed, 9);
        assert_eq!(cfg.sim.noise.forced_dropouts, vec![(0, 7)]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "[tmm]\ntheta = 0.4\n").unwrap();
        assert!(matches!(RunConfig::load(&p), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn embedded_json_reloads() {
        let mut cfg = RunConfig::default();
        cfg.tmm.max_gap = 3;
        cfg.paths.out = Some("out".into());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        fs::write(&p, serde_json::to_vec(&cfg.to_value()).unwrap()).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), cfg);
    }

    #[test]
    fn invalid_values() {
        let mut cfg = RunConfig::default();
        cfg.tmm.theta_iou = 1.5;
        assert!(matches!(cfg.finalize(), Err(ConfigError::Invalid(_))));
        let mut cfg = RunConfig::default();
        cfg.sim.noise.p_miss = -0.1;
        assert!(cfg.finalize().is_err());
    }
}
