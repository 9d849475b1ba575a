//! Experiment configuration, stored as sectioned `key = value` TOML.
//! Every field defaults to the reference GridWorld setting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, StrategyKind};
use crate::dqn::DqnConfig;
use crate::env::{EnvSpec, DEFAULT_MAX_STEPS};
use crate::reuse::ReuseConfig;
use crate::selector::SelectorConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Training steps between evaluations.
    pub interval: u64,
    pub episodes: usize,
    /// Normalizer for the AUC.
    pub teacher_score: f64,
    /// Write a per-step `trace.csv` next to the metrics.
    pub trace: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            interval: 500,
            episodes: 20,
            teacher_score: 1.0,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub strategy: StrategyKind,
    /// Teacher advice budget `N`.
    pub budget: u64,
    pub total_steps: u64,
    pub max_episode_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub env: EnvSpec,
    pub dqn: DqnConfig,
    pub selector: SelectorConfig,
    pub reuse: ReuseConfig,
    pub baselines: BaselineConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            strategy: StrategyKind::A7,
            budget: 5_000,
            total_steps: 30_000,
            max_episode_steps: DEFAULT_MAX_STEPS,
            output_dir: None,
            env: EnvSpec::default(),
            dqn: DqnConfig::default(),
            selector: SelectorConfig::default(),
            reuse: ReuseConfig::default(),
            baselines: BaselineConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::Config("max_episode_steps must be positive".into()));
        }
        if self.eval.interval == 0 || self.eval.episodes == 0 {
            return Err(Error::Config("eval interval and episodes must be positive".into()));
        }
        if !(self.eval.teacher_score > 0.0) {
            return Err(Error::Config("eval teacher_score must be positive".into()));
        }
        self.dqn.validate()?;
        self.selector.validate()?;
        self.reuse.validate()?;
        self.baselines.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_setting() {
        let c = ExperimentConfig::default();
        assert_eq!(c.budget, 5_000);
        assert_eq!(c.dqn.learning_rate, 1e-4);
        assert_eq!(c.dqn.batch_size, 32);
        assert_eq!(c.dqn.gamma, 0.99);
        assert_eq!((c.dqn.replay_min_size, c.dqn.replay_max_size), (500, 5_000));
        assert_eq!(c.dqn.target_update_every, 100);
        assert_eq!(c.dqn.epsilon_anneal_steps, 5_000);
        assert_eq!((c.selector.epochs, c.selector.retrain_every), (20, 1_000));
        assert_eq!((c.selector.queue_len, c.selector.percentile), (200, 0.7));
        assert_eq!(c.reuse.dropout_rate, 0.35);
        assert_eq!(c.reuse.mc_passes, 100);
        assert_eq!(c.reuse.reuse_probability, 0.5);
        assert_eq!((c.reuse.lambda_initial, c.reuse.lambda_horizon), (0.1, 20_000));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::default();
        c.strategy = StrategyKind::Iaa;
        c.baselines.iaa_threshold = Some(0.125);
        c.output_dir = Some("out/x".into());
        c.env = EnvSpec::FourRooms {
            width: 9,
            height: 7,
        };
        c.reuse.learning_rate = 0.1 + 0.2;
        let text = c.to_toml_string();
        assert!(text.contains("[dqn]"));
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = ExperimentConfig::from_toml_str("seed = 7\nstrategy = \"ea\"\n[dqn]\ngamma = 0.9\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.strategy, StrategyKind::Ea);
        assert_eq!(c.dqn.gamma, 0.9);
        assert_eq!(c.dqn.batch_size, 32);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("total_steps = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("strategy = \"rcmp\"").is_err());
        assert!(ExperimentConfig::from_toml_str("[dqn]\ngamma = 1.5").is_err());
    }
}
