use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::agent::NetworkSizes;
use super::ppo::PpoParams;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::model::{HopperModel, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub num_envs: usize,
    pub rollout_len: usize,
    pub iterations: usize,
    pub init_log_std: f64,
    pub networks: NetworkSizes,
    /// Evaluate every this many iterations (0 disables evaluation).
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Write a checkpoint every this many iterations (0: final only).
    pub checkpoint_interval: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch_size: 512,
            entropy_coef: 0.005,
            max_grad_norm: 1.0,
            num_envs: 64,
            rollout_len: 100,
            iterations: 600,
            init_log_std: -0.7,
            networks: NetworkSizes::default(),
            eval_interval: 1,
            eval_episodes: 1,
            checkpoint_interval: 50,
        }
    }
}

impl LearnerConfig {
    pub fn ppo(&self) -> PpoParams {
        PpoParams {
            clip: self.clip,
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::config(format!("learner.{name}"), "must lie in [0, 1]"))
            }
        };
        unit("gamma", self.gamma)?;
        unit("gae_lambda", self.gae_lambda)?;
        let positive = [
            ("clip", self.clip),
            ("learning_rate", self.learning_rate),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::config(format!("learner.{name}"), "must be positive"));
            }
        }
        let counts = [
            ("epochs", self.epochs),
            ("minibatch_size", self.minibatch_size),
            ("num_envs", self.num_envs),
            ("rollout_len", self.rollout_len),
            ("iterations", self.iterations),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::config(format!("learner.{name}"), "must be at least 1"));
            }
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(Error::config("learner.entropy_coef", "must be non-negative"));
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return Err(Error::config("learner.eval_episodes", "must be at least 1 when evaluating"));
        }
        self.networks.validate()
    }
}

/// Everything one training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Hopper description; built-in defaults when absent. Relative paths are
    /// resolved against the directory of the run config file.
    pub model: Option<PathBuf>,
    pub env: EnvConfig,
    pub learner: LearnerConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            env: EnvConfig::default(),
            learner: LearnerConfig::default(),
            output_dir: PathBuf::from("runs/default"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if let Some(m) = &cfg.model {
            if m.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.model = Some(base.join(m));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.model {
            if !m.exists() {
                return Err(Error::config(
                    "model",
                    format!("model config {} does not exist", m.display()),
                ));
            }
        }
        self.env.validate()?;
        self.learner.validate()
    }

    pub fn load_model(&self) -> Result<HopperModel> {
        match &self.model {
            Some(path) => HopperModel::from_json_file(path),
            None => HopperModel::new(ModelConfig::default()),
        }
    }
}

/// Run config together with the fully resolved model; written next to every
/// run's outputs and hashed into every CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub model: ModelConfig,
}

impl ResolvedConfig {
    pub fn new(run: RunConfig, model: &HopperModel) -> Self {
        ResolvedConfig {
            run,
            model: model.to_config(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_is_stable() {
        let run = RunConfig::default();
        run.validate().unwrap();
        let model = run.load_model().unwrap();
        let a = ResolvedConfig::new(run.clone(), &model).hash();
        let b = ResolvedConfig::new(run.clone(), &model).hash();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let mut other = run;
        other.seed = 1;
        assert_ne!(ResolvedConfig::new(other, &model).hash(), a);
    }

    #[test]
    fn missing_model_file_is_a_config_error() {
        let run = RunConfig {
            model: Some(PathBuf::from("/nonexistent/model.json")),
            ..RunConfig::default()
        };
        assert!(matches!(run.validate(), Err(Error::Config { field, .. }) if field == "model"));
    }

    #[test]
    fn bad_learner_values_name_the_field() {
        let mut run = RunConfig::default();
        run.learner.gamma = 1.5;
        assert!(matches!(run.validate(), Err(Error::Config { field, .. }) if field == "learner.gamma"));
    }
}
