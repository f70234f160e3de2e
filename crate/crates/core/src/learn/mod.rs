//! Policy-gradient training of the flip controller: networks, PPO with two
//! value heads, rollouts, evaluation and checkpoints.

pub mod adam;
pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod gae;
pub mod mlp;
pub mod normalizer;
pub mod ppo;
pub mod train;

pub use agent::{Agent, NetworkSizes};
pub use checkpoint::Checkpoint;
pub use config::{LearnerConfig, ResolvedConfig, RunConfig};
pub use ppo::{PpoParams, RolloutBatch, UpdateStats};
pub use eval::{evaluate, write_eval_csv, EvalEpisode, EvalStep, EvalSummary};
pub use train::{train, IterationMetrics, TrainOutcome, Trainer};
