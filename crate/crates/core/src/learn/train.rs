//! The training loop: rollouts from persistent environments, advantage
//! estimation per head, PPO updates, periodic evaluation, metrics and
//! checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::agent::{gaussian_log_prob, Agent, ACTION_DIM};
use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::config::ResolvedConfig;
use super::eval::{evaluate, EvalSummary};
use super::ppo::{ppo_update, Optimizers, RolloutBatch, UpdateStats};
use crate::env::{HopperEnv, Termination, ACTOR_OBS_DIM, PRIVILEGED_DIM};
use crate::error::{Error, Result};
use crate::HopperModel;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

pub const METRICS_COLUMNS: [&str; 24] = [
    "schema_version",
    "seed",
    "config_hash",
    "iteration",
    "env_steps",
    "episodes_completed",
    "mean_return_motion",
    "mean_return_barrier",
    "mean_episode_length",
    "policy_loss",
    "value_loss_motion",
    "value_loss_barrier",
    "estimator_loss",
    "entropy",
    "approx_kl",
    "clip_fraction",
    "mean_std",
    "eval_return",
    "eval_length",
    "eval_aerial_cav",
    "eval_peak_cav",
    "eval_net_pitch",
    "eval_max_flight",
    "eval_peak_load",
];

/// Nine significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub env_steps: u64,
    /// Episodes finished during this iteration.
    pub episodes_completed: usize,
    pub mean_return: [f64; 2],
    pub mean_episode_length: f64,
    pub update: UpdateStats,
    pub mean_std: f64,
    pub eval: Option<EvalSummary>,
}

impl IterationMetrics {
    pub fn csv_record(&self, seed: u64, config_hash: &str) -> Vec<String> {
        let u = &self.update;
        let mut rec = vec![
            METRICS_SCHEMA_VERSION.to_string(),
            seed.to_string(),
            config_hash.to_string(),
            self.iteration.to_string(),
            self.env_steps.to_string(),
            self.episodes_completed.to_string(),
            fmt_float(self.mean_return[0]),
            fmt_float(self.mean_return[1]),
            fmt_float(self.mean_episode_length),
            fmt_float(u.policy_loss),
            fmt_float(u.value_loss[0]),
            fmt_float(u.value_loss[1]),
            fmt_float(u.estimator_loss),
            fmt_float(u.entropy),
            fmt_float(u.approx_kl),
            fmt_float(u.clip_fraction),
            fmt_float(self.mean_std),
        ];
        match &self.eval {
            Some(e) => rec.extend([
                fmt_float(e.total_return),
                e.length.to_string(),
                fmt_float(e.aerial_cav_mean),
                fmt_float(e.peak_cav),
                fmt_float(e.net_pitch),
                fmt_float(e.max_flight),
                fmt_float(e.peak_load),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        rec
    }
}

/// Per-environment return bookkeeping for the episode in progress.
#[derive(Debug, Clone, Copy, Default)]
struct EpisodeTally {
    ret: [f64; 2],
    len: usize,
}

pub struct Trainer {
    config: ResolvedConfig,
    config_hash: String,
    model: Arc<HopperModel>,
    agent: Agent,
    opts: Optimizers,
    envs: Vec<HopperEnv>,
    obs: Vec<[f64; ACTOR_OBS_DIM]>,
    privileged: Vec<[f64; PRIVILEGED_DIM]>,
    tallies: Vec<EpisodeTally>,
    sample_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    iteration: usize,
    env_steps: u64,
}

impl Trainer {
    /// Every random stream (environment, action sampling, minibatch
    /// shuffling, initialization) is derived from the run seed.
    pub fn new(config: ResolvedConfig, model: HopperModel) -> Result<Self> {
        config.run.validate()?;
        let run = &config.run;
        let learner = &run.learner;
        let mut root = ChaCha8Rng::seed_from_u64(run.seed);
        let mut init_rng = ChaCha8Rng::seed_from_u64(root.random());
        let sample_rng = ChaCha8Rng::seed_from_u64(root.random());
        let update_rng = ChaCha8Rng::seed_from_u64(root.random());
        let agent = Agent::new(&learner.networks, learner.init_log_std, &mut init_rng);
        let opts = Optimizers::new(&agent, learner.learning_rate);
        let model = Arc::new(model);
        let mut envs = Vec::with_capacity(learner.num_envs);
        let mut obs = Vec::with_capacity(learner.num_envs);
        let mut privileged = Vec::with_capacity(learner.num_envs);
        for _ in 0..learner.num_envs {
            let mut env = HopperEnv::new(Arc::clone(&model), run.env.clone(), root.random())?;
            let (o, p) = env.reset()?;
            obs.push(o.to_array());
            privileged.push(p.to_array());
            envs.push(env);
        }
        Ok(Trainer {
            config_hash: config.hash(),
            tallies: vec![EpisodeTally::default(); envs.len()],
            config,
            model,
            agent,
            opts,
            envs,
            obs,
            privileged,
            sample_rng,
            update_rng,
            iteration: 0,
            env_steps: 0,
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &ResolvedConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_agent(
            &self.agent,
            CheckpointMeta {
                seed: self.config.run.seed,
                iteration: self.iteration,
                config_hash: self.config_hash.clone(),
                config: self.config.clone(),
            },
        )
    }

    fn current_inputs(&self) -> (Array2<f64>, Array2<f64>) {
        let n = self.envs.len();
        let obs = Array2::from_shape_fn((n, ACTOR_OBS_DIM), |(e, i)| self.obs[e][i]);
        let privileged = Array2::from_shape_fn((n, PRIVILEGED_DIM), |(e, i)| self.privileged[e][i]);
        (obs, privileged)
    }

    /// One rollout and one update, plus an evaluation when scheduled.
    pub fn iterate(&mut self) -> Result<IterationMetrics> {
        let learner = self.config.run.learner.clone();
        let n = self.envs.len();
        let t_len = learner.rollout_len;
        let rows = n * t_len;
        let mut obs_all = Array2::zeros((rows, ACTOR_OBS_DIM));
        let mut priv_all = Array2::zeros((rows, PRIVILEGED_DIM));
        let mut actions = Array2::zeros((rows, ACTION_DIM));
        let mut log_probs = vec![0.0; rows];
        let mut rewards = [vec![0.0; rows], vec![0.0; rows]];
        let mut dones = vec![false; rows];
        // Rows cut by the time limit, with the observation they ended in.
        let mut truncated: Vec<(usize, [f64; ACTOR_OBS_DIM], [f64; PRIVILEGED_DIM])> = Vec::new();
        let mut finished: Vec<EpisodeTally> = Vec::new();
        let std = self.agent.log_std.map(f64::exp);

        for t in 0..t_len {
            let (obs, privileged) = self.current_inputs();
            let mean = self.agent.act_mean(obs.view());
            for e in 0..n {
                let row = t * n + e;
                obs_all.row_mut(row).assign(&obs.row(e));
                priv_all.row_mut(row).assign(&privileged.row(e));
                let m: [f64; ACTION_DIM] = std::array::from_fn(|k| mean[(e, k)]);
                let a: [f64; ACTION_DIM] = std::array::from_fn(|k| {
                    let z: f64 = self.sample_rng.sample(StandardNormal);
                    m[k] + std[k] * z
                });
                log_probs[row] = gaussian_log_prob(&m, &self.agent.log_std, &a);
                for k in 0..ACTION_DIM {
                    actions[(row, k)] = a[k];
                }
                let out = self.envs[e].step(&nalgebra::Vector3::from(a))?;
                rewards[0][row] = out.reward.r_motion;
                rewards[1][row] = out.reward.r_barrier;
                let tally = &mut self.tallies[e];
                tally.ret[0] += out.reward.r_motion;
                tally.ret[1] += out.reward.r_barrier;
                tally.len += 1;
                if out.done {
                    dones[row] = true;
                    if out.info.termination == Termination::TimeLimit {
                        truncated.push((row, out.observation.to_array(), out.privileged.to_array()));
                    }
                    finished.push(std::mem::take(tally));
                    let (o, p) = self.envs[e].reset()?;
                    self.obs[e] = o.to_array();
                    self.privileged[e] = p.to_array();
                } else {
                    self.obs[e] = out.observation.to_array();
                    self.privileged[e] = out.privileged.to_array();
                }
            }
        }
        self.env_steps += rows as u64;

        let values = self.agent.values(obs_all.view(), priv_all.view());
        let (obs_last, priv_last) = self.current_inputs();
        let last_values = self.agent.values(obs_last.view(), priv_last.view());
        // A time limit is not a true terminal state: bootstrap its value.
        if !truncated.is_empty() {
            let k = truncated.len();
            let o = Array2::from_shape_fn((k, ACTOR_OBS_DIM), |(r, i)| truncated[r].1[i]);
            let p = Array2::from_shape_fn((k, PRIVILEGED_DIM), |(r, i)| truncated[r].2[i]);
            let v = self.agent.values(o.view(), p.view());
            for (r, (row, _, _)) in truncated.iter().enumerate() {
                for h in 0..2 {
                    rewards[h][*row] += learner.gamma * v[h][r];
                }
            }
        }

        let mut batch = RolloutBatch {
            obs: obs_all,
            privileged: priv_all,
            actions,
            log_probs,
            rewards,
            values,
            advantages: [Vec::new(), Vec::new()],
            returns: [Vec::new(), Vec::new()],
            dones,
        };
        batch.compute_advantages(&last_values, n, learner.gamma, learner.gae_lambda);
        let update = ppo_update(
            &mut self.agent,
            &mut self.opts,
            &batch,
            &learner.ppo(),
            &mut self.update_rng,
        )?;
        self.iteration += 1;

        let eval = if learner.eval_interval > 0 && self.iteration % learner.eval_interval == 0 {
            let eps = evaluate(&self.agent, &self.model, &self.config.run.env, learner.eval_episodes)?;
            let summaries: Vec<_> = eps.iter().map(|e| e.summary).collect();
            Some(EvalSummary::mean(&summaries))
        } else {
            None
        };

        let k = finished.len() as f64;
        let (mean_return, mean_len) = if finished.is_empty() {
            ([f64::NAN; 2], f64::NAN)
        } else {
            (
                [0, 1].map(|h| finished.iter().map(|f| f.ret[h]).sum::<f64>() / k),
                finished.iter().map(|f| f.len as f64).sum::<f64>() / k,
            )
        };
        Ok(IterationMetrics {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episodes_completed: finished.len(),
            mean_return,
            mean_episode_length: mean_len,
            update,
            mean_std: self.agent.log_std.iter().map(|l| l.exp()).sum::<f64>() / ACTION_DIM as f64,
            eval,
        })
    }
}

/// Files produced by a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics_path: PathBuf,
    pub final_checkpoint: PathBuf,
    pub iterations: usize,
    pub history: Vec<IterationMetrics>,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.json";
pub const ABORT_CHECKPOINT: &str = "checkpoint_abort.json";

fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("iter_{iteration:06}.json"))
}

/// Runs the configured number of iterations, writing the resolved config,
/// metrics CSV and checkpoints under `output_dir`. On failure the latest
/// parameters are saved to `checkpoint_abort.json` before the error returns.
pub fn train(
    config: ResolvedConfig,
    model: HopperModel,
    output_dir: &Path,
    mut progress: impl FnMut(&IterationMetrics),
) -> Result<TrainOutcome> {
    fs::create_dir_all(output_dir.join("checkpoints")).map_err(|e| Error::io(output_dir, e))?;
    let config_path = output_dir.join(CONFIG_FILE);
    let text = serde_json::to_string_pretty(&config).map_err(|e| Error::json(&config_path, e))?;
    fs::write(&config_path, text + "\n").map_err(|e| Error::io(&config_path, e))?;

    let metrics_path = output_dir.join(METRICS_FILE);
    let file = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::io(&metrics_path, std::io::Error::other(e));
    writer.write_record(METRICS_COLUMNS).map_err(csv_err)?;

    let iterations = config.run.learner.iterations;
    let interval = config.run.learner.checkpoint_interval;
    let seed = config.run.seed;
    let mut trainer = Trainer::new(config, model)?;
    let hash = trainer.config_hash().to_string();
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let metrics = match trainer.iterate() {
            Ok(m) => m,
            Err(e) => {
                writer.flush().map_err(|e| Error::io(&metrics_path, e))?;
                let path = output_dir.join(ABORT_CHECKPOINT);
                if let Err(save) = trainer.checkpoint().save(&path) {
                    log::error!("could not save abort checkpoint: {save}");
                }
                return Err(e);
            }
        };
        writer.write_record(metrics.csv_record(seed, &hash)).map_err(csv_err)?;
        writer.flush().map_err(|e| Error::io(&metrics_path, e))?;
        if interval > 0 && metrics.iteration % interval == 0 {
            trainer.checkpoint().save(checkpoint_path(output_dir, metrics.iteration))?;
        }
        progress(&metrics);
        history.push(metrics);
    }
    let final_checkpoint = output_dir.join(FINAL_CHECKPOINT);
    trainer.checkpoint().save(&final_checkpoint)?;
    writer.into_inner().map_err(|e| Error::io(&metrics_path, e.into_error()))?.flush()
        .map_err(|e| Error::io(&metrics_path, e))?;
    Ok(TrainOutcome {
        metrics_path,
        final_checkpoint,
        iterations,
        history,
    })
}
