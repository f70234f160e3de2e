//! Deterministic evaluation: mean-action rollouts under nominal conditions,
//! with a per-step trace of the quantities plotted for flip analysis.

use std::path::Path;
use std::sync::Arc;

use nalgebra::Vector3;
use ndarray::Array2;

use super::agent::{Agent, ACTION_DIM};
use crate::env::{EnvConfig, HopperEnv, NoiseScales, Randomization, Termination, ACTOR_OBS_DIM};
use crate::error::{Error, Result};
use crate::rewards::{Phase, RewardBreakdown};
use crate::HopperModel;

/// Evaluation episodes use this seed offset so they never share a stream
/// with training environments.
pub const EVAL_SEED: u64 = 0x5eed_e7a1;

/// One control step of an evaluation rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStep {
    pub t: f64,
    pub phase: f64,
    pub base_pitch: f64,
    pub base_pitch_rate: f64,
    pub com_height: f64,
    pub l_com: Vector3<f64>,
    pub w_com: Vector3<f64>,
    pub i_com_pitch: f64,
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
    pub tau_cmd: Vector3<f64>,
    pub tau_applied: Vector3<f64>,
    pub tau_load: Vector3<f64>,
    pub contact: [bool; 4],
    pub action: Vector3<f64>,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalSummary {
    pub total_return: f64,
    pub length: usize,
    /// Mean raw rotation reward over aerial-phase steps.
    pub aerial_cav_mean: f64,
    /// Largest centroidal angular velocity about the flip axis, rad/s.
    pub peak_cav: f64,
    /// Signed base rotation about the flip axis from reset to the end, rad.
    pub net_pitch: f64,
    /// Longest run of control steps without any foot contact, s.
    pub max_flight: f64,
    /// Largest component of the averaged transmission load, N·m.
    pub peak_load: f64,
}

impl EvalSummary {
    /// Component-wise mean over several episodes.
    pub fn mean(items: &[EvalSummary]) -> EvalSummary {
        let n = items.len().max(1) as f64;
        let mut out = EvalSummary::default();
        for s in items {
            out.total_return += s.total_return / n;
            out.length += s.length;
            out.aerial_cav_mean += s.aerial_cav_mean / n;
            out.peak_cav += s.peak_cav / n;
            out.net_pitch += s.net_pitch / n;
            out.max_flight += s.max_flight / n;
            out.peak_load += s.peak_load / n;
        }
        out.length = (out.length as f64 / n).round() as usize;
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvalEpisode {
    pub initial_pitch: f64,
    pub steps: Vec<EvalStep>,
    pub termination: Termination,
    pub summary: EvalSummary,
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::None => "none",
        Termination::TimeLimit => "time_limit",
        Termination::Overload => "overload",
        Termination::Fall => "fall",
    }
}

/// Training config with randomization and observation noise switched off.
pub fn nominal_config(train: &EnvConfig) -> EnvConfig {
    EnvConfig {
        randomization: Randomization::disabled(),
        noise: NoiseScales::zero(),
        reset_perturbation: 0.0,
        ..train.clone()
    }
}

/// Runs one mean-action episode of `agent` in `config` exactly as given.
pub fn rollout(agent: &Agent, model: Arc<HopperModel>, config: EnvConfig, seed: u64) -> Result<EvalEpisode> {
    let dt_control = config.dt_control;
    let axis = config.rewards.axis();
    let schedule = config.schedule;
    let mut env = HopperEnv::new(model, config, seed)?;
    let (mut obs, _) = env.reset()?;
    let initial_pitch = env.base_pitch();
    let mut steps = Vec::new();
    let mut summary = EvalSummary {
        peak_cav: f64::NEG_INFINITY,
        ..EvalSummary::default()
    };
    let (mut aerial_sum, mut aerial_n) = (0.0, 0usize);
    let mut flight_run = 0usize;
    let mut longest_run = 0usize;
    loop {
        let x = Array2::from_shape_vec((1, ACTOR_OBS_DIM), obs.to_array().to_vec())
            .expect("observation width is fixed");
        let mean = agent.act_mean(x.view());
        let action = Vector3::from_fn(|i, _| mean[(0, i.min(ACTION_DIM - 1))]);
        let out = env.step(&action)?;
        let info = &out.info;
        summary.total_return += out.reward.total();
        summary.peak_cav = summary.peak_cav.max(info.w_com.dot(&axis));
        summary.peak_load = summary.peak_load.max(info.tau_load.amax());
        if schedule.phase_of(info.phase)? == Phase::Aerial {
            aerial_sum += out.reward.r_cav;
            aerial_n += 1;
        }
        if info.touched {
            flight_run = 0;
        } else {
            flight_run += 1;
            longest_run = longest_run.max(flight_run);
        }
        steps.push(EvalStep {
            t: info.t,
            phase: info.phase,
            base_pitch: info.base_pitch,
            base_pitch_rate: info.base_pitch_rate,
            com_height: info.com_height,
            l_com: info.l_com,
            w_com: info.w_com,
            i_com_pitch: info.i_com_pitch,
            q: info.q,
            qdot: info.qdot,
            tau_cmd: info.tau_cmd,
            tau_applied: info.tau_applied,
            tau_load: info.tau_load,
            contact: info.contact,
            action,
            reward: out.reward,
        });
        obs = out.observation;
        if out.done {
            summary.length = steps.len();
            summary.aerial_cav_mean = if aerial_n > 0 { aerial_sum / aerial_n as f64 } else { 0.0 };
            summary.net_pitch = steps.last().map_or(0.0, |s| s.base_pitch) - initial_pitch;
            summary.max_flight = longest_run as f64 * dt_control;
            return Ok(EvalEpisode {
                initial_pitch,
                steps,
                termination: info.termination,
                summary,
            });
        }
    }
}

pub const EVAL_SCHEMA_VERSION: u32 = 1;

const JOINTS: [&str; 3] = ["knee_pitch", "ankle_pitch", "ankle_roll"];
const AXES: [&str; 3] = ["x", "y", "z"];

/// Header of the per-step evaluation CSV. Independent of mode flags.
pub fn eval_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "schema_version", "seed", "config_hash", "episode", "step", "t", "phase", "base_pitch",
        "base_pitch_rate", "com_height",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["cam", "cav"] {
        cols.extend(AXES.iter().map(|a| format!("{prefix}_{a}")));
    }
    cols.push("i_com_pitch".into());
    for prefix in ["q", "qdot", "tau_cmd", "tau_clipped", "tau_load", "action"] {
        cols.extend(JOINTS.iter().map(|j| format!("{prefix}_{j}")));
    }
    cols.extend((0..4).map(|k| format!("contact_{k}")));
    cols.extend(RewardBreakdown::TERM_NAMES.iter().map(|s| s.to_string()));
    cols
}

impl EvalStep {
    pub fn csv_record(&self, seed: u64, config_hash: &str, episode: usize, step: usize) -> Vec<String> {
        let f = super::train::fmt_float;
        let mut row = vec![
            EVAL_SCHEMA_VERSION.to_string(),
            seed.to_string(),
            config_hash.to_string(),
            episode.to_string(),
            step.to_string(),
            f(self.t),
            f(self.phase),
            f(self.base_pitch),
            f(self.base_pitch_rate),
            f(self.com_height),
        ];
        for v in [&self.l_com, &self.w_com] {
            row.extend(v.iter().map(|x| f(*x)));
        }
        row.push(f(self.i_com_pitch));
        for v in [&self.q, &self.qdot, &self.tau_cmd, &self.tau_applied, &self.tau_load, &self.action] {
            row.extend(v.iter().map(|x| f(*x)));
        }
        row.extend(self.contact.iter().map(|c| u8::from(*c).to_string()));
        row.extend(self.reward.term_values().iter().map(|x| f(*x)));
        row
    }
}

/// Writes every step of `episodes` to one CSV at `path`.
pub fn write_eval_csv(path: &Path, episodes: &[EvalEpisode], seed: u64, config_hash: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(eval_columns())?;
    for (k, ep) in episodes.iter().enumerate() {
        for (i, step) in ep.steps.iter().enumerate() {
            writer.write_record(step.csv_record(seed, config_hash, k, i))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// `episodes` deterministic nominal rollouts; episode `k` uses seed `EVAL_SEED + k`.
pub fn evaluate(
    agent: &Agent,
    model: &Arc<HopperModel>,
    train_config: &EnvConfig,
    episodes: usize,
) -> Result<Vec<EvalEpisode>> {
    let config = nominal_config(train_config);
    (0..episodes as u64)
        .map(|k| rollout(agent, Arc::clone(model), config.clone(), EVAL_SEED + k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::NetworkSizes;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn untrained() -> Agent {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Agent::new(&NetworkSizes::default(), -0.7, &mut rng)
    }

    #[test]
    fn untrained_policy_barely_rotates() {
        let model = Arc::new(HopperModel::default());
        let ep = evaluate(&untrained(), &model, &EnvConfig::default(), 1).unwrap().remove(0);
        assert_eq!(ep.summary.length, ep.steps.len());
        assert!(ep.summary.net_pitch.abs() < 0.5, "{}", ep.summary.net_pitch);
        assert!(ep.summary.total_return.is_finite());
    }

    #[test]
    fn csv_rows_match_header_width() {
        let model = Arc::new(HopperModel::default());
        let ep = evaluate(&untrained(), &model, &EnvConfig::default(), 1).unwrap();
        let width = eval_columns().len();
        assert_eq!(width, 10 + 6 + 1 + 18 + 4 + 15);
        assert!(ep[0].steps.iter().all(|s| s.csv_record(0, "h", 0, 0).len() == width));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        write_eval_csv(&path, &ep, 0, "h").unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("schema_version,"));
        assert_eq!(text.lines().count(), 1 + ep[0].steps.len());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let model = Arc::new(HopperModel::default());
        let a = evaluate(&untrained(), &model, &EnvConfig::default(), 1).unwrap();
        let b = evaluate(&untrained(), &model, &EnvConfig::default(), 1).unwrap();
        assert_eq!(a[0].steps, b[0].steps);
    }
}
