//! Gaussian policy, dual-headed critic and privileged-state estimator.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;

use super::mlp::Mlp;
use super::normalizer::RunningNorm;
use crate::env::{ACTOR_OBS_DIM, PRIVILEGED_DIM};
use crate::error::{Error, Result};

pub const ACTION_DIM: usize = 3;
/// Actor observation followed by the (estimated or true) privileged state.
pub const NET_INPUT_DIM: usize = ACTOR_OBS_DIM + PRIVILEGED_DIM;
pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f64; ACTION_DIM],
    pub log_std: [f64; ACTION_DIM],
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - 0.5 * LOG_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (1.0 + LOG_2PI)).sum()
}

/// Layer widths of the three networks (hidden layers only).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetworkSizes {
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub estimator_hidden: Vec<usize>,
}

impl Default for NetworkSizes {
    fn default() -> Self {
        NetworkSizes {
            policy_hidden: vec![256, 128, 64],
            critic_hidden: vec![256, 128, 64],
            estimator_hidden: vec![256, 128],
        }
    }
}

fn with_io(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

impl NetworkSizes {
    pub fn policy(&self) -> Vec<usize> {
        with_io(NET_INPUT_DIM, &self.policy_hidden, ACTION_DIM)
    }

    pub fn critic(&self) -> Vec<usize> {
        with_io(NET_INPUT_DIM, &self.critic_hidden, 1)
    }

    pub fn estimator(&self) -> Vec<usize> {
        with_io(ACTOR_OBS_DIM, &self.estimator_hidden, PRIVILEGED_DIM)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, h) in [
            ("policy_hidden", &self.policy_hidden),
            ("critic_hidden", &self.critic_hidden),
            ("estimator_hidden", &self.estimator_hidden),
        ] {
            if h.is_empty() || h.contains(&0) {
                return Err(Error::config(
                    format!("learner.networks.{name}"),
                    "need at least one hidden layer, all widths positive",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: Mlp,
    pub log_std: [f64; ACTION_DIM],
    /// Heads for the motion and barrier returns, with disjoint parameters.
    pub critics: [Mlp; 2],
    pub estimator: Mlp,
    pub obs_norm: RunningNorm,
    pub privileged_norm: RunningNorm,
    /// Statistics of each head's returns; critics regress standardized returns.
    pub value_norm: [RunningNorm; 2],
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(sizes: &NetworkSizes, init_log_std: f64, rng: &mut R) -> Self {
        Agent {
            policy: Mlp::orthogonal(&sizes.policy(), 0.01, rng),
            log_std: [init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); ACTION_DIM],
            critics: [
                Mlp::orthogonal(&sizes.critic(), 1.0, rng),
                Mlp::orthogonal(&sizes.critic(), 1.0, rng),
            ],
            estimator: Mlp::orthogonal(&sizes.estimator(), 1.0, rng),
            obs_norm: RunningNorm::new(ACTOR_OBS_DIM),
            privileged_norm: RunningNorm::new(PRIVILEGED_DIM),
            value_norm: [RunningNorm::new(1), RunningNorm::new(1)],
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self.policy.is_finite()
            && self.log_std.iter().all(|s| s.is_finite())
            && self.critics.iter().all(Mlp::is_finite)
            && self.estimator.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite {
                stage: "parameters",
                detail: "network parameters contain NaN or infinity".into(),
            })
        }
    }

    /// Gaussian head on an already-assembled network input.
    pub fn policy_forward(&self, input: &[f64]) -> Result<PolicyOutput> {
        if input.len() != NET_INPUT_DIM {
            return Err(Error::InvalidArgument(format!(
                "policy input must have {NET_INPUT_DIM} entries, got {}",
                input.len()
            )));
        }
        self.check_finite()?;
        let y = self.policy.forward(super::mlp::as_batch(input));
        Ok(PolicyOutput {
            mean: std::array::from_fn(|i| y[(0, i)]),
            log_std: self.log_std,
        })
    }

    pub fn normalized_obs(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        self.obs_norm.normalize(obs)
    }

    /// Policy input: standardized observation with the estimator's
    /// (standardized) privileged-state prediction appended.
    pub fn policy_input(&self, obs_n: ArrayView2<f64>) -> Array2<f64> {
        let est = self.estimator.forward(obs_n);
        concatenate![Axis(1), obs_n, est]
    }

    /// Critic input: standardized observation and true privileged state.
    pub fn critic_input(&self, obs_n: ArrayView2<f64>, privileged: ArrayView2<f64>) -> Array2<f64> {
        let p = self.privileged_norm.normalize(privileged);
        concatenate![Axis(1), obs_n, p]
    }

    /// Action means for a batch of raw actor observations.
    pub fn act_mean(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        let obs_n = self.normalized_obs(obs);
        self.policy.forward(self.policy_input(obs_n.view()).view())
    }

    /// Denormalized `(V_motion, V_barrier)` for a batch.
    pub fn values(&self, obs: ArrayView2<f64>, privileged: ArrayView2<f64>) -> [Vec<f64>; 2] {
        let input = self.critic_input(self.normalized_obs(obs).view(), privileged);
        std::array::from_fn(|h| {
            let out = self.critics[h].forward(input.view());
            let (m, s) = (self.value_norm[h].mean[0], self.value_norm[h].std(0));
            out.column(0).iter().map(|v| v * s + m).collect()
        })
    }

    /// Raw head outputs on an assembled critic input.
    pub fn dual_value_forward(&self, input: &[f64]) -> (f64, f64) {
        let x = super::mlp::as_batch(input);
        (
            self.critics[0].forward(x)[(0, 0)],
            self.critics[1].forward(x)[(0, 0)],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_has_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = Agent::new(&NetworkSizes::default(), -0.5, &mut rng);
        a.policy.params.iter_mut().for_each(|p| *p = 0.0);
        let input: Vec<f64> = (0..NET_INPUT_DIM).map(|i| i as f64 * 0.1).collect();
        assert_eq!(a.policy_forward(&input).unwrap().mean, [0.0; 3]);
        assert!(a.policy_forward(&input[..40]).is_err());
        a.log_std[1] = f64::NAN;
        assert!(a.policy_forward(&input).is_err());
    }

    #[test]
    fn log_prob_at_mode_is_normalizer() {
        let mean = [0.3, -1.0, 2.0];
        let log_std = [-0.5, 0.2, 0.0];
        let lp = gaussian_log_prob(&mean, &log_std, &mean);
        let expected = -log_std.iter().sum::<f64>() - 1.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((lp - expected).abs() < 1e-14);
    }

    #[test]
    fn heads_are_independent_and_zero_output_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = Agent::new(&NetworkSizes::default(), -0.5, &mut rng);
        let input: Vec<f64> = (0..NET_INPUT_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (vm, _) = a.dual_value_forward(&input);
        for p in a.critics[1].params.iter_mut() {
            *p += 0.1;
        }
        assert_eq!(a.dual_value_forward(&input).0, vm);
        a.critics[0].zero_output_layer();
        a.critics[1].zero_output_layer();
        assert_eq!(a.dual_value_forward(&input), (0.0, 0.0));
    }
}
