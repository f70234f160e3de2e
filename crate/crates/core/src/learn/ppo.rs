//! Clipped-surrogate policy optimization with a dual-headed critic and a
//! concurrently trained privileged-state estimator.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::adam::{clip_grad_norm, Adam};
use super::agent::{gaussian_entropy, gaussian_log_prob, Agent, ACTION_DIM, LOG_STD_MAX, LOG_STD_MIN};
use super::gae::{gae, normalize};
use super::mlp::Mlp;
use crate::error::{Error, Result};

/// Trajectories of `steps × envs` transitions, row-major by step.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub obs: Array2<f64>,
    pub privileged: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    /// Motion and barrier rewards.
    pub rewards: [Vec<f64>; 2],
    pub values: [Vec<f64>; 2],
    pub advantages: [Vec<f64>; 2],
    pub returns: [Vec<f64>; 2],
    pub dones: Vec<bool>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let rows = [self.obs.nrows(), self.privileged.nrows(), self.actions.nrows()];
        let cols = [
            self.rewards[0].len(),
            self.rewards[1].len(),
            self.values[0].len(),
            self.values[1].len(),
            self.advantages[0].len(),
            self.advantages[1].len(),
            self.returns[0].len(),
            self.returns[1].len(),
            self.dones.len(),
        ];
        if rows.iter().chain(&cols).any(|&k| k != n) {
            return Err(Error::InvalidArgument(
                "rollout arrays disagree on the number of steps".into(),
            ));
        }
        if self.advantages.iter().flatten().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                stage: "advantages",
                detail: "GAE produced a non-finite advantage".into(),
            });
        }
        Ok(())
    }

    /// Fills per-head advantages and returns.
    pub fn compute_advantages(&mut self, last_values: &[Vec<f64>; 2], num_envs: usize, gamma: f64, lambda: f64) {
        for h in 0..2 {
            let (adv, ret) = gae(
                &self.rewards[h],
                &self.values[h],
                &self.dones,
                &last_values[h],
                num_envs,
                gamma,
                lambda,
            );
            self.advantages[h] = adv;
            self.returns[h] = ret;
        }
    }
}

/// Each head's advantages standardized, then summed with equal weight.
pub fn combined_advantages(heads: &[&[f64]]) -> Vec<f64> {
    let n = heads.first().map_or(0, |h| h.len());
    let mut out = vec![0.0; n];
    for h in heads {
        for (o, a) in out.iter_mut().zip(normalize(h)) {
            *o += a;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PpoParams {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: [f64; 2],
    pub estimator_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss of the clipped surrogate with entropy bonus and its gradient with
/// respect to the action means and log standard deviations.
#[derive(Debug, Clone)]
pub struct SurrogateGrad {
    pub loss: f64,
    pub surrogate: f64,
    pub d_mean: Array2<f64>,
    pub d_log_std: [f64; ACTION_DIM],
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

pub fn surrogate(
    means: ArrayView2<f64>,
    log_std: &[f64; ACTION_DIM],
    actions: ArrayView2<f64>,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> SurrogateGrad {
    let b = means.nrows();
    let inv_b = 1.0 / b as f64;
    let mut d_mean = Array2::zeros((b, ACTION_DIM));
    let mut d_log_std = [0.0; ACTION_DIM];
    let mut objective = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let std = log_std.map(f64::exp);
    for i in 0..b {
        let mean = means.row(i);
        let act = actions.row(i);
        let lp = gaussian_log_prob(mean.as_slice().unwrap(), log_std, act.as_slice().unwrap());
        let ratio = (lp - old_log_probs[i]).exp();
        let a = advantages[i];
        let bounded = ratio.clamp(1.0 - clip, 1.0 + clip);
        objective += (ratio * a).min(bounded * a);
        kl += old_log_probs[i] - lp;
        if (ratio - 1.0).abs() > clip {
            clipped += 1;
        }
        // The unclipped branch is active (and carries the gradient) when it
        // is the smaller of the two.
        if ratio * a <= bounded * a {
            let g = -a * ratio * inv_b;
            for k in 0..ACTION_DIM {
                let z = (act[k] - mean[k]) / std[k];
                d_mean[(i, k)] = g * z / std[k];
                d_log_std[k] += g * (z * z - 1.0);
            }
        }
    }
    let entropy = gaussian_entropy(log_std);
    for d in d_log_std.iter_mut() {
        *d -= entropy_coef;
    }
    let surrogate = objective * inv_b;
    SurrogateGrad {
        loss: -surrogate - entropy_coef * entropy,
        surrogate,
        d_mean,
        d_log_std,
        approx_kl: kl * inv_b,
        clip_fraction: clipped as f64 * inv_b,
    }
}

/// Policy loss on a minibatch and its gradient, laid out as the policy
/// network parameters followed by the three log standard deviations.
pub fn policy_loss_and_grad(
    policy: &Mlp,
    log_std: &[f64; ACTION_DIM],
    input: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> (SurrogateGrad, Vec<f64>) {
    let (means, cache) = policy.forward_cached(input);
    let s = surrogate(means.view(), log_std, actions, old_log_probs, advantages, clip, entropy_coef);
    let mut grad = vec![0.0; policy.params.len() + ACTION_DIM];
    let n = policy.params.len();
    policy.backward(&cache, s.d_mean.view(), &mut grad[..n]);
    grad[n..].copy_from_slice(&s.d_log_std);
    (s, grad)
}

/// Mean squared error `mean(‖f(x) − y‖²) / 2` of a regression network.
pub fn regression_loss_and_grad(net: &Mlp, input: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Vec<f64>) {
    let (out, cache) = net.forward_cached(input);
    let diff = out - target;
    let b = input.nrows() as f64;
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / b;
    let mut grad = vec![0.0; net.params.len()];
    net.backward(&cache, (diff / b).view(), &mut grad);
    (loss, grad)
}

/// Optimizer state for every network of an [`Agent`].
#[derive(Debug, Clone)]
pub struct Optimizers {
    pub policy: Adam,
    pub critics: [Adam; 2],
    pub estimator: Adam,
}

impl Optimizers {
    pub fn new(agent: &Agent, lr: f64) -> Self {
        Optimizers {
            policy: Adam::new(agent.policy.params.len() + ACTION_DIM, lr),
            critics: [
                Adam::new(agent.critics[0].params.len(), lr),
                Adam::new(agent.critics[1].params.len(), lr),
            ],
            estimator: Adam::new(agent.estimator.params.len(), lr),
        }
    }
}

fn finite_or(stage: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite {
            stage,
            detail: format!("loss evaluated to {x}"),
        })
    }
}

/// Trains the estimator alone on a fixed dataset for one pass of minibatches.
pub fn estimator_epoch<R: Rng + ?Sized>(
    agent: &mut Agent,
    opt: &mut Adam,
    obs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    minibatch_size: usize,
    max_grad_norm: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut idx: Vec<usize> = (0..obs.nrows()).collect();
    idx.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in idx.chunks(minibatch_size.max(1)) {
        let x = agent.normalized_obs(obs.select(Axis(0), chunk).view());
        let y = targets.select(Axis(0), chunk);
        let (loss, mut grad) = regression_loss_and_grad(&agent.estimator, x.view(), y.view());
        finite_or("estimator loss", loss)?;
        clip_grad_norm(&mut grad, max_grad_norm);
        opt.step(&mut agent.estimator.params, &grad);
        total += loss;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

/// Several epochs of minibatch updates on one rollout. Input normalizers are
/// refreshed from the batch afterwards so the first minibatch sees exactly
/// the policy that collected the data.
pub fn ppo_update<R: Rng + ?Sized>(
    agent: &mut Agent,
    opts: &mut Optimizers,
    batch: &RolloutBatch,
    params: &PpoParams,
    rng: &mut R,
) -> Result<UpdateStats> {
    batch.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty rollout batch".into()));
    }
    let advantages = combined_advantages(&[&batch.advantages[0], &batch.advantages[1]]);
    let mut value_targets = Vec::with_capacity(2);
    for h in 0..2 {
        let returns = ndarray::Array2::from_shape_vec((batch.len(), 1), batch.returns[h].clone())
            .expect("one return per step");
        agent.value_norm[h].update(returns.view());
        value_targets.push(agent.value_norm[h].normalize(returns.view()));
    }
    let privileged_targets = agent.privileged_norm.normalize(batch.privileged.view());

    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..params.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(params.minibatch_size.max(1)) {
            let obs_n = agent.normalized_obs(batch.obs.select(Axis(0), chunk).view());
            let actions = batch.actions.select(Axis(0), chunk);
            let old_lp: Vec<f64> = chunk.iter().map(|&i| batch.log_probs[i]).collect();
            let adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();

            // Policy: the estimator output is an input here, not a path for gradients.
            let policy_in = agent.policy_input(obs_n.view());
            let (s, mut grad) = policy_loss_and_grad(
                &agent.policy,
                &agent.log_std,
                policy_in.view(),
                actions.view(),
                &old_lp,
                &adv,
                params.clip,
                params.entropy_coef,
            );
            finite_or("policy loss", s.loss)?;
            clip_grad_norm(&mut grad, params.max_grad_norm);
            let n = agent.policy.params.len();
            let mut flat = agent.policy.params.clone();
            flat.extend_from_slice(&agent.log_std);
            opts.policy.step(&mut flat, &grad);
            agent.policy.params.copy_from_slice(&flat[..n]);
            for k in 0..ACTION_DIM {
                agent.log_std[k] = flat[n + k].clamp(LOG_STD_MIN, LOG_STD_MAX);
            }

            // Critic heads.
            let priv_rows = batch.privileged.select(Axis(0), chunk);
            let critic_in = agent.critic_input(obs_n.view(), priv_rows.view());
            for h in 0..2 {
                let target = value_targets[h].select(Axis(0), chunk);
                let (loss, mut g) = regression_loss_and_grad(&agent.critics[h], critic_in.view(), target.view());
                finite_or("value loss", loss)?;
                clip_grad_norm(&mut g, params.max_grad_norm);
                opts.critics[h].step(&mut agent.critics[h].params, &g);
                stats.value_loss[h] += loss;
            }

            // Estimator.
            let target = privileged_targets.select(Axis(0), chunk);
            let (loss, mut g) = regression_loss_and_grad(&agent.estimator, obs_n.view(), target.view());
            finite_or("estimator loss", loss)?;
            clip_grad_norm(&mut g, params.max_grad_norm);
            opts.estimator.step(&mut agent.estimator.params, &g);

            stats.policy_loss += s.loss;
            stats.estimator_loss += loss;
            stats.approx_kl += s.approx_kl;
            stats.clip_fraction += s.clip_fraction;
            count += 1;
        }
    }
    let c = count as f64;
    stats.policy_loss /= c;
    stats.value_loss[0] /= c;
    stats.value_loss[1] /= c;
    stats.estimator_loss /= c;
    stats.approx_kl /= c;
    stats.clip_fraction /= c;
    stats.entropy = gaussian_entropy(&agent.log_std);
    agent.check_finite()?;

    agent.obs_norm.update(batch.obs.view());
    agent.privileged_norm.update(batch.privileged.view());
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::agent::NetworkSizes;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..scale))
    }

    #[test]
    fn surrogate_at_unit_ratio_is_mean_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let means = random_matrix(&mut rng, 16, 3, 1.0);
        let actions = random_matrix(&mut rng, 16, 3, 1.0);
        let log_std = [-0.3, 0.1, -1.0];
        let lp: Vec<f64> = (0..16)
            .map(|i| gaussian_log_prob(means.row(i).as_slice().unwrap(), &log_std, actions.row(i).as_slice().unwrap()))
            .collect();
        let adv: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = surrogate(means.view(), &log_std, actions.view(), &lp, &adv, 0.2, 0.0);
        let mean_adv = adv.iter().sum::<f64>() / 16.0;
        assert!((s.surrogate - mean_adv).abs() < 1e-12);
        assert_eq!(s.clip_fraction, 0.0);

        let zero = vec![0.0; 16];
        let s = surrogate(means.view(), &log_std, actions.view(), &lp, &zero, 0.2, 0.01);
        assert!(s.d_mean.iter().all(|d| *d == 0.0));
        assert!(s.d_log_std.iter().all(|d| (*d + 0.01).abs() < 1e-15));
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut policy = Mlp::orthogonal(&[5, 8, 6, 3], 0.5, &mut rng);
        for p in policy.params.iter_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        let log_std = [-0.2, 0.3, -0.6];
        let input = random_matrix(&mut rng, 12, 5, 1.0);
        let actions = random_matrix(&mut rng, 12, 3, 1.0);
        // Old log-probs near the current ones keep most samples unclipped,
        // a few far ones exercise the clipped branch.
        let means = policy.forward(input.view());
        let old: Vec<f64> = (0..12)
            .map(|i| {
                let lp = gaussian_log_prob(means.row(i).as_slice().unwrap(), &log_std, actions.row(i).as_slice().unwrap());
                lp + if i % 4 == 0 { 0.7 } else { rng.random_range(-0.05..0.05) }
            })
            .collect();
        let adv: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |p: &Mlp, ls: &[f64; 3]| {
            policy_loss_and_grad(p, ls, input.view(), actions.view(), &old, &adv, 0.2, 0.005).0.loss
        };
        let (_, grad) = policy_loss_and_grad(&policy, &log_std, input.view(), actions.view(), &old, &adv, 0.2, 0.005);
        let h = 1e-6;
        let n = policy.params.len();
        for i in 0..n {
            let orig = policy.params[i];
            policy.params[i] = orig + h;
            let up = loss(&policy, &log_std);
            policy.params[i] = orig - h;
            let down = loss(&policy, &log_std);
            policy.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(1e-4), "param {i}: {fd} vs {}", grad[i]);
        }
        for k in 0..3 {
            let mut up = log_std;
            up[k] += h;
            let mut down = log_std;
            down[k] -= h;
            let fd = (loss(&policy, &up) - loss(&policy, &down)) / (2.0 * h);
            assert!((fd - grad[n + k]).abs() <= 1e-4 * fd.abs().max(1e-4));
        }
    }

    #[test]
    fn regression_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::orthogonal(&[4, 7, 2], 1.0, &mut rng);
        let x = random_matrix(&mut rng, 9, 4, 1.0);
        let y = random_matrix(&mut rng, 9, 2, 1.0);
        let (_, grad) = regression_loss_and_grad(&net, x.view(), y.view());
        let h = 1e-6;
        for i in 0..net.params.len() {
            let orig = net.params[i];
            net.params[i] = orig + h;
            let up = regression_loss_and_grad(&net, x.view(), y.view()).0;
            net.params[i] = orig - h;
            let down = regression_loss_and_grad(&net, x.view(), y.view()).0;
            net.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(1e-4));
        }
    }

    #[test]
    fn zero_barrier_head_reduces_to_single_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let motion: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let barrier = vec![0.0; 64];
        let dual = combined_advantages(&[&motion, &barrier]);
        let single = combined_advantages(&[&motion]);
        let policy = Mlp::orthogonal(&[5, 8, 3], 0.5, &mut rng);
        let input = random_matrix(&mut rng, 64, 5, 1.0);
        let actions = random_matrix(&mut rng, 64, 3, 1.0);
        let means = policy.forward(input.view());
        let ls = [-0.5; 3];
        let old: Vec<f64> = (0..64)
            .map(|i| gaussian_log_prob(means.row(i).as_slice().unwrap(), &ls, actions.row(i).as_slice().unwrap()))
            .collect();
        let g_dual = policy_loss_and_grad(&policy, &ls, input.view(), actions.view(), &old, &dual, 0.2, 0.0).1;
        let g_single = policy_loss_and_grad(&policy, &ls, input.view(), actions.view(), &old, &single, 0.2, 0.0).1;
        let diff: f64 = g_dual.iter().zip(&g_single).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = g_single.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff <= 1e-8 * norm);
    }

    #[test]
    fn toy_problem_moves_mean_toward_optimum() {
        // One-dimensional mean parameter θ, actions scored by −(a − 2)².
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = 0.0;
        let log_std = [0.0; 3];
        let b = 256;
        let means = Array2::from_elem((b, 3), theta);
        let actions = Array2::from_shape_fn((b, 3), |_| theta + rng.random_range(-1.5..1.5));
        let old: Vec<f64> = (0..b)
            .map(|i| gaussian_log_prob(means.row(i).as_slice().unwrap(), &log_std, actions.row(i).as_slice().unwrap()))
            .collect();
        let scores: Vec<f64> = (0..b).map(|i| -(actions[(i, 0)] - 2.0f64).powi(2)).collect();
        let adv = normalize(&scores);
        let s = surrogate(means.view(), &log_std, actions.view(), &old, &adv, 0.2, 0.0);
        let d_theta: f64 = s.d_mean.column(0).sum();
        assert!(d_theta < 0.0, "descent direction must increase θ toward 2");
    }

    #[test]
    fn update_runs_and_estimator_learns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sizes = NetworkSizes {
            policy_hidden: vec![16],
            critic_hidden: vec![16],
            estimator_hidden: vec![16],
        };
        let mut agent = Agent::new(&sizes, -0.5, &mut rng);
        let n = 200;
        let obs = random_matrix(&mut rng, n, 38, 1.0);
        let privileged = Array2::from_shape_fn((n, 3), |(i, k)| obs[(i, k)] * 2.0 - obs[(i, k + 3)]);
        let mut opt = Adam::new(agent.estimator.params.len(), 1e-3);
        let mut losses = Vec::new();
        for _ in 0..10 {
            let x = agent.normalized_obs(obs.view());
            losses.push(regression_loss_and_grad(&agent.estimator, x.view(), privileged.view()).0);
            estimator_epoch(&mut agent, &mut opt, obs.view(), privileged.view(), 50, 1.0, &mut rng).unwrap();
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");

        let actions = random_matrix(&mut rng, n, 3, 0.5);
        let mut batch = RolloutBatch {
            obs: obs.clone(),
            privileged,
            actions: actions.clone(),
            log_probs: vec![-3.0; n],
            rewards: [vec![1.0; n], vec![0.5; n]],
            values: [vec![0.0; n], vec![0.0; n]],
            advantages: [vec![], vec![]],
            returns: [vec![], vec![]],
            dones: (0..n).map(|i| i % 50 == 49).collect(),
        };
        let am = agent.act_mean(obs.view());
        for i in 0..n {
            batch.log_probs[i] = gaussian_log_prob(am.row(i).as_slice().unwrap(), &agent.log_std, actions.row(i).as_slice().unwrap());
        }
        batch.compute_advantages(&[vec![0.0; 4], vec![0.0; 4]], 4, 0.99, 0.95);
        let mut opts = Optimizers::new(&agent, 3e-4);
        let params = PpoParams {
            clip: 0.2,
            epochs: 2,
            minibatch_size: 64,
            entropy_coef: 0.005,
            max_grad_norm: 1.0,
        };
        let stats = ppo_update(&mut agent, &mut opts, &batch, &params, &mut rng).unwrap();
        assert!(stats.policy_loss.is_finite() && stats.value_loss[0] > 0.0);
        assert!(agent.obs_norm.count == n as f64);
    }
}
