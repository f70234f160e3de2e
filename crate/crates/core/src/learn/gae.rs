/// Generalized advantage estimation for one reward stream laid out as
/// `steps × envs` (row-major by step).
///
/// `dones[t][e]` marks that the transition at step `t` ended its episode, so
/// neither the bootstrap value nor later advantages flow back across it.
/// `last_values` bootstraps the value after the final step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    num_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..=1.0).contains(&gamma) && (0.0..=1.0).contains(&lambda));
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    assert_eq!(last_values.len(), num_envs);
    assert_eq!(n % num_envs, 0);
    let steps = n / num_envs;
    let mut adv = vec![0.0; n];
    for e in 0..num_envs {
        let mut running = 0.0;
        for t in (0..steps).rev() {
            let i = t * num_envs + e;
            let next_value = if t + 1 == steps {
                last_values[e]
            } else {
                values[i + num_envs]
            };
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * live * next_value - values[i];
            running = delta + gamma * lambda * live * running;
            adv[i] = running;
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Zero-mean, unit-variance copy; an all-constant input maps to zeros.
pub fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 1e-24 {
        return vec![0.0; x.len()];
    }
    let std = var.sqrt();
    x.iter().map(|v| (v - mean) / std).collect()
}
