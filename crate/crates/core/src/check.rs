//! Oracle suites runnable outside the test harness: dynamics conservation,
//! centroidal identities, the counter-rotation mechanism, barrier continuity,
//! envelope containment, transmission load, GAE and gradient checks.

use std::time::Instant;

use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::actuator::MorEnvelope;
use crate::centroidal::{centroidal_state, cmm, counter_rotation_state};
use crate::learn::agent::{gaussian_log_prob, NetworkSizes, ACTION_DIM};
use crate::learn::gae::gae;
use crate::learn::mlp::Mlp;
use crate::learn::ppo::{combined_advantages, policy_loss_and_grad, regression_loss_and_grad};
use crate::model::sampling::random_state;
use crate::model::{contact_resolve, mass_matrix, step, total_energy, Kinematics};
use crate::rewards::{
    aerial_reward_variant, relaxed_log, relaxed_log_barrier, AerialInputs, AerialRewardMode,
    PhaseSchedule, RewardWeights,
};
use crate::transmission::{accumulate_and_finalize, instantaneous_load, overload_termination};
use crate::HopperModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckOptions {
    /// Negative control: swap in a barrier whose quadratic branch has the
    /// wrong curvature, which the continuity suite must reject.
    pub corrupt_barrier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type SuiteFn = fn(&CheckOptions) -> std::result::Result<String, String>;

pub const SUITES: [(&str, SuiteFn); 9] = [
    ("dynamics", dynamics),
    ("centroidal", centroidal),
    ("counter-rotation", counter_rotation),
    ("barrier", barrier),
    ("mor", mor),
    ("transmission", transmission),
    ("gae", gae_suite),
    ("gradients", gradients),
    ("dual-head", dual_head),
];

pub fn run_suite(name: &str, opts: &CheckOptions) -> Option<SuiteOutcome> {
    let (name, f) = SUITES.iter().find(|(n, _)| *n == name)?;
    let start = Instant::now();
    let result = f(opts);
    let seconds = start.elapsed().as_secs_f64();
    Some(match result {
        Ok(detail) => SuiteOutcome { name, passed: true, detail, seconds },
        Err(detail) => SuiteOutcome { name, passed: false, detail, seconds },
    })
}

pub fn run_all(opts: &CheckOptions) -> Vec<SuiteOutcome> {
    SUITES
        .iter()
        .map(|(name, _)| run_suite(name, opts).expect("suite is registered"))
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn flight_state(model: &HopperModel, rng: &mut ChaCha8Rng) -> crate::GeneralizedState {
    let mut s = random_state(model, rng);
    s.base_position.z = 50.0;
    s
}

fn dynamics(_: &CheckOptions) -> std::result::Result<String, String> {
    let model = HopperModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_asym: f64 = 0.0;
    for _ in 0..1000 {
        let s = random_state(&model, &mut rng);
        let m = mass_matrix(&model, &s);
        worst_asym = worst_asym.max((m - m.transpose()).abs().max());
        let eig = m.symmetric_eigenvalues().min();
        ensure(eig > 0.0, || format!("mass matrix not positive definite (min eigenvalue {eig:e})"))?;
    }
    ensure(worst_asym <= 1e-12, || format!("mass matrix asymmetry {worst_asym:e}"))?;

    let zero = Vector3::zeros();
    let mut s = flight_state(&model, &mut rng);
    let e0 = total_energy(&model, &s);
    let mut worst_l: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for _ in 0..250 {
        let before = centroidal_state(&model, &s);
        let (next, _) = step(&model, &s, &zero, 0.002).map_err(|e| e.to_string())?;
        let after = centroidal_state(&model, &next);
        worst_l = worst_l.max((after.l_com - before.l_com).norm());
        let expected = before.p_com + model.gravity * model.total_mass() * 0.002;
        worst_p = worst_p.max((after.p_com - expected).norm() / expected.norm().max(1.0));
        ensure((next.base_orientation.norm() - 1.0).abs() < 1e-9, || "quaternion lost unit norm".into())?;
        s = next;
    }
    let drift = (total_energy(&model, &s) - e0).abs();
    ensure(drift < 1e-3, || format!("ballistic energy drift {drift:e} J over 0.5 s"))?;
    ensure(worst_l < 1e-8, || format!("L_com drift {worst_l:e} N·m·s per step"))?;
    ensure(worst_p < 1e-10, || format!("linear momentum error {worst_p:e} relative"))?;
    Ok(format!(
        "energy drift {drift:.2e} J, L drift {worst_l:.2e}/step, p error {worst_p:.2e}"
    ))
}

fn centroidal(_: &CheckOptions) -> std::result::Result<String, String> {
    let model = HopperModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s = random_state(&model, &mut rng);
        let h = cmm(&model, &s) * s.velocity();
        let c = centroidal_state(&model, &s);
        let expected = nalgebra::Vector6::new(c.p_com.x, c.p_com.y, c.p_com.z, c.l_com.x, c.l_com.y, c.l_com.z);
        worst = worst.max((h - expected).norm() / expected.norm().max(1e-12));
    }
    ensure(worst <= 1e-9, || format!("A(q) v differs from link summation by {worst:e} relative"))?;

    // Joints locked, body spinning about its COM: w_com is the body rate.
    let mut s = random_state(&model, &mut rng);
    s.qdot = Vector3::zeros();
    let com = crate::centroidal::center_of_mass(&model, &s);
    let omega = Vector3::new(0.4, -1.5, 0.9);
    let v = omega.cross(&(s.base_position - com));
    s.base_twist = nalgebra::Vector6::new(omega.x, omega.y, omega.z, v.x, v.y, v.z);
    let err = (centroidal_state(&model, &s).w_com - omega).norm();
    ensure(err <= 1e-12 * omega.norm(), || format!("rigid-body reduction error {err:e}"))?;
    Ok(format!("CMM identity worst {worst:.2e}, rigid reduction {err:.1e}"))
}

fn counter_rotation(_: &CheckOptions) -> std::result::Result<String, String> {
    let model = HopperModel::default();
    let s = counter_rotation_state(&model, &model.reference_pose, &Vector3::y(), 5.0)
        .map_err(|e| e.to_string())?;
    let c = centroidal_state(&model, &s);
    let weights = RewardWeights::default();
    let sched = PhaseSchedule::default();
    let aerial_phase = 0.5 * (sched.phi_jump + sched.phi_land);
    let inputs = AerialInputs {
        w_com: c.w_com,
        l_com: c.l_com,
        base_omega: s.base_angular_velocity(),
    };
    let bav = aerial_reward_variant(AerialRewardMode::Bav, aerial_phase, &inputs, &weights, &sched)
        .map_err(|e| e.to_string())?;
    let cav = aerial_reward_variant(AerialRewardMode::Cav, aerial_phase, &inputs, &weights, &sched)
        .map_err(|e| e.to_string())?;
    let l = c.l_com.norm();
    ensure(l < 1e-9, || format!("‖L_com‖ = {l:e}"))?;
    ensure(bav > 0.0, || format!("BAV reward {bav} not positive"))?;
    ensure(cav.abs() < 1e-8, || format!("CAV reward {cav} not zero"))?;
    Ok(format!("BAV reward {bav:.3}, CAV reward {cav:.1e}, ‖L‖ {l:.1e}"))
}

/// The quadratic branch with twice the correct curvature: value-continuous
/// at `z = delta` but with the wrong slope.
fn corrupted_relaxed_log(z: f64, delta: f64) -> f64 {
    if z >= delta {
        z.ln()
    } else {
        let r = (z - 2.0 * delta) / delta;
        delta.ln() - (r * r - 1.0)
    }
}

fn barrier(opts: &CheckOptions) -> std::result::Result<String, String> {
    let f: fn(f64, f64) -> f64 = if opts.corrupt_barrier {
        corrupted_relaxed_log
    } else {
        relaxed_log
    };
    let mut worst_value: f64 = 0.0;
    let mut worst_slope: f64 = 0.0;
    for delta in [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0] {
        let jump = (f(delta * (1.0 - 1e-12), delta) - f(delta, delta)).abs();
        worst_value = worst_value.max(jump);
        let h = 1e-5 * delta;
        let left = (3.0 * f(delta, delta) - 4.0 * f(delta - h, delta) + f(delta - 2.0 * h, delta)) / (2.0 * h);
        let right = (-3.0 * f(delta, delta) + 4.0 * f(delta + h, delta) - f(delta + 2.0 * h, delta)) / (2.0 * h);
        worst_slope = worst_slope.max((left - right).abs() / right.abs().max(1.0));
    }
    ensure(worst_value <= 1e-6, || format!("barrier value jumps by {worst_value:e} at z = delta"))?;
    ensure(worst_slope <= 1e-6, || format!("barrier slope jumps by {worst_slope:e} at z = delta"))?;
    let golden_two_sided = relaxed_log_barrier(0.0, -30.0, 30.0, 1.0);
    let golden_branch = f(0.0, 1.0);
    ensure((golden_two_sided - 2.0 * 30f64.ln()).abs() <= 1e-12, || {
        format!("b(0; -30, 30, 1) = {golden_two_sided}")
    })?;
    ensure((golden_branch + 1.5).abs() <= 1e-12, || format!("f(0) with delta 1 = {golden_branch}"))?;
    Ok(format!("value jump {worst_value:.1e}, slope jump {worst_slope:.1e}"))
}

fn mor(_: &CheckOptions) -> std::result::Result<String, String> {
    let envelopes = crate::model::ActuatorParams::default().envelopes;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples = 1_000_000;
    for k in 0..samples {
        let env: &MorEnvelope = &envelopes[k % 3];
        let tau = rng.random_range(-3.0..3.0) * env.tau_cur;
        let omega = rng.random_range(-1.5..1.5) * env.omega_max;
        let c = env.clip(tau, omega);
        ensure(env.lower(omega) <= c && c <= env.upper(omega), || {
            format!("clip({tau}, {omega}) = {c} escapes the envelope")
        })?;
        ensure(env.clip(c, omega) == c, || format!("clip not idempotent at ({tau}, {omega})"))?;
        let mirrored = env.clip(-tau, -omega);
        ensure((mirrored + c).abs() <= 1e-12, || {
            format!("envelope not odd-symmetric at ({tau}, {omega}): {c} vs {mirrored}")
        })?;
    }
    Ok(format!("{samples} samples contained, idempotent and symmetric"))
}

fn transmission(_: &CheckOptions) -> std::result::Result<String, String> {
    let model = HopperModel::default();
    let mut s = model.standing_state(&model.reference_pose);
    s.base_position.z -= 2e-3;
    s.base_twist[3] = 0.3;
    s.qdot = Vector3::new(1.0, -0.5, 0.2);
    let dt = 0.002;
    let recs = contact_resolve(&model, &s, model.contact.friction_mu, dt);
    let tau = instantaneous_load(&recs, dt);
    let kin = Kinematics::new(&model, &s);
    let mut oracle = Vector3::zeros();
    for r in recs.iter().filter(|r| r.active) {
        let force = r.impulse() / dt;
        for j in 0..3 {
            oracle[j] += kin.joint_axis(j).dot(&(r.point - kin.joint_position(j)).cross(&force));
        }
    }
    let rel = (tau - oracle).norm() / oracle.norm();
    ensure(rel <= 1e-9, || format!("virtual-work mismatch {rel:e} relative"))?;

    let avg = accumulate_and_finalize(&[Vector3::new(10.0, 0.0, 0.0); 10], 10).map_err(|e| e.to_string())?;
    ensure(avg == Vector3::new(10.0, 0.0, 0.0), || format!("average of constant load is {avg:?}"))?;
    let alternating: Vec<_> = (0..10)
        .map(|i| Vector3::new(0.0, if i % 2 == 0 { 10.0 } else { -10.0 }, 0.0))
        .collect();
    let avg = accumulate_and_finalize(&alternating, 10).map_err(|e| e.to_string())?;
    ensure(avg == Vector3::new(0.0, 10.0, 0.0), || format!("average of alternating load is {avg:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let over = Vector3::new(46.0, 0.0, 0.0);
    let hits = (0..10_000).filter(|_| overload_termination(&over, 45.0, &mut rng)).count();
    let rate = hits as f64 / 10_000.0;
    ensure((rate - 0.5).abs() <= 0.02, || format!("overload termination rate {rate}"))?;
    let at = Vector3::new(45.0, 45.0, 45.0);
    ensure(!(0..1000).any(|_| overload_termination(&at, 45.0, &mut rng)), || {
        "load equal to the threshold terminated".into()
    })?;
    Ok(format!("virtual work {rel:.1e}, termination rate {rate:.4}"))
}

/// Direct summation of discounted TD errors up to the episode boundary.
fn brute_force_gae(rewards: &[f64], values: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                let next = if dones[k] {
                    0.0
                } else if k + 1 == n {
                    last
                } else {
                    values[k + 1]
                };
                total += weight * (rewards[k] + gamma * next - values[k]);
                if dones[k] {
                    break;
                }
                weight *= gamma * lambda;
            }
            total
        })
        .collect()
}

fn gae_suite(_: &CheckOptions) -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (steps, envs) = (20, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let n = steps * envs;
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let last: Vec<f64> = (0..envs).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (adv, _) = gae(&rewards, &values, &dones, &last, envs, gamma, lambda);
        for e in 0..envs {
            let pick = |x: &[f64]| (0..steps).map(|t| x[t * envs + e]).collect::<Vec<_>>();
            let d: Vec<bool> = (0..steps).map(|t| dones[t * envs + e]).collect();
            let expected = brute_force_gae(&pick(&rewards), &pick(&values), &d, last[e], gamma, lambda);
            for (t, want) in expected.iter().enumerate() {
                worst = worst.max((adv[t * envs + e] - want).abs());
            }
        }
    }
    ensure(worst <= 1e-10, || format!("GAE differs from brute force by {worst:e}"))?;
    Ok(format!("worst deviation {worst:.1e}"))
}

fn random_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    d.into_iter().map(|x| x / norm).collect()
}

/// Compares analytic directional derivatives with central differences
/// along 64 random unit directions; returns the worst relative error.
fn probe_gradient(
    params: &[f64],
    grad: &[f64],
    loss: impl Fn(&[f64]) -> f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..64 {
        let d = random_direction(params.len(), rng);
        let plus: Vec<f64> = params.iter().zip(&d).map(|(p, di)| p + h * di).collect();
        let minus: Vec<f64> = params.iter().zip(&d).map(|(p, di)| p - h * di).collect();
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let analytic: f64 = grad.iter().zip(&d).map(|(g, di)| g * di).sum();
        worst = worst.max((fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6));
    }
    worst
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn perturbed(mut net: Mlp, rng: &mut ChaCha8Rng) -> Mlp {
    for p in net.params.iter_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    net
}

fn gradients(_: &CheckOptions) -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sizes = NetworkSizes::default();
    let batch = 16;
    let mut report = Vec::new();

    let policy = perturbed(Mlp::orthogonal(&sizes.policy(), 0.5, &mut rng), &mut rng);
    let log_std = [-0.7, -0.4, -1.0];
    let input = random_matrix(&mut rng, batch, policy.input_dim());
    let means = policy.forward(input.view());
    let actions = Array2::from_shape_fn((batch, ACTION_DIM), |(i, k)| means[(i, k)] + rng.random_range(-0.5..0.5));
    // Old log-probabilities near the current ones keep every ratio well
    // inside the clip range, where the surrogate is smooth.
    let old: Vec<f64> = (0..batch)
        .map(|i| {
            let m: Vec<f64> = means.row(i).to_vec();
            let a: Vec<f64> = actions.row(i).to_vec();
            gaussian_log_prob(&m, &log_std, &a) + rng.random_range(-0.05..0.05)
        })
        .collect();
    let adv: Vec<f64> = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, grad) = policy_loss_and_grad(&policy, &log_std, input.view(), actions.view(), &old, &adv, 0.2, 0.005);
    let mut flat = policy.params.clone();
    flat.extend_from_slice(&log_std);
    let n = policy.params.len();
    let worst = probe_gradient(
        &flat,
        &grad,
        |theta| {
            let mut p = policy.clone();
            p.params.copy_from_slice(&theta[..n]);
            let ls = [theta[n], theta[n + 1], theta[n + 2]];
            policy_loss_and_grad(&p, &ls, input.view(), actions.view(), &old, &adv, 0.2, 0.005).0.loss
        },
        &mut rng,
    );
    ensure(worst <= 1e-4, || format!("policy gradient error {worst:e}"))?;
    report.push(format!("policy {worst:.1e}"));

    for (name, layers) in [("critic", sizes.critic()), ("estimator", sizes.estimator())] {
        let net = perturbed(Mlp::orthogonal(&layers, 1.0, &mut rng), &mut rng);
        let x = random_matrix(&mut rng, batch, net.input_dim());
        let y = random_matrix(&mut rng, batch, net.output_dim());
        let (_, grad) = regression_loss_and_grad(&net, x.view(), y.view());
        let worst = probe_gradient(
            &net.params,
            &grad,
            |theta| {
                let mut p = net.clone();
                p.params.copy_from_slice(theta);
                regression_loss_and_grad(&p, x.view(), y.view()).0
            },
            &mut rng,
        );
        ensure(worst <= 1e-4, || format!("{name} gradient error {worst:e}"))?;
        report.push(format!("{name} {worst:.1e}"));
    }
    Ok(report.join(", "))
}

fn dual_head(_: &CheckOptions) -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (steps, envs) = (32, 4);
    let n = steps * envs;
    let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.05)).collect();
    let last: Vec<f64> = (0..envs).map(|_| rng.random_range(-3.0..3.0)).collect();
    let (motion, _) = gae(&rewards, &values, &dones, &last, envs, 0.99, 0.95);
    // Barrier rewards and values identically zero.
    let zeros = vec![0.0; n];
    let (barrier, _) = gae(&zeros, &zeros, &dones, &vec![0.0; envs], envs, 0.99, 0.95);
    let dual = combined_advantages(&[&motion, &barrier]);
    let single = combined_advantages(&[&motion]);

    let policy = Mlp::orthogonal(&[6, 16, 3], 0.5, &mut rng);
    let input = random_matrix(&mut rng, n, 6);
    let actions = random_matrix(&mut rng, n, ACTION_DIM);
    let means = policy.forward(input.view());
    let log_std = [-0.5; ACTION_DIM];
    let old: Vec<f64> = (0..n)
        .map(|i| gaussian_log_prob(&means.row(i).to_vec(), &log_std, &actions.row(i).to_vec()))
        .collect();
    let g_dual = policy_loss_and_grad(&policy, &log_std, input.view(), actions.view(), &old, &dual, 0.2, 0.0).1;
    let g_single = policy_loss_and_grad(&policy, &log_std, input.view(), actions.view(), &old, &single, 0.2, 0.0).1;
    let diff = g_dual.iter().zip(&g_single).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = g_single.iter().map(|a| a * a).sum::<f64>().sqrt();
    ensure(diff <= 1e-8 * norm, || format!("dual-head gradient differs by {:e} relative", diff / norm))?;
    Ok(format!("relative difference {:.1e}", diff / norm))
}
