use std::sync::Arc;

use flipper_core::env::{NoiseScales, Randomization, Termination, ACTOR_OBS_DIM, PRIVILEGED_DIM};
use flipper_core::model::step;
use flipper_core::{EnvConfig, HopperEnv, HopperModel};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nominal() -> EnvConfig {
    EnvConfig {
        randomization: Randomization::disabled(),
        noise: NoiseScales::zero(),
        reset_perturbation: 0.0,
        ..EnvConfig::default()
    }
}

fn actions(seed: u64, n: usize, scale: f64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vector3::from_fn(|_, _| rng.random_range(-scale..scale)))
        .collect()
}

/// Rewards, termination and the state after every step.
fn trace(config: EnvConfig, seed: u64, acts: &[Vector3<f64>]) -> Vec<(Vec<f64>, Termination, Vec<f64>)> {
    let mut env = HopperEnv::new(Arc::new(HopperModel::default()), config, seed).unwrap();
    env.reset().unwrap();
    let mut out = Vec::new();
    for a in acts {
        let o = env.step(a).unwrap();
        let s = env.state();
        let mut state: Vec<f64> = s.base_position.iter().copied().collect();
        state.extend(s.base_orientation.coords.iter());
        state.extend(s.velocity().iter());
        state.extend(s.q.iter());
        out.push((o.reward.term_values().to_vec(), o.info.termination, state));
        if o.done {
            break;
        }
    }
    out
}

#[test]
fn identical_seeds_give_bit_identical_trajectories() {
    let acts = actions(4, 100, 0.3);
    let a = trace(EnvConfig::default(), 21, &acts);
    let b = trace(EnvConfig::default(), 21, &acts);
    assert_eq!(a, b);
    let c = trace(EnvConfig::default(), 22, &acts);
    assert_ne!(a, c);
}

#[test]
fn nominal_episode_runs_exactly_one_hundred_steps() {
    let mut env = HopperEnv::new(Arc::new(HopperModel::default()), nominal(), 0).unwrap();
    env.reset().unwrap();
    let mut steps = 0;
    loop {
        let o = env.step(&Vector3::zeros()).unwrap();
        steps += 1;
        if o.done {
            assert_eq!(o.info.termination, Termination::TimeLimit);
            break;
        }
    }
    assert_eq!(steps, 100);
    assert!(env.step(&Vector3::zeros()).is_err());
}

#[test]
fn envelope_flag_is_inert_when_torques_stay_inside() {
    let run = |use_mor: bool| {
        let mut env = HopperEnv::new(Arc::new(HopperModel::default()), EnvConfig { use_mor, ..nominal() }, 5).unwrap();
        env.reset().unwrap();
        let mut rows = Vec::new();
        for _ in 0..100 {
            let o = env.step(&Vector3::zeros()).unwrap();
            // Limiting never engaged: the applied torque is the command.
            assert!((o.info.tau_cmd - o.info.tau_applied).amax() < 1e-12);
            rows.push((o.reward.term_values(), o.info.q, o.info.qdot));
            if o.done {
                break;
            }
        }
        rows
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn contact_impulses_balance_the_momentum_change() {
    let model = HopperModel::default();
    let mut s = model.standing_state(&model.reference_pose);
    s.base_position.z -= 2e-3;
    s.base_twist[3] = 0.4;
    s.base_twist[5] = -0.3;
    let dt = 0.002;
    let (next, records) = step(&model, &s, &Vector3::zeros(), dt).unwrap();
    let momentum = |st: &flipper_core::GeneralizedState| flipper_core::centroidal::centroidal_state(&model, st).p_com;
    let on_robot: Vector3<f64> = records.iter().map(|r| r.impulse()).sum();
    assert!(on_robot.z > 0.0);
    // The ground receives the opposite impulse, so the robot's momentum
    // changes by gravity plus exactly the contact impulse it received. The
    // step applies impulses in the start configuration, so both momenta are
    // measured there.
    let mut after = s.clone();
    after.set_velocity(&next.velocity());
    let expected = momentum(&s) + model.gravity * model.total_mass() * dt + on_robot;
    let err = (momentum(&after) - expected).norm();
    assert!(err <= 1e-9 * expected.norm().max(1.0), "momentum imbalance {err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn observation_width_is_fixed(seed in 0u64..1000, mor: bool, load: bool, mode in 0usize..3) {
        let mode = ["cav", "cam", "bav"][mode].parse().unwrap();
        let config = EnvConfig { use_mor: mor, use_load_reg: load, aerial_reward_mode: mode, ..EnvConfig::default() };
        let mut env = HopperEnv::new(Arc::new(HopperModel::default()), config, seed).unwrap();
        let (obs, privileged) = env.reset().unwrap();
        prop_assert_eq!(obs.to_array().len(), ACTOR_OBS_DIM);
        prop_assert_eq!(privileged.to_array().len(), PRIVILEGED_DIM);
        prop_assert_eq!(ACTOR_OBS_DIM, 38);
        for a in actions(seed, 10, 0.5) {
            let o = env.step(&a).unwrap();
            prop_assert_eq!(o.observation.to_array().len(), ACTOR_OBS_DIM);
            if o.done { break; }
        }
    }

    #[test]
    fn disabled_load_regularization_is_inert(seed in 0u64..1000) {
        let config = EnvConfig { use_load_reg: false, ..EnvConfig::default() };
        let mut env = HopperEnv::new(Arc::new(HopperModel::default()), config, seed).unwrap();
        env.reset().unwrap();
        for a in actions(seed, 100, 1.0) {
            let o = env.step(&a).unwrap();
            prop_assert_eq!(o.reward.barrier.b_load, 0.0);
            prop_assert_ne!(o.info.termination, Termination::Overload);
            if o.done { break; }
        }
    }
}
