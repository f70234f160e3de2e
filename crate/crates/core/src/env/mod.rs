//! Episode management: randomized reset, the actuator pipeline between
//! control steps, observations, reward assembly and termination.

mod config;
mod observation;
mod randomize;

use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{EnvConfig, NoiseScales, Randomization, Range};
pub use observation::{
    ActorObservation, History, PrivilegedObservation, ACTOR_OBS_DIM, HISTORY_LAGS, PRIVILEGED_DIM,
};
pub use randomize::{apply as apply_randomization, sample_params, uniform, EpisodeParams};

use crate::actuator::{joint_friction, limit_torques, pd_torque, TorqueLimit};
use crate::centroidal::centroidal_state;
use crate::error::{Error, Result};
use crate::model::{step_actuated, GeneralizedState, HopperModel, Kinematics, FOOT_BODY};
use crate::rewards::{
    aerial_reward_variant, barrier_terms, compose, motion_terms, AerialInputs, MotionInputs,
    Phase, RewardBreakdown,
};
use crate::transmission::{instantaneous_load, overload_termination, LoadAccumulator};

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    None,
    TimeLimit,
    Overload,
    Fall,
}

/// Diagnostics of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Time at the end of the step, s.
    pub t: f64,
    /// Phase used for the reward schedule (start of the step), s.
    pub phase: f64,
    pub l_com: Vector3<f64>,
    pub w_com: Vector3<f64>,
    /// Pitch-axis entry of the composite inertia about the COM.
    pub i_com_pitch: f64,
    /// Continuous (unwrapped) base pitch, rad.
    pub base_pitch: f64,
    /// Rate of change of `base_pitch` averaged over the substeps of the
    /// control interval, rad/s.
    pub base_pitch_rate: f64,
    pub com_height: f64,
    pub base_height: f64,
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
    /// Mean commanded torque over the substeps, before limiting.
    pub tau_cmd: Vector3<f64>,
    /// Mean torque actually applied.
    pub tau_applied: Vector3<f64>,
    pub tau_load: Vector3<f64>,
    /// Corner contact flags at the end of the step.
    pub contact: [bool; 4],
    /// Whether any corner touched the ground during the step.
    pub touched: bool,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub observation: ActorObservation,
    pub privileged: PrivilegedObservation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    a - two_pi * ((a + std::f64::consts::PI) / two_pi).floor()
}

/// Pitch of the base about world y, from its x axis projected on the xz plane.
fn raw_pitch(state: &GeneralizedState) -> f64 {
    let r = state.base_orientation.to_rotation_matrix();
    let x_axis = r.matrix().column(0);
    (-x_axis.z).atan2(x_axis.x)
}

/// Time derivative of [`raw_pitch`]. Equals the world pitch rate only while
/// the base stays in the sagittal plane.
fn pitch_rate(state: &GeneralizedState) -> f64 {
    let x = state.base_orientation * Vector3::x();
    let xdot = state.base_angular_velocity().cross(&x);
    (x.z * xdot.x - x.x * xdot.z) / (x.x * x.x + x.z * x.z).max(1e-12)
}

pub struct HopperEnv {
    config: EnvConfig,
    nominal: Arc<HopperModel>,
    model: HopperModel,
    params: Option<EpisodeParams>,
    state: GeneralizedState,
    rng: ChaCha8Rng,
    target: Vector3<f64>,
    /// `a_{t−1}`, `a_{t−2}`.
    actions: [Vector3<f64>; 2],
    history: History,
    contact_prev: [bool; 4],
    step_index: usize,
    pitch: f64,
    pitch_raw: f64,
    active: bool,
    load: LoadAccumulator,
}

impl HopperEnv {
    pub fn new(nominal: Arc<HopperModel>, config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let state = nominal.standing_state(&nominal.reference_pose);
        let load = LoadAccumulator::new(config.substeps());
        Ok(HopperEnv {
            model: (*nominal).clone(),
            target: nominal.reference_pose,
            nominal,
            params: None,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            actions: [Vector3::zeros(); 2],
            history: History::default(),
            contact_prev: [true; 4],
            step_index: 0,
            pitch: 0.0,
            pitch_raw: 0.0,
            active: false,
            load,
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// The randomized model of the current episode.
    pub fn model(&self) -> &HopperModel {
        &self.model
    }

    pub fn episode_params(&self) -> Option<&EpisodeParams> {
        self.params.as_ref()
    }

    pub fn state(&self) -> &GeneralizedState {
        &self.state
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Unwrapped base pitch about the world y axis, rad.
    pub fn base_pitch(&self) -> f64 {
        self.pitch
    }

    pub fn reference_pose(&self) -> Vector3<f64> {
        self.nominal.reference_pose
    }

    /// Samples a new physical model and a perturbed crouch with the foot flat
    /// on the ground at rest.
    pub fn reset(&mut self) -> Result<(ActorObservation, PrivilegedObservation)> {
        let params = sample_params(&self.config.randomization, &mut self.rng);
        self.model = apply_randomization(&self.nominal, &params)?;
        self.params = Some(params);

        let theta0 = self.nominal.reference_pose;
        let (lo, hi) = (self.model.joint_lower(), self.model.joint_upper());
        let w = self.config.reset_perturbation;
        let mut q = theta0;
        let mut found = false;
        for _ in 0..1000 {
            q = Vector3::from_fn(|i, _| theta0[i] + uniform([-w, w], &mut self.rng));
            if (0..3).all(|i| q[i] >= lo[i] && q[i] <= hi[i]) {
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::config(
                "reset_perturbation",
                "reference pose perturbation never lands inside the joint limits",
            ));
        }
        self.state = self.model.standing_state(&q);
        self.target = theta0;
        self.actions = [Vector3::zeros(); 2];
        self.history.clear();
        self.history.push(self.target - self.state.q, self.state.qdot);
        self.contact_prev = [true; 4];
        self.step_index = 0;
        self.pitch_raw = raw_pitch(&self.state);
        self.pitch = self.pitch_raw;
        self.active = true;
        Ok(self.observe())
    }

    fn phase_time(&self) -> f64 {
        self.step_index as f64 * self.config.dt_control
    }

    fn clean_observation(&self) -> (ActorObservation, PrivilegedObservation) {
        let s = &self.state;
        let rt = s.base_orientation.inverse();
        let lagged = HISTORY_LAGS.map(|l| self.history.at_lag(l));
        let angle = std::f64::consts::TAU * self.phase_time() / self.config.schedule.episode_len;
        let actor = ActorObservation {
            gravity: rt * Vector3::new(0.0, 0.0, -1.0),
            angular_velocity: rt * s.base_angular_velocity(),
            q: s.q,
            qdot: s.qdot,
            last_actions: self.actions,
            position_error_history: lagged.map(|(e, _)| e),
            velocity_history: lagged.map(|(_, v)| v),
            phase: [angle.sin(), angle.cos()],
        };
        let privileged = PrivilegedObservation {
            base_velocity: rt * s.base_linear_velocity(),
        };
        (actor, privileged)
    }

    fn observe(&mut self) -> (ActorObservation, PrivilegedObservation) {
        let (actor, privileged) = self.clean_observation();
        (actor.with_noise(&self.config.noise, &mut self.rng), privileged)
    }

    /// Applies `action` (joint offsets from the reference pose) for one control
    /// interval.
    pub fn step(&mut self, action: &Vector3<f64>) -> Result<StepOutput> {
        if !self.active {
            return Err(Error::EpisodeInactive);
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite action {action:?}")));
        }
        let cfg = &self.config;
        let clamp = cfg.action_clamp;
        let action = action.map(|a| a.clamp(-clamp, clamp));
        let phase = self.phase_time();
        self.target = self.nominal.reference_pose + action;

        let limit = if cfg.use_mor {
            TorqueLimit::Envelope
        } else {
            TorqueLimit::StaticBox
        };
        let n = cfg.substeps();
        let qdot_prev = self.state.qdot;
        let mut tau_cmd_sum = Vector3::zeros();
        let mut tau_sum = Vector3::zeros();
        let mut pitch_rate_sum = 0.0;
        let mut impulse = Vector3::zeros();
        let mut touched = false;
        let mut contact = [false; 4];
        let velocity_limits = self.model.velocity_limits();
        for _ in 0..n {
            let model = &self.model;
            let target = self.target;
            let command = |q: &Vector3<f64>, qdot: &Vector3<f64>| {
                joint_friction(
                    &pd_torque(&model.actuators.gains, &target, q, qdot),
                    qdot,
                    &model.actuators.coulomb_friction,
                )
            };
            let law = |q: &Vector3<f64>, qdot: &Vector3<f64>| {
                limit_torques(limit, &model.actuators.envelopes, &velocity_limits, &command(q, qdot), qdot)
            };
            let out = match step_actuated(model, &self.state, law, cfg.dt_sim) {
                Ok(r) => r,
                Err(e) => {
                    self.active = false;
                    log::warn!("episode aborted at step {}: {e}", self.step_index);
                    return Err(e);
                }
            };
            let cmd = command(&out.joint_q, &out.joint_qdot);
            let tau = out.tau;
            let (next, records) = (out.state, out.contacts);
            self.load.record(&instantaneous_load(&records, cfg.dt_sim));
            for (i, r) in records.iter().enumerate() {
                impulse += r.impulse();
                contact[i] = r.active;
                touched |= r.active;
            }
            tau_cmd_sum += cmd;
            tau_sum += tau;
            pitch_rate_sum += pitch_rate(&next);
            self.state = next;
        }
        let tau_load = self.load.finalize()?;
        let inv_n = 1.0 / n as f64;
        let tau_applied = tau_sum * inv_n;
        self.step_index += 1;

        // Rewards.
        let s = &self.state;
        let centroidal = centroidal_state(&self.model, s);
        let kin = Kinematics::new(&self.model, s);
        let sole = kin.foot_point(&self.model.sole_centre());
        let foot_vel = kin.point_jacobian(FOOT_BODY, &sole) * s.velocity();
        let raw_cav = aerial_reward_variant(
            cfg.aerial_reward_mode,
            phase,
            &AerialInputs {
                w_com: centroidal.w_com,
                l_com: centroidal.l_com,
                base_omega: s.base_angular_velocity(),
            },
            &cfg.rewards,
            &cfg.schedule,
        )?;
        let motion = motion_terms(
            &MotionInputs {
                base_velocity: s.base_linear_velocity(),
                joint_pos: s.q,
                joint_vel: s.qdot,
                joint_vel_prev: qdot_prev,
                joint_torque: tau_applied,
                foot_velocity_xy: Vector2::new(foot_vel.x, foot_vel.y),
                actions: [action, self.actions[0], self.actions[1]],
                contact,
                contact_prev: self.contact_prev,
                impulse,
            },
            &self.nominal.reference_pose,
            &cfg.rewards,
        );
        let barrier = barrier_terms(
            &s.q,
            &s.qdot,
            &tau_load,
            &self.model.joint_lower(),
            &self.model.joint_upper(),
            &self.model.velocity_limits(),
            &cfg.rewards,
            cfg.use_load_reg,
        );
        let reward = compose(raw_cav, motion, barrier, cfg.rewards.w_cav);
        if !reward.total().is_finite() {
            self.active = false;
            return Err(Error::NonFinite {
                stage: "reward",
                detail: format!("{reward:?}"),
            });
        }

        // Termination.
        let in_landing = cfg.schedule.phase_of(phase)? == Phase::Landing;
        let termination = if cfg.use_load_reg
            && overload_termination(&tau_load, cfg.overload_threshold, &mut self.rng)
        {
            Termination::Overload
        } else if s.base_position.z < 0.0 || (!in_landing && s.base_position.z < cfg.fall_height) {
            // Only the foot collides with the ground, so a base below it means
            // the robot has toppled through the floor even while landing.
            Termination::Fall
        } else if self.step_index >= cfg.episode_steps() {
            Termination::TimeLimit
        } else {
            Termination::None
        };
        let done = termination != Termination::None;

        let raw = raw_pitch(s);
        self.pitch += wrap_angle(raw - self.pitch_raw);
        self.pitch_raw = raw;
        let info = StepInfo {
            t: self.phase_time(),
            phase,
            l_com: centroidal.l_com,
            w_com: centroidal.w_com,
            i_com_pitch: centroidal.i_com[(1, 1)],
            base_pitch: self.pitch,
            base_pitch_rate: pitch_rate_sum * inv_n,
            com_height: centroidal.com.z,
            base_height: s.base_position.z,
            q: s.q,
            qdot: s.qdot,
            tau_cmd: tau_cmd_sum * inv_n,
            tau_applied,
            tau_load,
            contact,
            touched,
            termination,
        };

        self.actions = [action, self.actions[0]];
        self.contact_prev = contact;
        self.history.push(self.target - self.state.q, self.state.qdot);
        if done {
            self.active = false;
        }
        let (observation, privileged) = self.observe();
        Ok(StepOutput {
            observation,
            privileged,
            reward,
            done,
            info,
        })
    }
}
