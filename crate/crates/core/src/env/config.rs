use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewards::{AerialRewardMode, PhaseSchedule, RewardWeights};

/// Closed interval `[lo, hi]` sampled uniformly; `lo == hi` pins the value.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Randomization {
    /// One scale applied to every link mass.
    pub mass_scale: Range,
    /// Independent scale per link inertia tensor.
    pub inertia_scale: Range,
    /// Half-width of the uniform per-axis COM shift, m.
    pub com_shift: f64,
    /// Independent scale per joint PD gain pair.
    pub pd_gain_scale: Range,
    pub knee_friction: Range,
    pub ankle_friction: Range,
    pub ground_friction: Range,
    pub restitution: Range,
}

impl Default for Randomization {
    fn default() -> Self {
        Randomization {
            mass_scale: [0.85, 1.15],
            inertia_scale: [0.85, 1.15],
            com_shift: 0.03,
            pd_gain_scale: [0.9, 1.1],
            knee_friction: [0.0, 0.7],
            ankle_friction: [0.0, 1.0],
            ground_friction: [0.5, 0.9],
            restitution: [0.0, 0.2],
        }
    }
}

impl Randomization {
    /// Every range collapsed onto the nominal model.
    pub fn disabled() -> Self {
        Randomization {
            mass_scale: [1.0, 1.0],
            inertia_scale: [1.0, 1.0],
            com_shift: 0.0,
            pd_gain_scale: [1.0, 1.0],
            knee_friction: [0.0, 0.0],
            ankle_friction: [0.0, 0.0],
            ground_friction: [0.7, 0.7],
            restitution: [0.0, 0.0],
        }
    }

    fn validate(&self) -> Result<()> {
        let ranges = [
            ("mass_scale", self.mass_scale, 1e-6),
            ("inertia_scale", self.inertia_scale, 1e-6),
            ("pd_gain_scale", self.pd_gain_scale, 0.0),
            ("knee_friction", self.knee_friction, 0.0),
            ("ankle_friction", self.ankle_friction, 0.0),
            ("ground_friction", self.ground_friction, 0.0),
            ("restitution", self.restitution, 0.0),
        ];
        for (name, [lo, hi], min) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
                return Err(Error::config(
                    format!("randomization.{name}"),
                    format!("need {min} <= lo <= hi, got [{lo}, {hi}]"),
                ));
            }
        }
        if self.restitution[1] >= 1.0 {
            return Err(Error::config("randomization.restitution", "must be below 1"));
        }
        if !(self.com_shift >= 0.0) {
            return Err(Error::config("randomization.com_shift", "must be non-negative"));
        }
        Ok(())
    }
}

/// Half-widths of the uniform observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseScales {
    pub gravity: f64,
    pub angular_velocity: f64,
    pub joint_position: f64,
    pub joint_velocity: f64,
    pub position_history: f64,
    pub velocity_history: f64,
}

impl Default for NoiseScales {
    fn default() -> Self {
        NoiseScales {
            gravity: 0.07,
            angular_velocity: 0.10,
            joint_position: 0.05,
            joint_velocity: 0.50,
            position_history: 0.05,
            velocity_history: 0.10,
        }
    }
}

impl NoiseScales {
    pub fn zero() -> Self {
        NoiseScales {
            gravity: 0.0,
            angular_velocity: 0.0,
            joint_position: 0.0,
            joint_velocity: 0.0,
            position_history: 0.0,
            velocity_history: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.gravity,
            self.angular_velocity,
            self.joint_position,
            self.joint_velocity,
            self.position_history,
            self.velocity_history,
        ];
        if all.iter().all(|x| *x >= 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::config("noise", "scales must be finite and non-negative"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dt_sim: f64,
    pub dt_control: f64,
    pub schedule: PhaseSchedule,
    pub randomization: Randomization,
    pub noise: NoiseScales,
    pub rewards: RewardWeights,
    pub use_mor: bool,
    pub use_load_reg: bool,
    pub aerial_reward_mode: AerialRewardMode,
    /// Per-joint `τ_load` above which an episode may be cut short, N·m.
    pub overload_threshold: f64,
    /// Bound on the action, rad offset from the reference pose.
    pub action_clamp: f64,
    /// Half-width of the uniform joint perturbation at reset, rad.
    pub reset_perturbation: f64,
    /// Base height below which the episode ends outside the landing phase, m.
    pub fall_height: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt_sim: 0.002,
            dt_control: 0.02,
            schedule: PhaseSchedule::default(),
            randomization: Randomization::default(),
            noise: NoiseScales::default(),
            rewards: RewardWeights::default(),
            use_mor: true,
            use_load_reg: true,
            aerial_reward_mode: AerialRewardMode::Cav,
            overload_threshold: 45.0,
            action_clamp: 1.5,
            reset_perturbation: 0.05,
            fall_height: 0.15,
            seed: 0,
        }
    }
}

impl EnvConfig {
    /// Number of simulation substeps per control step.
    pub fn substeps(&self) -> usize {
        (self.dt_control / self.dt_sim).round() as usize
    }

    /// Number of control steps in a full episode.
    pub fn episode_steps(&self) -> usize {
        (self.schedule.episode_len / self.dt_control).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_sim > 0.0 && self.dt_control >= self.dt_sim) {
            return Err(Error::config("dt_control", "need 0 < dt_sim <= dt_control"));
        }
        let ratio = self.dt_control / self.dt_sim;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::config(
                "dt_control",
                format!("must be an integer multiple of dt_sim ({ratio} substeps)"),
            ));
        }
        let steps = self.schedule.episode_len / self.dt_control;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(Error::config(
                "schedule.episode_len",
                "must be an integer multiple of dt_control",
            ));
        }
        self.schedule.validate()?;
        self.randomization.validate()?;
        self.noise.validate()?;
        self.rewards.validate()?;
        if !(self.overload_threshold > 0.0) {
            return Err(Error::config("overload_threshold", "must be positive"));
        }
        if !(self.action_clamp > 0.0) {
            return Err(Error::config("action_clamp", "must be positive"));
        }
        if !(self.reset_perturbation >= 0.0) {
            return Err(Error::config("reset_perturbation", "must be non-negative"));
        }
        if !self.fall_height.is_finite() {
            return Err(Error::config("fall_height", "must be finite"));
        }
        Ok(())
    }
}
