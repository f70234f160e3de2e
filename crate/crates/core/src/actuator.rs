//! Joint-level actuation: PD law, Coulomb friction and torque–speed envelopes.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Speed scale of the tanh friction smoothing, rad/s.
pub const FRICTION_SMOOTHING_SPEED: f64 = 1.0;

/// Four-quadrant motor operating region.
///
/// Driving torque is bounded by the soft current limit and by a voltage line
/// that falls linearly to zero at `omega_max`. Braking torque (torque opposing
/// the motion) keeps the full current limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorEnvelope {
    pub tau_cur: f64,
    pub omega_max: f64,
    pub beta: f64,
}

impl MorEnvelope {
    /// Envelope whose voltage line meets the current limit at `corner_speed`.
    pub fn from_corner(tau_cur: f64, omega_max: f64, corner_speed: f64) -> Self {
        MorEnvelope {
            tau_cur,
            omega_max,
            beta: tau_cur / (omega_max - corner_speed),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.tau_cur > 0.0 && self.omega_max > 0.0 && self.beta > 0.0) {
            return Err("tau_cur, omega_max and beta must be positive".into());
        }
        if self.beta * self.omega_max < self.tau_cur {
            return Err("beta * omega_max must reach tau_cur".into());
        }
        Ok(())
    }

    pub fn upper(&self, omega: f64) -> f64 {
        self.tau_cur.min((self.beta * (self.omega_max - omega)).max(0.0))
    }

    pub fn lower(&self, omega: f64) -> f64 {
        -self.tau_cur.min((self.beta * (self.omega_max + omega)).max(0.0))
    }

    pub fn clip(&self, tau: f64, omega: f64) -> f64 {
        tau.clamp(self.lower(omega), self.upper(omega))
    }
}

pub fn mor_clip(env: &MorEnvelope, tau_cmd: f64, omega: f64) -> f64 {
    env.clip(tau_cmd, omega)
}

/// Static torque box with a hard velocity stop, used when the envelope is disabled.
///
/// Torque is limited to ±`tau_max`; once |ω| reaches `velocity_limit` no further
/// torque in the direction of motion is allowed.
pub fn box_clip(tau_max: f64, velocity_limit: f64, tau_cmd: f64, omega: f64) -> f64 {
    let upper = if omega >= velocity_limit { 0.0 } else { tau_max };
    let lower = if omega <= -velocity_limit { 0.0 } else { -tau_max };
    tau_cmd.clamp(lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains {
            kp: [100.0, 60.0, 60.0],
            kd: [2.0, 1.0, 1.0],
        }
    }
}

impl PdGains {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self
            .kp
            .iter()
            .chain(&self.kd)
            .any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return Err("gains must be finite and non-negative".into());
        }
        Ok(())
    }
}

pub fn pd_torque(
    gains: &PdGains,
    q_target: &Vector3<f64>,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
) -> Vector3<f64> {
    Vector3::from_fn(|i, _| gains.kp[i] * (q_target[i] - q[i]) - gains.kd[i] * qdot[i])
}

/// Subtracts smooth-saturated Coulomb friction opposing the joint velocity.
pub fn joint_friction(
    tau_net: &Vector3<f64>,
    qdot: &Vector3<f64>,
    coulomb: &[f64; 3],
) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        tau_net[i] - coulomb[i] * (qdot[i] / FRICTION_SMOOTHING_SPEED).tanh()
    })
}

/// Which torque limit the actuator pipeline enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TorqueLimit {
    /// Speed-dependent operating region.
    Envelope,
    /// Constant torque bound plus the joint velocity stop.
    StaticBox,
}

/// Applies the selected limit to all three joints.
pub fn limit_torques(
    limit: TorqueLimit,
    envelopes: &[MorEnvelope; 3],
    velocity_limits: &[f64; 3],
    tau: &Vector3<f64>,
    qdot: &Vector3<f64>,
) -> Vector3<f64> {
    Vector3::from_fn(|i, _| match limit {
        TorqueLimit::Envelope => envelopes[i].clip(tau[i], qdot[i]),
        TorqueLimit::StaticBox => {
            box_clip(envelopes[i].tau_cur, velocity_limits[i], tau[i], qdot[i])
        }
    })
}
