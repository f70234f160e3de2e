use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::Rng;

use super::config::NoiseScales;

pub const ACTOR_OBS_DIM: usize = 38;
pub const PRIVILEGED_DIM: usize = 3;

/// Control-step lags of the history samples (0.06, 0.12 and 0.18 s at 50 Hz).
pub const HISTORY_LAGS: [usize; 3] = [3, 6, 9];

#[derive(Debug, Clone, PartialEq)]
pub struct ActorObservation {
    /// Unit gravity direction in the base frame.
    pub gravity: Vector3<f64>,
    /// Base angular velocity in the base frame.
    pub angular_velocity: Vector3<f64>,
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
    /// `a_{t−1}`, `a_{t−2}`.
    pub last_actions: [Vector3<f64>; 2],
    /// `q* − q` at each lag in [`HISTORY_LAGS`].
    pub position_error_history: [Vector3<f64>; 3],
    pub velocity_history: [Vector3<f64>; 3],
    /// `sin φ`, `cos φ` with φ the phase mapped onto one turn per episode.
    pub phase: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivilegedObservation {
    /// Base linear velocity in the base frame.
    pub base_velocity: Vector3<f64>,
}

impl PrivilegedObservation {
    pub fn to_array(&self) -> [f64; PRIVILEGED_DIM] {
        self.base_velocity.into()
    }
}

fn jitter<R: Rng + ?Sized>(v: &mut Vector3<f64>, half_width: f64, rng: &mut R) {
    if half_width > 0.0 {
        for x in v.iter_mut() {
            *x += rng.random_range(-half_width..half_width);
        }
    }
}

impl ActorObservation {
    pub fn to_array(&self) -> [f64; ACTOR_OBS_DIM] {
        let mut out = [0.0; ACTOR_OBS_DIM];
        let groups = [self.gravity, self.angular_velocity, self.q, self.qdot]
            .into_iter()
            .chain(self.last_actions)
            .chain(self.position_error_history)
            .chain(self.velocity_history);
        for (i, g) in groups.enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(g.as_slice());
        }
        out[36] = self.phase[0];
        out[37] = self.phase[1];
        out
    }

    /// Adds independent uniform noise of the configured half-widths. Actions
    /// and phase are known exactly and stay untouched.
    pub fn with_noise<R: Rng + ?Sized>(mut self, noise: &NoiseScales, rng: &mut R) -> Self {
        jitter(&mut self.gravity, noise.gravity, rng);
        jitter(&mut self.angular_velocity, noise.angular_velocity, rng);
        jitter(&mut self.q, noise.joint_position, rng);
        jitter(&mut self.qdot, noise.joint_velocity, rng);
        for h in self.position_error_history.iter_mut() {
            jitter(h, noise.position_history, rng);
        }
        for h in self.velocity_history.iter_mut() {
            jitter(h, noise.velocity_history, rng);
        }
        self
    }
}

/// Per-control-step samples of `(q* − q, q̇)`, most recent first.
#[derive(Debug, Clone, Default)]
pub struct History {
    samples: VecDeque<(Vector3<f64>, Vector3<f64>)>,
}

impl History {
    const CAPACITY: usize = HISTORY_LAGS[2] + 1;

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn push(&mut self, position_error: Vector3<f64>, qdot: Vector3<f64>) {
        self.samples.push_front((position_error, qdot));
        self.samples.truncate(Self::CAPACITY);
    }

    /// Samples `lag` control steps before the latest; zeros if not yet recorded.
    pub fn at_lag(&self, lag: usize) -> (Vector3<f64>, Vector3<f64>) {
        self.samples
            .get(lag)
            .copied()
            .unwrap_or((Vector3::zeros(), Vector3::zeros()))
    }
}
