//! Reward terms: the phase-scheduled centroidal angular velocity reward,
//! exponential motion-regularization terms, relaxed log barriers on joint
//! limits and transmission load, and their composition.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f(z)` of the relaxed log barrier: `ln z` above `delta`, a quadratic
/// continuation below it that matches value and slope at `z = delta`.
pub fn relaxed_log(z: f64, delta: f64) -> f64 {
    if z >= delta {
        z.ln()
    } else {
        let r = (z - 2.0 * delta) / delta;
        delta.ln() - 0.5 * (r * r - 1.0)
    }
}

/// Two-sided relaxed log barrier `f(x − lo) + f(hi − x)`.
pub fn relaxed_log_barrier(x: f64, lo: f64, hi: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0 && lo < hi);
    relaxed_log(x - lo, delta) + relaxed_log(hi - x, delta)
}

/// Motion phase boundaries in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub phi_jump: f64,
    pub phi_land: f64,
    pub episode_len: f64,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        PhaseSchedule {
            phi_jump: 0.5,
            phi_land: 1.05,
            episode_len: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Takeoff,
    Aerial,
    Landing,
}

impl PhaseSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.phi_jump && self.phi_jump < self.phi_land && self.phi_land < self.episode_len)
        {
            return Err(Error::config(
                "schedule",
                "need 0 < phi_jump < phi_land < episode_len",
            ));
        }
        Ok(())
    }

    /// Half-open intervals `[0, jump)`, `[jump, land)`, `[land, len)`.
    pub fn phase_of(&self, phi: f64) -> Result<Phase> {
        if !(0.0..self.episode_len).contains(&phi) {
            return Err(Error::InvalidArgument(format!(
                "phase {phi} outside [0, {})",
                self.episode_len
            )));
        }
        Ok(if phi < self.phi_jump {
            Phase::Takeoff
        } else if phi < self.phi_land {
            Phase::Aerial
        } else {
            Phase::Landing
        })
    }
}

/// Quantity rewarded during the aerial phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AerialRewardMode {
    /// Centroidal angular velocity.
    #[default]
    Cav,
    /// Centroidal angular momentum.
    Cam,
    /// Angular velocity of the base link alone.
    Bav,
}

impl std::str::FromStr for AerialRewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cav" => Ok(AerialRewardMode::Cav),
            "cam" => Ok(AerialRewardMode::Cam),
            "bav" => Ok(AerialRewardMode::Bav),
            other => Err(Error::config(
                "aerial_reward_mode",
                format!("unknown mode `{other}` (expected cav, cam or bav)"),
            )),
        }
    }
}

impl std::fmt::Display for AerialRewardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AerialRewardMode::Cav => "cav",
            AerialRewardMode::Cam => "cam",
            AerialRewardMode::Bav => "bav",
        })
    }
}

/// `coef · exp(−scale · x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub coef: f64,
    pub scale: f64,
}

impl ExpTerm {
    const fn new(coef: f64, scale: f64) -> Self {
        ExpTerm { coef, scale }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coef * (-self.scale * x).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadBarrier {
    pub lower: f64,
    pub upper: f64,
    pub delta: f64,
}

impl Default for LoadBarrier {
    fn default() -> Self {
        LoadBarrier {
            lower: -30.0,
            upper: 30.0,
            delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w_cav: f64,
    pub flip_axis: [f64; 3],
    pub aerial_upper: f64,
    pub aerial_lower: f64,
    pub landing_scale: f64,
    pub landing_clamp: f64,
    pub w_tau: [f64; 3],
    pub w_p: [f64; 3],
    pub w_v: [f64; 3],
    pub w_a: [f64; 3],
    pub lin: ExpTerm,
    pub tau: ExpTerm,
    pub pos: ExpTerm,
    pub vel: ExpTerm,
    pub acc: ExpTerm,
    pub slip: ExpTerm,
    pub act: ExpTerm,
    pub contact_smooth: ExpTerm,
    pub contact_impulse: ExpTerm,
    pub delta_pos: f64,
    pub delta_vel: f64,
    pub load: LoadBarrier,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_cav: 3.0,
            flip_axis: [0.0, 1.0, 0.0],
            aerial_upper: 10.0,
            aerial_lower: -0.1,
            landing_scale: 0.5,
            landing_clamp: 2.5,
            w_tau: [0.5, 2.0, 2.0],
            w_p: [0.5, 1.0, 1.0],
            w_v: [0.5, 2.0, 2.0],
            w_a: [0.5, 2.0, 2.0],
            lin: ExpTerm::new(0.10, 1.0),
            tau: ExpTerm::new(0.10, 5e-3),
            pos: ExpTerm::new(0.10, 5e-2),
            vel: ExpTerm::new(0.20, 5e-3),
            acc: ExpTerm::new(0.20, 1e-3),
            slip: ExpTerm::new(0.10, 0.2),
            act: ExpTerm::new(0.20, 0.18),
            contact_smooth: ExpTerm::new(0.10, 1.0),
            contact_impulse: ExpTerm::new(0.20, 100.0),
            delta_pos: 0.08,
            delta_vel: 2.0,
            load: LoadBarrier::default(),
        }
    }
}

impl RewardWeights {
    pub fn axis(&self) -> Vector3<f64> {
        Vector3::from(self.flip_axis)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.axis().norm() - 1.0).abs() > 1e-9 {
            return Err(Error::config("rewards.flip_axis", "must be unit length"));
        }
        let terms = [
            self.lin,
            self.tau,
            self.pos,
            self.vel,
            self.acc,
            self.slip,
            self.act,
            self.contact_smooth,
            self.contact_impulse,
        ];
        let nonneg = terms.iter().all(|t| t.coef >= 0.0 && t.scale >= 0.0)
            && self.w_cav >= 0.0
            && [self.w_tau, self.w_p, self.w_v, self.w_a]
                .iter()
                .flatten()
                .all(|w| *w >= 0.0);
        if !nonneg {
            return Err(Error::config("rewards", "coefficients must be non-negative"));
        }
        if !(self.delta_pos > 0.0 && self.delta_vel > 0.0 && self.load.delta > 0.0) {
            return Err(Error::config("rewards", "barrier deltas must be positive"));
        }
        if !(self.load.lower < self.load.upper) {
            return Err(Error::config("rewards.load", "lower must be below upper"));
        }
        Ok(())
    }
}

/// Raw aerial-phase quantity, clipped to `[lower, upper]`.
fn clip_aerial(x: f64, w: &RewardWeights) -> f64 {
    x.min(w.aerial_upper).max(w.aerial_lower)
}

/// Raw CAV reward (before the `w_cav` weight).
///
/// Zero during takeoff, the clipped flip-axis CAV in the air, and a penalty on
/// residual angular momentum during landing.
pub fn r_cav(
    phase: f64,
    w_com: &Vector3<f64>,
    l_com: &Vector3<f64>,
    axis: &Vector3<f64>,
    sched: &PhaseSchedule,
) -> Result<f64> {
    let w = RewardWeights {
        flip_axis: (*axis).into(),
        ..RewardWeights::default()
    };
    aerial_reward_variant(
        AerialRewardMode::Cav,
        phase,
        &AerialInputs {
            w_com: *w_com,
            l_com: *l_com,
            base_omega: Vector3::zeros(),
        },
        &w,
        sched,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AerialInputs {
    pub w_com: Vector3<f64>,
    pub l_com: Vector3<f64>,
    /// World-frame angular velocity of the base link.
    pub base_omega: Vector3<f64>,
}

/// The phase-scheduled rotation reward with the aerial term chosen by `mode`.
/// Takeoff and landing phases are identical across modes.
pub fn aerial_reward_variant(
    mode: AerialRewardMode,
    phase: f64,
    inputs: &AerialInputs,
    weights: &RewardWeights,
    sched: &PhaseSchedule,
) -> Result<f64> {
    let axis = weights.axis();
    Ok(match sched.phase_of(phase)? {
        Phase::Takeoff => 0.0,
        Phase::Aerial => {
            let x = match mode {
                AerialRewardMode::Cav => axis.dot(&inputs.w_com),
                AerialRewardMode::Cam => axis.dot(&inputs.l_com),
                AerialRewardMode::Bav => axis.dot(&inputs.base_omega),
            };
            clip_aerial(x, weights)
        }
        Phase::Landing => -weights.landing_scale * inputs.l_com.norm().min(weights.landing_clamp),
    })
}

/// Everything the motion-regularization terms read for one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionInputs {
    pub base_velocity: Vector3<f64>,
    pub joint_pos: Vector3<f64>,
    pub joint_vel: Vector3<f64>,
    pub joint_vel_prev: Vector3<f64>,
    pub joint_torque: Vector3<f64>,
    pub foot_velocity_xy: Vector2<f64>,
    /// `a_t`, `a_{t−1}`, `a_{t−2}`.
    pub actions: [Vector3<f64>; 3],
    pub contact: [bool; 4],
    pub contact_prev: [bool; 4],
    /// Contact impulse summed over corners and substeps, N·s.
    pub impulse: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionTerms {
    pub r_lin: f64,
    pub r_tau: f64,
    pub r_p: f64,
    pub r_v: f64,
    pub r_a: f64,
    pub r_slip: f64,
    pub r_act: f64,
    pub r_cs: f64,
    pub r_ci: f64,
}

impl MotionTerms {
    pub fn sum(&self) -> f64 {
        self.r_lin
            + self.r_tau
            + self.r_p
            + self.r_v
            + self.r_a
            + self.r_slip
            + self.r_act
            + self.r_cs
            + self.r_ci
    }
}

fn weighted(w: &[f64; 3], x: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(w[0] * x[0], w[1] * x[1], w[2] * x[2])
}

fn contact_vector(c: &[bool; 4]) -> nalgebra::Vector4<f64> {
    nalgebra::Vector4::from_fn(|i, _| if c[i] { 1.0 } else { 0.0 })
}

pub fn motion_terms(inputs: &MotionInputs, theta0: &Vector3<f64>, w: &RewardWeights) -> MotionTerms {
    let v_xy = Vector2::new(inputs.base_velocity.x, inputs.base_velocity.y);
    let [a0, a1, a2] = &inputs.actions;
    let delta_a = a0 - 2.0 * a1 + a2;
    let dc = contact_vector(&inputs.contact) - contact_vector(&inputs.contact_prev);
    MotionTerms {
        r_lin: w.lin.eval(v_xy.norm_squared()),
        // Unsquared norm.
        r_tau: w.tau.eval(weighted(&w.w_tau, &inputs.joint_torque).norm()),
        r_p: w.pos.eval(weighted(&w.w_p, &(inputs.joint_pos - theta0)).norm_squared()),
        r_v: w.vel.eval(weighted(&w.w_v, &inputs.joint_vel).norm_squared()),
        r_a: w.acc.eval(
            weighted(&w.w_a, &(inputs.joint_vel - inputs.joint_vel_prev)).norm_squared(),
        ),
        r_slip: w.slip.eval(inputs.foot_velocity_xy.norm_squared()),
        r_act: w.act.eval(delta_a.norm_squared()),
        r_cs: w.contact_smooth.eval(dc.norm_squared()),
        r_ci: w.contact_impulse.eval(inputs.impulse.norm_squared()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BarrierTerms {
    pub b_pos: f64,
    pub b_vel: f64,
    /// Zero unless load regularization is enabled.
    pub b_load: f64,
}

impl BarrierTerms {
    pub fn sum(&self) -> f64 {
        self.b_pos + self.b_vel + self.b_load
    }
}

/// Sum over joints of the load barrier on `τ_load`.
pub fn load_barrier(tau_load: &Vector3<f64>, b: &LoadBarrier) -> f64 {
    tau_load
        .iter()
        .map(|&t| relaxed_log_barrier(t, b.lower, b.upper, b.delta))
        .sum()
}

#[allow(clippy::too_many_arguments)]
pub fn barrier_terms(
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    tau_load: &Vector3<f64>,
    lower: &[f64; 3],
    upper: &[f64; 3],
    vel_limits: &[f64; 3],
    w: &RewardWeights,
    use_load: bool,
) -> BarrierTerms {
    let b_pos = (0..3)
        .map(|j| relaxed_log_barrier(q[j], lower[j], upper[j], w.delta_pos))
        .sum();
    let b_vel = (0..3)
        .map(|j| relaxed_log_barrier(qdot[j], -vel_limits[j], vel_limits[j], w.delta_vel))
        .sum();
    let b_load = if use_load {
        load_barrier(tau_load, &w.load)
    } else {
        0.0
    };
    BarrierTerms { b_pos, b_vel, b_load }
}

/// Per-term rewards of one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    /// Raw scheduled rotation reward, before `w_cav`.
    pub r_cav: f64,
    pub motion: MotionTerms,
    pub barrier: BarrierTerms,
    pub r_motion: f64,
    pub r_barrier: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.r_motion + self.r_barrier
    }

    pub const TERM_NAMES: [&'static str; 15] = [
        "r_cav", "r_lin", "r_tau", "r_p", "r_v", "r_a", "r_slip", "r_act", "r_cs", "r_ci",
        "b_pos", "b_vel", "b_load", "r_motion", "r_barrier",
    ];

    pub fn term_values(&self) -> [f64; 15] {
        let m = &self.motion;
        let b = &self.barrier;
        [
            self.r_cav, m.r_lin, m.r_tau, m.r_p, m.r_v, m.r_a, m.r_slip, m.r_act, m.r_cs, m.r_ci,
            b.b_pos, b.b_vel, b.b_load, self.r_motion, self.r_barrier,
        ]
    }
}

/// `r_motion = (1 + w_cav · r_cav) Σ rᵢ`, `r_barrier = Σ bⱼ`.
pub fn compose(raw_cav: f64, motion: MotionTerms, barrier: BarrierTerms, w_cav: f64) -> RewardBreakdown {
    RewardBreakdown {
        r_cav: raw_cav,
        motion,
        barrier,
        r_motion: (1.0 + w_cav * raw_cav) * motion.sum(),
        r_barrier: barrier.sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched() -> PhaseSchedule {
        PhaseSchedule::default()
    }

    #[test]
    fn barrier_golden_values() {
        let b = relaxed_log_barrier(0.0, -30.0, 30.0, 1.0);
        assert!((b - 2.0 * 30f64.ln()).abs() < 1e-12);
        assert!((b - 6.8024).abs() < 1e-4);
        assert!((relaxed_log(0.0, 1.0) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn barrier_branches_meet_with_matching_slope() {
        for &delta in &[0.08, 1.0, 2.0] {
            let below = relaxed_log(delta - 1e-12, delta);
            assert!((below - delta.ln()).abs() < 1e-10);
            let h = 1e-6;
            let left = (relaxed_log(delta, delta) - relaxed_log(delta - h, delta)) / h;
            let right = (relaxed_log(delta + h, delta) - relaxed_log(delta, delta)) / h;
            assert!((left - 1.0 / delta).abs() < 1e-4 / delta);
            assert!((right - 1.0 / delta).abs() < 1e-4 / delta);
        }
    }

    #[test]
    fn cav_schedule_examples() {
        let axis = Vector3::y();
        let w = Vector3::new(0.0, 12.0, 0.0);
        let l_big = Vector3::new(3.0, 0.0, 0.0);
        assert_eq!(r_cav(0.2, &w, &l_big, &axis, &sched()).unwrap(), 0.0);
        assert_eq!(r_cav(0.7, &w, &l_big, &axis, &sched()).unwrap(), 10.0);
        assert!((r_cav(1.5, &w, &l_big, &axis, &sched()).unwrap() + 1.25).abs() < 1e-15);
        assert_eq!(
            r_cav(0.7, &Vector3::new(0.0, -3.0, 0.0), &l_big, &axis, &sched()).unwrap(),
            -0.1
        );
        assert!(r_cav(2.0, &w, &l_big, &axis, &sched()).is_err());
        assert!(r_cav(-0.01, &w, &l_big, &axis, &sched()).is_err());
    }

    #[test]
    fn phase_boundaries_are_half_open() {
        let s = sched();
        assert_eq!(s.phase_of(0.5).unwrap(), Phase::Aerial);
        assert_eq!(s.phase_of(0.5 - 1e-12).unwrap(), Phase::Takeoff);
        assert_eq!(s.phase_of(1.05).unwrap(), Phase::Landing);
        assert_eq!(s.phase_of(1.05 - 1e-12).unwrap(), Phase::Aerial);
    }

    #[test]
    fn cam_variant_reports_momentum() {
        let inputs = AerialInputs {
            w_com: Vector3::zeros(),
            l_com: Vector3::new(0.0, 4.3, 0.0),
            base_omega: Vector3::zeros(),
        };
        let r = aerial_reward_variant(AerialRewardMode::Cam, 0.8, &inputs, &RewardWeights::default(), &sched())
            .unwrap();
        assert!((r - 4.3).abs() < 1e-15);
    }

    fn quiet_inputs() -> MotionInputs {
        MotionInputs {
            base_velocity: Vector3::zeros(),
            joint_pos: Vector3::zeros(),
            joint_vel: Vector3::zeros(),
            joint_vel_prev: Vector3::zeros(),
            joint_torque: Vector3::zeros(),
            foot_velocity_xy: Vector2::zeros(),
            actions: [Vector3::zeros(); 3],
            contact: [true; 4],
            contact_prev: [true; 4],
            impulse: Vector3::zeros(),
        }
    }

    #[test]
    fn motion_term_examples() {
        let w = RewardWeights::default();
        let m = motion_terms(&quiet_inputs(), &Vector3::zeros(), &w);
        assert_eq!(m.r_lin, 0.10);
        assert_eq!(m.r_ci, 0.20);
        assert!((m.sum() - 1.3).abs() < 1e-12);

        let mut inp = quiet_inputs();
        inp.joint_torque = Vector3::new(2.0, 1.0, 1.0);
        let m = motion_terms(&inp, &Vector3::zeros(), &w);
        assert!((m.r_tau - 0.10 * (-0.015f64).exp()).abs() < 1e-15);
        assert!((m.r_tau - 0.09851).abs() < 1e-5);
    }

    #[test]
    fn second_difference_and_contact_change() {
        let w = RewardWeights::default();
        let mut inp = quiet_inputs();
        // Constant-velocity action ramp has zero second difference.
        inp.actions = [Vector3::repeat(0.3), Vector3::repeat(0.2), Vector3::repeat(0.1)];
        inp.contact = [false, false, true, true];
        let m = motion_terms(&inp, &Vector3::zeros(), &w);
        assert!((m.r_act - 0.20).abs() < 1e-12);
        assert!((m.r_cs - 0.10 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn composition_examples() {
        let motion = MotionTerms {
            r_lin: 1.0,
            ..Default::default()
        };
        let b = BarrierTerms {
            b_pos: 0.5,
            b_vel: 0.25,
            b_load: 0.0,
        };
        let r = compose(0.0, motion, b, 3.0);
        assert_eq!(r.r_motion, 1.0);
        let r = compose(10.0, motion, b, 3.0);
        assert_eq!(r.r_motion, 31.0);
        assert_eq!(r.r_barrier, 0.75);
        assert_eq!(r.total(), 31.75);
    }

    #[test]
    fn position_barrier_prefers_mid_range() {
        let w = RewardWeights::default();
        let lo = [-0.4, -0.873, -0.4];
        let hi = [2.15, 0.698, 0.4];
        let vl = [8.0, 12.0, 12.0];
        let mid = Vector3::from_fn(|i, _| 0.5 * (lo[i] + hi[i]));
        let near = Vector3::new(hi[0] - 0.01, mid[1], mid[2]);
        let slow = Vector3::repeat(0.1);
        let b_mid = barrier_terms(&mid, &slow, &Vector3::zeros(), &lo, &hi, &vl, &w, false);
        let b_near = barrier_terms(&near, &slow, &Vector3::zeros(), &lo, &hi, &vl, &w, false);
        assert!(b_mid.b_pos + b_mid.b_vel > b_near.b_pos + b_near.b_vel);
        let expected: f64 = (0..3)
            .map(|j| (mid[j] - lo[j]).ln() + (hi[j] - mid[j]).ln())
            .sum();
        assert!((b_mid.b_pos - expected).abs() < 1e-12);
        assert_eq!(b_mid.b_load, 0.0);
    }

    proptest! {
        #[test]
        fn barrier_is_concave_and_c1(x in -40.0f64..40.0) {
            let (lo, hi, d) = (-30.0, 30.0, 1.0);
            let h = 1e-4;
            let f = |x: f64| relaxed_log_barrier(x, lo, hi, d);
            let second = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            prop_assert!(second <= 1e-4);
        }

        #[test]
        fn exp_terms_bounded_by_coefficient(v in -5.0f64..5.0, t in -50.0f64..50.0) {
            let w = RewardWeights::default();
            let mut inp = quiet_inputs();
            inp.base_velocity = Vector3::new(v, -v, 0.0);
            inp.joint_torque = Vector3::new(t, t, -t);
            let m = motion_terms(&inp, &Vector3::zeros(), &w);
            prop_assert!(m.r_lin > 0.0 && m.r_lin <= 0.10);
            prop_assert!(m.r_tau > 0.0 && m.r_tau <= 0.10);
        }

        #[test]
        fn raw_cav_range(phase in 0.0f64..2.0, wy in -100.0f64..100.0, l in 0.0f64..50.0) {
            let r = r_cav(phase, &Vector3::new(0.0, wy, 0.0), &Vector3::new(l, 0.0, 0.0), &Vector3::y(), &sched()).unwrap();
            prop_assert!((-1.25..=10.0).contains(&r));
        }
    }
}
