//! Articulated rigid-body model of the one-leg hopper.
//!
//! Nine generalized coordinates: a floating thigh (6) plus knee pitch, ankle
//! pitch and ankle roll. The ankle is modeled as two serial direct-drive
//! joints sharing one pivot.

mod contact;
mod dynamics;
mod integrator;
mod params;
pub mod spatial;
mod state;

#[cfg(test)]
pub(crate) use sampling as test_support;

use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector3};

pub use contact::{contact_resolve, corner_force, ContactRecord, CornerForce};
pub use dynamics::{
    bias_forces, bias_forces_from, kinetic_energy, mass_matrix, mass_matrix_from,
    potential_energy, total_energy, GenVector, Kinematics, MassMatrix, PointJacobian,
    FOOT_BODY, LINK_BODY, NUM_BODIES,
};
pub use integrator::{step, step_actuated, ActuatedStep};
pub use params::{
    ActuatorParams, ContactParams, JointParams, LinkParams, ModelConfig, SoleParams,
};
pub use state::GeneralizedState;

use crate::error::{Error, Result};

/// Number of generalized velocities.
pub const NV: usize = 9;

pub const LINK_NAMES: [&str; 3] = ["thigh", "calf", "foot"];

/// Validated, immutable hopper description.
#[derive(Debug, Clone, PartialEq)]
pub struct HopperModel {
    /// Thigh (floating base), calf, foot.
    pub links: [LinkParams; 3],
    /// Knee pitch, ankle pitch, ankle roll.
    pub joints: [JointParams; 3],
    /// Sole corners in the foot frame.
    pub foot_corners: [Vector3<f64>; 4],
    pub gravity: Vector3<f64>,
    pub contact: ContactParams,
    pub actuators: ActuatorParams,
    pub sole: SoleParams,
    pub crouch_knee: f64,
    pub reference_pose: Vector3<f64>,
}

impl Default for HopperModel {
    fn default() -> Self {
        HopperModel::new(ModelConfig::default()).expect("default model config is valid")
    }
}

impl HopperModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let foot_corners = sole_corners(&config.sole, config.foot.length);
        let mut model = HopperModel {
            links: [config.thigh, config.calf, config.foot],
            joints: config.joints,
            foot_corners,
            gravity: Vector3::from(config.gravity),
            contact: config.contact,
            actuators: config.actuators,
            sole: config.sole,
            crouch_knee: config.crouch_knee,
            reference_pose: Vector3::zeros(),
        };
        model.reference_pose = match config.reference_pose {
            Some(p) => Vector3::from(p),
            None => model.balanced_crouch(config.crouch_knee)?,
        };
        Ok(model)
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        HopperModel::new(ModelConfig::from_json_file(path)?)
    }

    /// Round-trips the model to its JSON form, with θ₀ resolved.
    pub fn to_config(&self) -> ModelConfig {
        ModelConfig {
            thigh: self.links[0].clone(),
            calf: self.links[1].clone(),
            foot: self.links[2].clone(),
            joints: self.joints.clone(),
            sole: self.sole.clone(),
            gravity: self.gravity.into(),
            contact: self.contact.clone(),
            actuators: self.actuators.clone(),
            crouch_knee: self.crouch_knee,
            reference_pose: Some(self.reference_pose.into()),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn joint_lower(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.joints[i].lower)
    }

    pub fn joint_upper(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.joints[i].upper)
    }

    pub fn velocity_limits(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.joints[i].velocity_limit)
    }

    /// Position of joint `j` in its parent body frame.
    pub fn joint_offset(&self, j: usize) -> Vector3<f64> {
        match j {
            0 => Vector3::new(0.0, 0.0, -self.links[0].length),
            1 => Vector3::new(0.0, 0.0, -self.links[1].length),
            _ => Vector3::zeros(),
        }
    }

    /// Rotation of the foot relative to the thigh for joint angles `q`.
    fn chain_rotation(&self, q: &Vector3<f64>) -> Rotation3<f64> {
        (0..3).fold(Rotation3::identity(), |r, j| {
            let axis = Unit::new_normalize(Vector3::from(self.joints[j].axis));
            r * Rotation3::from_axis_angle(&axis, q[j])
        })
    }

    /// Zero-velocity state with joint angles `q`, the foot flat, the sole
    /// centre at the world origin and the sole exactly on the ground.
    pub fn standing_state(&self, q: &Vector3<f64>) -> GeneralizedState {
        let orientation =
            UnitQuaternion::from_rotation_matrix(&self.chain_rotation(q).inverse());
        let mut state = GeneralizedState::at_rest(Vector3::zeros(), orientation, *q);
        let kin = Kinematics::new(self, &state);
        let sole_centre = kin.foot_point(&self.sole_centre());
        state.base_position = -sole_centre;
        state
    }

    pub fn sole_centre(&self) -> Vector3<f64> {
        Vector3::new(self.sole.x_offset, 0.0, -self.links[2].length)
    }

    /// Joint pose of a flat-foot crouch with knee flexion `knee` whose COM lies
    /// above the sole centre.
    pub fn balanced_crouch(&self, knee: f64) -> Result<Vector3<f64>> {
        // For a flat foot, thigh pitch b and ankle pitch a satisfy b + knee + a = 0.
        let com_offset = |b: f64| {
            let q = Vector3::new(knee, -(b + knee), 0.0);
            let s = self.standing_state(&q);
            crate::centroidal::center_of_mass(self, &s).x
        };
        let (mut lo, mut hi) = (-(knee + self.joints[1].upper), -(knee + self.joints[1].lower));
        let (mut flo, fhi) = (com_offset(lo), com_offset(hi));
        if flo * fhi > 0.0 {
            return Err(Error::config(
                "crouch_knee",
                "no ankle angle within limits balances the COM over the sole",
            ));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = com_offset(mid);
            if fm * flo <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fm;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        let b = 0.5 * (lo + hi);
        Ok(Vector3::new(knee, -(b + knee), 0.0))
    }

    /// Heights of the sole corners above the ground plane.
    pub fn corner_heights(&self, state: &GeneralizedState) -> [f64; 4] {
        let kin = Kinematics::new(self, state);
        std::array::from_fn(|i| kin.foot_point(&self.foot_corners[i]).z)
    }
}

fn sole_corners(sole: &SoleParams, depth: f64) -> [Vector3<f64>; 4] {
    let (hl, hw) = (0.5 * sole.length, 0.5 * sole.width);
    let x0 = sole.x_offset;
    [
        Vector3::new(x0 + hl, hw, -depth),
        Vector3::new(x0 + hl, -hw, -depth),
        Vector3::new(x0 - hl, hw, -depth),
        Vector3::new(x0 - hl, -hw, -depth),
    ]
}

/// Random states for property checks.
pub mod sampling {
    use super::*;
    use nalgebra::Vector6;
    use rand::Rng;

    /// Arbitrary configuration and velocity, joints within limits.
    pub fn random_state<R: Rng>(model: &HopperModel, rng: &mut R) -> GeneralizedState {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let orientation = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        let q = Vector3::from_fn(|i, _| {
            rng.random_range(model.joints[i].lower..model.joints[i].upper)
        });
        let mut s = GeneralizedState::at_rest(
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..2.0),
            ),
            orientation,
            q,
        );
        s.base_twist = Vector6::from_fn(|_, _| rng.random_range(-3.0..3.0));
        s.qdot = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mass_and_limits() {
        let m = HopperModel::default();
        assert!((m.total_mass() - 12.45).abs() < 1e-12);
        assert_eq!(m.joint_lower(), [-0.4, -0.873, -0.4]);
        assert_eq!(m.joint_upper(), [2.15, 0.698, 0.4]);
        assert_eq!(m.velocity_limits(), [8.0, 12.0, 12.0]);
    }

    #[test]
    fn reference_pose_is_balanced_flat_crouch() {
        let m = HopperModel::default();
        let q0 = m.reference_pose;
        for i in 0..3 {
            assert!(q0[i] > m.joints[i].lower && q0[i] < m.joints[i].upper);
        }
        let s = m.standing_state(&q0);
        let com = crate::centroidal::center_of_mass(&m, &s);
        assert!(com.x.abs() < 1e-9 && com.y.abs() < 1e-9);
        for h in m.corner_heights(&s) {
            assert!(h.abs() < 1e-12);
        }
    }

    #[test]
    fn config_round_trip_and_rejections() {
        let m = HopperModel::default();
        let json = serde_json::to_string(&m.to_config()).unwrap();
        let back = HopperModel::new(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);

        let mut bad = ModelConfig::default();
        bad.calf.mass = 0.0;
        assert!(matches!(HopperModel::new(bad), Err(Error::Config { field, .. }) if field == "calf.mass"));

        let mut bad = ModelConfig::default();
        bad.foot.inertia[0][0] = 1.0;
        assert!(HopperModel::new(bad).is_err());
    }
}
