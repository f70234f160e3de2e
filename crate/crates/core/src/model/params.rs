//! Model parameters and their JSON representation.
//!
//! Every physical constant of the hopper lives here so that a single JSON
//! document (see `docs/model-config.md`) can override any of them.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::actuator::{MorEnvelope, PdGains};
use crate::error::{Error, Result};

/// Inertial description of one rigid link, expressed in the link frame.
///
/// Link frames sit at the proximal joint with the link extending along −z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub mass: f64,
    pub com_offset: [f64; 3],
    /// Rotational inertia about the link COM, kg·m².
    pub inertia: [[f64; 3]; 3],
    /// Distance from the proximal joint to the child joint (or sole), m.
    pub length: f64,
}

impl LinkParams {
    /// Solid cuboid of the given cross-section with its COM at mid-length.
    pub fn cuboid(mass: f64, length: f64, size_x: f64, size_y: f64) -> Self {
        let ixx = mass * (size_y * size_y + length * length) / 12.0;
        let iyy = mass * (size_x * size_x + length * length) / 12.0;
        let izz = mass * (size_x * size_x + size_y * size_y) / 12.0;
        LinkParams {
            mass,
            com_offset: [0.0, 0.0, -0.5 * length],
            inertia: [[ixx, 0.0, 0.0], [0.0, iyy, 0.0], [0.0, 0.0, izz]],
            length,
        }
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.inertia[r][c])
    }

    pub fn com(&self) -> Vector3<f64> {
        Vector3::from(self.com_offset)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::config(format!("{name}.mass"), "must be positive"));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::config(format!("{name}.length"), "must be positive"));
        }
        if self.com_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(format!("{name}.com_offset"), "must be finite"));
        }
        let inertia = self.inertia_matrix();
        if (inertia - inertia.transpose()).abs().max() > 1e-12 * inertia.abs().max().max(1.0) {
            return Err(Error::config(format!("{name}.inertia"), "must be symmetric"));
        }
        let eig = inertia.symmetric_eigenvalues();
        if eig.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::config(
                format!("{name}.inertia"),
                "must be positive definite",
            ));
        }
        let (a, b, c) = (eig[0], eig[1], eig[2]);
        let tol = 1e-12 * (a + b + c);
        if a + b < c - tol || a + c < b - tol || b + c < a - tol {
            return Err(Error::config(
                format!("{name}.inertia"),
                "principal moments violate the triangle inequality",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    pub name: String,
    /// Rotation axis in the child link frame (unit vector).
    pub axis: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    pub velocity_limit: f64,
}

/// Rectangular sole plate. Corners are placed at the bottom of the foot link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoleParams {
    pub length: f64,
    pub width: f64,
    /// Forward shift of the plate centre relative to the ankle axis, m.
    #[serde(default)]
    pub x_offset: f64,
}

/// Compliant ground contact constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Normal stiffness per corner, N/m.
    pub stiffness: f64,
    /// Damping ratio relative to critical damping of the foot mass on one corner spring.
    pub damping_ratio: f64,
    /// Penetration over which damping ramps from zero to full, m.
    pub damping_ramp_depth: f64,
    pub friction_mu: f64,
    /// Tangential speed scale of the tanh friction regularization, m/s.
    pub slip_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 3.0e4,
            damping_ratio: 1.0,
            damping_ramp_depth: 5.0e-4,
            friction_mu: 0.7,
            slip_velocity: 0.1,
        }
    }
}

impl ContactParams {
    /// Damping ratio that reproduces coefficient of restitution `e` for a linear
    /// spring-damper impact.
    pub fn damping_ratio_for_restitution(e: f64) -> f64 {
        if e <= 0.0 {
            return 1.0;
        }
        let ln_e = e.min(1.0).ln();
        -ln_e / (std::f64::consts::PI.powi(2) + ln_e * ln_e).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorParams {
    /// Knee, ankle pitch, ankle roll.
    pub envelopes: [MorEnvelope; 3],
    pub gains: PdGains,
    /// Coulomb joint friction, N·m. Nominally zero; randomized per episode.
    #[serde(default)]
    pub coulomb_friction: [f64; 3],
}

impl Default for ActuatorParams {
    fn default() -> Self {
        ActuatorParams {
            envelopes: [
                MorEnvelope::from_corner(45.0, 12.0, 4.0),
                MorEnvelope::from_corner(30.0, 14.0, 5.0),
                MorEnvelope::from_corner(30.0, 14.0, 5.0),
            ],
            gains: PdGains::default(),
            coulomb_friction: [0.0; 3],
        }
    }
}

/// JSON document describing the hopper. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub thigh: LinkParams,
    pub calf: LinkParams,
    pub foot: LinkParams,
    pub joints: [JointParams; 3],
    pub sole: SoleParams,
    pub gravity: [f64; 3],
    pub contact: ContactParams,
    pub actuators: ActuatorParams,
    /// Knee flexion of the standing crouch used when `reference_pose` is absent.
    pub crouch_knee: f64,
    /// Nominal joint pose θ₀. Computed from `crouch_knee` when absent.
    pub reference_pose: Option<[f64; 3]>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            thigh: LinkParams::cuboid(7.60, 0.35, 0.10, 0.12),
            calf: LinkParams::cuboid(3.89, 0.41, 0.06, 0.06),
            foot: LinkParams::cuboid(0.96, 0.08, 0.20, 0.10),
            joints: [
                JointParams {
                    name: "knee_pitch".into(),
                    axis: [0.0, 1.0, 0.0],
                    lower: -0.4,
                    upper: 2.15,
                    velocity_limit: 8.0,
                },
                JointParams {
                    name: "ankle_pitch".into(),
                    axis: [0.0, 1.0, 0.0],
                    lower: -0.873,
                    upper: 0.698,
                    velocity_limit: 12.0,
                },
                JointParams {
                    name: "ankle_roll".into(),
                    axis: [1.0, 0.0, 0.0],
                    lower: -0.4,
                    upper: 0.4,
                    velocity_limit: 12.0,
                },
            ],
            sole: SoleParams {
                length: 0.20,
                width: 0.10,
                x_offset: 0.0,
            },
            gravity: [0.0, 0.0, -9.81],
            contact: ContactParams::default(),
            actuators: ActuatorParams::default(),
            crouch_knee: 0.9,
            reference_pose: None,
        }
    }
}

impl ModelConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.thigh.validate("thigh")?;
        self.calf.validate("calf")?;
        self.foot.validate("foot")?;
        for (i, j) in self.joints.iter().enumerate() {
            let axis = Vector3::from(j.axis);
            if (axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("joints[{i}].axis"), "must be unit length"));
            }
            if !(j.lower < j.upper) {
                return Err(Error::config(format!("joints[{i}]"), "lower must be below upper"));
            }
            if !(j.velocity_limit > 0.0) {
                return Err(Error::config(
                    format!("joints[{i}].velocity_limit"),
                    "must be positive",
                ));
            }
        }
        if !(self.sole.length > 0.0 && self.sole.width > 0.0) {
            return Err(Error::config("sole", "length and width must be positive"));
        }
        let c = &self.contact;
        if !(c.stiffness > 0.0
            && c.damping_ratio >= 0.0
            && c.damping_ramp_depth > 0.0
            && c.friction_mu >= 0.0
            && c.slip_velocity > 0.0)
        {
            return Err(Error::config(
                "contact",
                "stiffness, ramp depth and slip velocity must be positive; damping and mu non-negative",
            ));
        }
        for (i, env) in self.actuators.envelopes.iter().enumerate() {
            env.validate()
                .map_err(|reason| Error::config(format!("actuators.envelopes[{i}]"), reason))?;
        }
        self.actuators
            .gains
            .validate()
            .map_err(|reason| Error::config("actuators.gains", reason))?;
        if self.actuators.coulomb_friction.iter().any(|&f| !(f >= 0.0)) {
            return Err(Error::config(
                "actuators.coulomb_friction",
                "must be non-negative",
            ));
        }
        if let Some(pose) = self.reference_pose {
            for (i, (&p, j)) in pose.iter().zip(&self.joints).enumerate() {
                if p < j.lower || p > j.upper {
                    return Err(Error::config(
                        format!("reference_pose[{i}]"),
                        "outside joint limits",
                    ));
                }
            }
        }
        Ok(())
    }
}
