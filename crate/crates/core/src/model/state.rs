use nalgebra::{SVector, UnitQuaternion, Vector3, Vector6};

use super::NV;

/// Floating-base pose and twist plus actuated joint coordinates.
///
/// `base_twist` is `[ω; v]` in world coordinates, where `v` is the velocity
/// of the base frame origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
    pub base_twist: Vector6<f64>,
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
    pub t: f64,
}

impl GeneralizedState {
    pub fn at_rest(base_position: Vector3<f64>, base_orientation: UnitQuaternion<f64>, q: Vector3<f64>) -> Self {
        GeneralizedState {
            base_position,
            base_orientation,
            base_twist: Vector6::zeros(),
            q,
            qdot: Vector3::zeros(),
            t: 0.0,
        }
    }

    pub fn base_angular_velocity(&self) -> Vector3<f64> {
        self.base_twist.fixed_rows::<3>(0).into_owned()
    }

    pub fn base_linear_velocity(&self) -> Vector3<f64> {
        self.base_twist.fixed_rows::<3>(3).into_owned()
    }

    /// Generalized velocity `[ω; v; q̇]`.
    pub fn velocity(&self) -> SVector<f64, NV> {
        let mut v = SVector::<f64, NV>::zeros();
        v.fixed_rows_mut::<6>(0).copy_from(&self.base_twist);
        v.fixed_rows_mut::<3>(6).copy_from(&self.qdot);
        v
    }

    pub fn set_velocity(&mut self, v: &SVector<f64, NV>) {
        self.base_twist = v.fixed_rows::<6>(0).into_owned();
        self.qdot = v.fixed_rows::<3>(6).into_owned();
    }

    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|x| x.is_finite())
            && self.base_orientation.coords.iter().all(|x| x.is_finite())
            && self.base_twist.iter().all(|x| x.is_finite())
            && self.q.iter().all(|x| x.is_finite())
            && self.qdot.iter().all(|x| x.is_finite())
    }
}
