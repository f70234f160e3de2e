//! Kinematics, composite-rigid-body mass matrix and recursive Newton–Euler
//! bias forces for the serial hopper chain.
//!
//! The tree has four bodies: thigh (floating base), calf, a massless ankle
//! yoke between the pitch and roll axes, and the foot. Joint `j` connects
//! body `j` to body `j + 1`, so the ancestors of any body are exactly the
//! bodies with smaller index.
//!
//! All spatial quantities are expressed in a world-aligned frame whose origin
//! coincides with the base position at the instant of evaluation. With that
//! choice the base's motion subspace is the identity.

use nalgebra::{Matrix3, Matrix6, Rotation3, SMatrix, SVector, Unit, Vector3, Vector6};

use super::spatial::{ang, cross_force, cross_motion, join, lin, spatial_inertia};
use super::{GeneralizedState, HopperModel, NV};

pub const NUM_BODIES: usize = 4;
pub const FOOT_BODY: usize = 3;

/// Body index carrying each of the three physical links.
pub const LINK_BODY: [usize; 3] = [0, 1, 3];

pub type MassMatrix = SMatrix<f64, NV, NV>;
pub type GenVector = SVector<f64, NV>;
pub type PointJacobian = SMatrix<f64, 3, NV>;

/// Forward kinematics of one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// Base position; origin of every spatial quantity below.
    pub reference: Vector3<f64>,
    pub rotation: [Matrix3<f64>; NUM_BODIES],
    pub origin: [Vector3<f64>; NUM_BODIES],
    /// Joint motion subspaces.
    pub subspace: [Vector6<f64>; 3],
    /// Spatial inertia of each body about `reference`; zero for the yoke.
    pub inertia: [Matrix6<f64>; NUM_BODIES],
    /// World position of each physical link COM.
    pub link_com: [Vector3<f64>; 3],
}

impl Kinematics {
    pub fn new(model: &HopperModel, state: &GeneralizedState) -> Self {
        let p = state.base_position;
        let mut rotation = [Matrix3::identity(); NUM_BODIES];
        let mut origin = [Vector3::zeros(); NUM_BODIES];
        let mut subspace = [Vector6::zeros(); 3];
        rotation[0] = *state.base_orientation.to_rotation_matrix().matrix();
        origin[0] = p;
        for j in 0..3 {
            let parent = j;
            let offset = model.joint_offset(j);
            let axis_local = Unit::new_normalize(Vector3::from(model.joints[j].axis));
            origin[j + 1] = origin[parent] + rotation[parent] * offset;
            rotation[j + 1] =
                rotation[parent] * Rotation3::from_axis_angle(&axis_local, state.q[j]).matrix();
            let axis = rotation[j + 1] * axis_local.into_inner();
            subspace[j] = join(&axis, &axis.cross(&(p - origin[j + 1])));
        }
        let mut inertia = [Matrix6::zeros(); NUM_BODIES];
        let mut link_com = [Vector3::zeros(); 3];
        for (l, link) in model.links.iter().enumerate() {
            let b = LINK_BODY[l];
            let r = rotation[b];
            let com = origin[b] + r * link.com();
            let ic = r * link.inertia_matrix() * r.transpose();
            inertia[b] = spatial_inertia(link.mass, &(com - p), &ic);
            link_com[l] = com;
        }
        Kinematics {
            reference: p,
            rotation,
            origin,
            subspace,
            inertia,
            link_com,
        }
    }

    pub fn foot_point(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin[FOOT_BODY] + self.rotation[FOOT_BODY] * local
    }

    /// World direction of joint `j`'s axis.
    pub fn joint_axis(&self, j: usize) -> Vector3<f64> {
        ang(&self.subspace[j])
    }

    /// World position of joint `j`'s pivot.
    pub fn joint_position(&self, j: usize) -> Vector3<f64> {
        self.origin[j + 1]
    }

    /// Spatial velocity of every body given generalized velocity `v`.
    pub fn body_velocities(&self, v: &GenVector) -> [Vector6<f64>; NUM_BODIES] {
        let mut out = [Vector6::zeros(); NUM_BODIES];
        out[0] = v.fixed_rows::<6>(0).into_owned();
        for j in 0..3 {
            out[j + 1] = out[j] + self.subspace[j] * v[6 + j];
        }
        out
    }

    /// Jacobian of the world velocity of a point rigidly attached to `body`.
    pub fn point_jacobian(&self, body: usize, x: &Vector3<f64>) -> PointJacobian {
        let r = x - self.reference;
        let mut jac = PointJacobian::zeros();
        // Base angular columns: e_i × r; linear columns: identity.
        jac.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(-r.cross_matrix()));
        jac.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&Matrix3::identity());
        for j in 0..body.min(3) {
            let s = &self.subspace[j];
            jac.set_column(6 + j, &(lin(s) + ang(s).cross(&r)));
        }
        jac
    }

    /// Composite inertias: `ic[b]` is the sum over body `b` and its descendants.
    pub fn composite_inertias(&self) -> [Matrix6<f64>; NUM_BODIES] {
        let mut ic = self.inertia;
        for b in (0..NUM_BODIES - 1).rev() {
            let child = ic[b + 1];
            ic[b] += child;
        }
        ic
    }
}

/// Generalized inertia via the composite-rigid-body algorithm.
pub fn mass_matrix(model: &HopperModel, state: &GeneralizedState) -> MassMatrix {
    mass_matrix_from(&Kinematics::new(model, state))
}

pub fn mass_matrix_from(kin: &Kinematics) -> MassMatrix {
    let ic = kin.composite_inertias();
    let mut m = MassMatrix::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&ic[0]);
    for j in 0..3 {
        let f = ic[j + 1] * kin.subspace[j];
        m[(6 + j, 6 + j)] = kin.subspace[j].dot(&f);
        for k in 0..j {
            let v = kin.subspace[k].dot(&f);
            m[(6 + k, 6 + j)] = v;
            m[(6 + j, 6 + k)] = v;
        }
        m.fixed_view_mut::<6, 1>(0, 6 + j).copy_from(&f);
        m.fixed_view_mut::<1, 6>(6 + j, 0).copy_from(&f.transpose());
    }
    m
}

/// Coriolis, centrifugal and gravity terms `c(q, v)` such that
/// `M v̇ = τ + Jᵀ F − c`.
pub fn bias_forces(model: &HopperModel, state: &GeneralizedState) -> GenVector {
    bias_forces_from(&Kinematics::new(model, state), state, &model.gravity)
}

pub fn bias_forces_from(
    kin: &Kinematics,
    state: &GeneralizedState,
    gravity: &Vector3<f64>,
) -> GenVector {
    let omega = state.base_angular_velocity();
    let pdot = state.base_linear_velocity();
    let mut vel = [Vector6::zeros(); NUM_BODIES];
    let mut acc = [Vector6::zeros(); NUM_BODIES];
    vel[0] = state.base_twist;
    // Base coordinates are (ω, ṗ) of a moving reference point; in the fixed
    // frame coincident with p this contributes -ω × ṗ to the spatial
    // acceleration. Gravity enters as a fictitious upward acceleration.
    acc[0] = join(&Vector3::zeros(), &(-omega.cross(&pdot) - gravity));
    for j in 0..3 {
        let vj = kin.subspace[j] * state.qdot[j];
        vel[j + 1] = vel[j] + vj;
        acc[j + 1] = acc[j] + cross_motion(&vel[j + 1], &vj);
    }
    let mut force = [Vector6::zeros(); NUM_BODIES];
    for b in 0..NUM_BODIES {
        let i = &kin.inertia[b];
        force[b] = i * acc[b] + cross_force(&vel[b], &(i * vel[b]));
    }
    for b in (0..NUM_BODIES - 1).rev() {
        let child = force[b + 1];
        force[b] += child;
    }
    let mut c = GenVector::zeros();
    c.fixed_rows_mut::<6>(0).copy_from(&force[0]);
    for j in 0..3 {
        c[6 + j] = kin.subspace[j].dot(&force[j + 1]);
    }
    c
}

pub fn kinetic_energy(model: &HopperModel, state: &GeneralizedState) -> f64 {
    let v = state.velocity();
    0.5 * v.dot(&(mass_matrix(model, state) * v))
}

pub fn potential_energy(model: &HopperModel, state: &GeneralizedState) -> f64 {
    let kin = Kinematics::new(model, state);
    model
        .links
        .iter()
        .zip(&kin.link_com)
        .map(|(link, c)| -link.mass * model.gravity.dot(c))
        .sum()
}

pub fn total_energy(model: &HopperModel, state: &GeneralizedState) -> f64 {
    kinetic_energy(model, state) + potential_energy(model, state)
}
