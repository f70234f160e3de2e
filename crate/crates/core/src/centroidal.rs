//! Centroidal momentum, composite inertia about the COM, and the centroidal
//! angular velocity `w_com = I_com⁻¹ L_com`.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::model::spatial::{ang, lin};
use crate::model::{GeneralizedState, HopperModel, Kinematics, LINK_BODY, NV};

pub type CentroidalMomentumMatrix = SMatrix<f64, 6, NV>;

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidalState {
    pub com: Vector3<f64>,
    /// Linear momentum, N·s.
    pub p_com: Vector3<f64>,
    /// Angular momentum about the COM, N·m·s.
    pub l_com: Vector3<f64>,
    /// Composite rigid-body inertia about the COM.
    pub i_com: Matrix3<f64>,
    pub v_com: Vector3<f64>,
    /// Centroidal angular velocity.
    pub w_com: Vector3<f64>,
    pub mass: f64,
}

pub fn center_of_mass(model: &HopperModel, state: &GeneralizedState) -> Vector3<f64> {
    let kin = Kinematics::new(model, state);
    com_from(model, &kin)
}

fn com_from(model: &HopperModel, kin: &Kinematics) -> Vector3<f64> {
    let weighted: Vector3<f64> = model
        .links
        .iter()
        .zip(&kin.link_com)
        .map(|(l, c)| c * l.mass)
        .sum();
    weighted / model.total_mass()
}

/// Sums per-link momenta and parallel-axis inertias about the whole-body COM.
pub fn centroidal_state(model: &HopperModel, state: &GeneralizedState) -> CentroidalState {
    let kin = Kinematics::new(model, state);
    let mass = model.total_mass();
    let com = com_from(model, &kin);
    let twists = kin.body_velocities(&state.velocity());

    let mut p_com = Vector3::zeros();
    let mut l_com = Vector3::zeros();
    let mut i_com = Matrix3::zeros();
    for (l, link) in model.links.iter().enumerate() {
        let b = LINK_BODY[l];
        let rot = kin.rotation[b];
        let omega = ang(&twists[b]);
        let c = kin.link_com[l];
        let v_c = lin(&twists[b]) + omega.cross(&(c - kin.reference));
        let ic = rot * link.inertia_matrix() * rot.transpose();
        let r = c - com;
        p_com += link.mass * v_c;
        l_com += ic * omega + r.cross(&(link.mass * v_c));
        i_com += ic + link.mass * (Matrix3::identity() * r.norm_squared() - r * r.transpose());
    }
    i_com = 0.5 * (i_com + i_com.transpose());
    let w_com = solve_inertia(&i_com, &l_com);
    if log::log_enabled!(log::Level::Trace) {
        let eig = i_com.symmetric_eigenvalues();
        log::trace!("I_com condition number {:.3e}", eig.max() / eig.min());
    }
    CentroidalState {
        com,
        p_com,
        l_com,
        i_com,
        v_com: p_com / mass,
        w_com,
        mass,
    }
}

fn solve_inertia(i_com: &Matrix3<f64>, l: &Vector3<f64>) -> Vector3<f64> {
    i_com
        .cholesky()
        .expect("composite inertia of massive links is positive definite")
        .solve(l)
}

/// Centroidal momentum matrix `A(q)` with `[p_com; L_com] = A(q) v`.
///
/// Built from composite spatial inertias (the base rows of the CRBA mass
/// matrix) and then shifted from the base origin to the COM.
pub fn cmm(model: &HopperModel, state: &GeneralizedState) -> CentroidalMomentumMatrix {
    let kin = Kinematics::new(model, state);
    let com = com_from(model, &kin);
    let ic = kin.composite_inertias();
    // Rows of h about the base origin, ordered [angular; linear].
    let mut h_base = SMatrix::<f64, 6, NV>::zeros();
    h_base.fixed_view_mut::<6, 6>(0, 0).copy_from(&ic[0]);
    for j in 0..3 {
        h_base.set_column(6 + j, &(ic[j + 1] * kin.subspace[j]));
    }
    let shift = (kin.reference - com).cross_matrix();
    let linear = h_base.fixed_rows::<3>(3).into_owned();
    let angular = h_base.fixed_rows::<3>(0) + shift * linear;
    let mut a = CentroidalMomentumMatrix::zeros();
    a.fixed_rows_mut::<3>(0).copy_from(&linear);
    a.fixed_rows_mut::<3>(3).copy_from(&angular);
    a
}

/// State at joint angles `q` whose base spins at `base_rate` about world `axis`
/// while the whole-body centroidal momentum is zero: the limbs counter-rotate
/// so their angular momentum cancels the base's.
pub fn counter_rotation_state(
    model: &HopperModel,
    q: &Vector3<f64>,
    axis: &Vector3<f64>,
    base_rate: f64,
) -> crate::Result<GeneralizedState> {
    let mut state = model.standing_state(q);
    state.base_position.z += 1.0;
    let a = cmm(model, &state);
    let omega = axis.normalize() * base_rate;
    let rhs = -(a.fixed_columns::<3>(0) * omega);
    let rest = a.fixed_columns::<6>(3).into_owned();
    // The joints cannot produce every momentum direction, so solve in the
    // least-squares sense and reject poses where no exact solution exists.
    let x = rest
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| crate::Error::InvalidArgument(e.into()))?;
    if (rest * x - rhs).norm() > 1e-10 * (1.0 + rhs.norm()) {
        return Err(crate::Error::InvalidArgument(
            "no counter-rotating velocity exists at this pose".into(),
        ));
    }
    let mut v = nalgebra::SVector::<f64, NV>::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(&omega);
    v.fixed_rows_mut::<6>(3).copy_from(&x);
    state.set_velocity(&v);
    Ok(state)
}
