//! Time stepping.
//!
//! Steps that start with the sole clear of the ground use classical RK4,
//! which keeps energy errors in flight far below the step size. When no
//! contact force acted during the step the velocity is then projected so the
//! centroidal momentum matches its exact ballistic value.
//! Steps that start in contact use a linearly-implicit Euler update: the
//! stiff spring-damper and friction forces are solved for with a few Newton
//! iterations on `M (v⁺ − v) = Δt (τ − c + Σ Jᵀ F(x + Δt J v⁺, J v⁺))`, then
//! the converged forces are applied once more explicitly so the reported
//! impulses are exactly the ones the dynamics saw.
//!
//! [`step_actuated`] takes a joint torque law instead of fixed torques and
//! always uses the linearly-implicit update, folding the law's stiffness and
//! damping into the Newton system.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::contact::ContactLaw;
use super::{
    bias_forces_from, mass_matrix_from, ContactRecord, GenVector, GeneralizedState, HopperModel,
    Kinematics, MassMatrix, FOOT_BODY,
};
use crate::centroidal::cmm;
use crate::error::{Error, Result};

const NEWTON_ITERATIONS: usize = 20;

/// Advances `state` by `dt` under joint torques `tau`.
pub fn step(
    model: &HopperModel,
    state: &GeneralizedState,
    tau: &Vector3<f64>,
    dt: f64,
) -> Result<(GeneralizedState, Vec<ContactRecord>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if tau.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite joint torque {tau:?}")));
    }
    let kin = Kinematics::new(model, state);
    let law = ContactLaw::new(model, model.contact.friction_mu);
    let touching = model
        .foot_corners
        .iter()
        .any(|c| kin.foot_point(c).z < 0.0);
    let (next, records) = if touching {
        let out = implicit_step(model, &kin, state, None, tau, dt)?;
        (out.state, out.contacts)
    } else {
        rk4_step(model, &law, &kin, state, tau, dt)?
    };
    if !next.is_finite() {
        return Err(Error::Diverged {
            t: state.t,
            detail: "non-finite state after integration".into(),
        });
    }
    Ok((next, records))
}

fn generalized_torque(tau: &Vector3<f64>) -> GenVector {
    let mut g = GenVector::zeros();
    g.fixed_rows_mut::<3>(6).copy_from(tau);
    g
}

fn factor_solve(m: &MassMatrix, rhs: &GenVector, t: f64) -> Result<GenVector> {
    m.cholesky()
        .map(|c| c.solve(rhs))
        .ok_or_else(|| Error::Diverged {
            t,
            detail: "mass matrix lost positive definiteness".into(),
        })
}

struct Derivative {
    pos: Vector3<f64>,
    quat: Quaternion<f64>,
    q: Vector3<f64>,
    vel: GenVector,
    forces: [Vector3<f64>; 4],
}

fn derivative(
    model: &HopperModel,
    law: &ContactLaw,
    kin: &Kinematics,
    s: &GeneralizedState,
    tau: &GenVector,
) -> Result<Derivative> {
    let m = mass_matrix_from(kin);
    let mut f = tau - bias_forces_from(kin, s, &model.gravity);
    let v = s.velocity();
    let mut forces = [Vector3::zeros(); 4];
    for (i, local) in model.foot_corners.iter().enumerate() {
        let x = kin.foot_point(local);
        if x.z < 0.0 {
            let jac = kin.point_jacobian(FOOT_BODY, &x);
            let cf = law.evaluate(-x.z, &(jac * v));
            f += jac.transpose() * cf.force;
            forces[i] = cf.force;
        }
    }
    let omega = s.base_angular_velocity();
    Ok(Derivative {
        pos: s.base_linear_velocity(),
        quat: Quaternion::from_imag(omega * 0.5) * s.base_orientation.into_inner(),
        q: s.qdot,
        vel: factor_solve(&m, &f, s.t)?,
        forces,
    })
}

fn offset_state(s: &GeneralizedState, d: &Derivative, h: f64) -> GeneralizedState {
    let mut out = s.clone();
    out.base_position += d.pos * h;
    out.base_orientation = UnitQuaternion::new_normalize(s.base_orientation.into_inner() + d.quat * h);
    out.q += d.q * h;
    let v = s.velocity() + d.vel * h;
    out.set_velocity(&v);
    out.t += h;
    out
}

fn rk4_step(
    model: &HopperModel,
    law: &ContactLaw,
    kin: &Kinematics,
    s: &GeneralizedState,
    tau: &Vector3<f64>,
    dt: f64,
) -> Result<(GeneralizedState, Vec<ContactRecord>)> {
    let tau = generalized_torque(tau);
    let k1 = derivative(model, law, kin, s, &tau)?;
    let s2 = offset_state(s, &k1, 0.5 * dt);
    let k2 = derivative(model, law, &Kinematics::new(model, &s2), &s2, &tau)?;
    let s3 = offset_state(s, &k2, 0.5 * dt);
    let k3 = derivative(model, law, &Kinematics::new(model, &s3), &s3, &tau)?;
    let s4 = offset_state(s, &k3, dt);
    let k4 = derivative(model, law, &Kinematics::new(model, &s4), &s4, &tau)?;

    let w = dt / 6.0;
    let mut next = s.clone();
    next.base_position += (k1.pos + 2.0 * k2.pos + 2.0 * k3.pos + k4.pos) * w;
    next.base_orientation = UnitQuaternion::new_normalize(
        s.base_orientation.into_inner() + (k1.quat + k2.quat * 2.0 + k3.quat * 2.0 + k4.quat) * w,
    );
    next.q += (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q) * w;
    let v = s.velocity() + (k1.vel + 2.0 * k2.vel + 2.0 * k3.vel + k4.vel) * w;
    next.set_velocity(&v);
    next.t += dt;

    let free_flight = [&k1, &k2, &k3, &k4]
        .iter()
        .all(|k| k.forces.iter().all(|f| *f == Vector3::zeros()));
    if free_flight {
        project_momentum(model, s, &mut next, dt)?;
    }

    let records = model
        .foot_corners
        .iter()
        .enumerate()
        .map(|(i, local)| {
            let x = kin.foot_point(local);
            let jac = kin.point_jacobian(FOOT_BODY, &x);
            // Weighted stage forces: average force over the step.
            let f = (k1.forces[i] + 2.0 * k2.forces[i] + 2.0 * k3.forces[i] + k4.forces[i]) / 6.0;
            let active = [&k1, &k2, &k3, &k4].iter().any(|k| k.forces[i] != Vector3::zeros());
            ContactRecord::from_force(x, jac, &f, active, dt)
        })
        .collect();
    Ok((next, records))
}

/// Removes the RK4 truncation error from the centroidal momentum of a
/// contact-free step: linear momentum must change by exactly `m g Δt` and the
/// angular momentum about the COM must not change. The correction is the
/// smallest change of `v⁺` in the kinetic-energy metric.
fn project_momentum(
    model: &HopperModel,
    prev: &GeneralizedState,
    next: &mut GeneralizedState,
    dt: f64,
) -> Result<()> {
    let mut target = cmm(model, prev) * prev.velocity();
    let impulse = model.gravity * model.total_mass() * dt;
    for i in 0..3 {
        target[i] += impulse[i];
    }
    let a = cmm(model, next);
    let v = next.velocity();
    let m = mass_matrix_from(&Kinematics::new(model, next));
    let chol = m.cholesky().ok_or_else(|| Error::Diverged {
        t: next.t,
        detail: "mass matrix lost positive definiteness".into(),
    })?;
    let minv_at = chol.solve(&a.transpose());
    let lambda = (a * minv_at)
        .cholesky()
        .ok_or_else(|| Error::Diverged {
            t: next.t,
            detail: "singular centroidal projection".into(),
        })?
        .solve(&(target - a * v));
    next.set_velocity(&(v + minv_at * lambda));
    Ok(())
}

/// Result of [`step_actuated`].
#[derive(Debug, Clone)]
pub struct ActuatedStep {
    pub state: GeneralizedState,
    pub contacts: Vec<ContactRecord>,
    /// Joint torque that acted over the step.
    pub tau: Vector3<f64>,
    /// Joint position and velocity the torque law was evaluated at.
    pub joint_q: Vector3<f64>,
    pub joint_qdot: Vector3<f64>,
}

/// Advances `state` by `dt` with joint torques given by a state-dependent
/// law `tau(q, q̇)` in which each joint's torque depends only on its own
/// position and velocity.
///
/// The law enters the linearly-implicit update through its diagonal
/// derivatives, so stiff PD gains, friction and torque–speed limits acting on
/// the light foot stay stable at the control substep. Contact-free steps are
/// followed by the same momentum projection as ballistic RK4 steps.
pub fn step_actuated<F>(model: &HopperModel, state: &GeneralizedState, law: F, dt: f64) -> Result<ActuatedStep>
where
    F: Fn(&Vector3<f64>, &Vector3<f64>) -> Vector3<f64>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let kin = Kinematics::new(model, state);
    let law_ref: &dyn Fn(&Vector3<f64>, &Vector3<f64>) -> Vector3<f64> = &law;
    let out = implicit_step(model, &kin, state, Some(law_ref), &Vector3::zeros(), dt)?;
    if !out.state.is_finite() {
        return Err(Error::Diverged {
            t: state.t,
            detail: "non-finite state after integration".into(),
        });
    }
    Ok(out)
}

/// Per-joint derivatives of the torque law by central differences.
fn law_slopes(
    law: &dyn Fn(&Vector3<f64>, &Vector3<f64>) -> Vector3<f64>,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let mut dq = Vector3::zeros();
    let mut dv = Vector3::zeros();
    for j in 0..3 {
        let hq = 1e-7 * (1.0 + q[j].abs());
        let (mut up, mut down) = (*q, *q);
        up[j] += hq;
        down[j] -= hq;
        dq[j] = (law(&up, qdot)[j] - law(&down, qdot)[j]) / (2.0 * hq);
        let hv = 1e-7 * (1.0 + qdot[j].abs());
        let (mut up, mut down) = (*qdot, *qdot);
        up[j] += hv;
        down[j] -= hv;
        dv[j] = (law(q, &up)[j] - law(q, &down)[j]) / (2.0 * hv);
    }
    (dq, dv)
}

fn implicit_step(
    model: &HopperModel,
    kin: &Kinematics,
    s: &GeneralizedState,
    law: Option<&dyn Fn(&Vector3<f64>, &Vector3<f64>) -> Vector3<f64>>,
    tau_fixed: &Vector3<f64>,
    dt: f64,
) -> Result<ActuatedStep> {
    let contact_law = ContactLaw::new(model, model.contact.friction_mu);
    let m = mass_matrix_from(kin);
    let f = -bias_forces_from(kin, s, &model.gravity);
    let v0 = s.velocity();
    let corners: Vec<_> = model
        .foot_corners
        .iter()
        .map(|local| {
            let x = kin.foot_point(local);
            (x, kin.point_jacobian(FOOT_BODY, &x))
        })
        .collect();
    let evaluate = |v: &GenVector| {
        corners
            .iter()
            .map(|(x, jac)| {
                let u = jac * v;
                contact_law.evaluate(-(x.z + dt * u.z), &u)
            })
            .collect::<Vec<_>>()
    };

    // Joint torque at the end-of-step state implied by a velocity iterate,
    // with its slope with respect to the joint velocities (q⁺ = q + Δt q̇⁺).
    let joint_torque = |v: &GenVector| -> (Vector3<f64>, Vector3<f64>) {
        match law {
            Some(law) => {
                let qdot = v.fixed_rows::<3>(6).into_owned();
                let q = s.q + dt * qdot;
                let (dq, dv) = law_slopes(law, &q, &qdot);
                (law(&q, &qdot), dq * dt + dv)
            }
            None => (*tau_fixed, Vector3::zeros()),
        }
    };

    let residual_of = |v: &GenVector| {
        let mut r = m * (v - v0) - dt * (f + generalized_torque(&joint_torque(v).0));
        for ((_, jac), cf) in corners.iter().zip(evaluate(v)) {
            if cf.active {
                r -= dt * jac.transpose() * cf.force;
            }
        }
        r
    };

    let mut v = v0 + dt * factor_solve(&m, &(f + generalized_torque(&joint_torque(&v0).0)), s.t)?;
    let mut residual = residual_of(&v);
    for _ in 0..NEWTON_ITERATIONS {
        let forces = evaluate(&v);
        let (_, gain) = joint_torque(&v);
        let mut tangent = m;
        for j in 0..3 {
            tangent[(6 + j, 6 + j)] -= dt * gain[j];
        }
        for ((_, jac), cf) in corners.iter().zip(&forces) {
            if cf.active {
                tangent -= dt * jac.transpose() * (cf.d_velocity + dt * cf.d_position) * jac;
            }
        }
        let delta = tangent.lu().solve(&residual).ok_or_else(|| Error::Diverged {
            t: s.t,
            detail: "singular implicit Newton system".into(),
        })?;
        // Contacts switching on or off make the residual nonsmooth, so full
        // Newton steps can cycle; backtrack until the residual decreases.
        let norm = residual.norm();
        let mut alpha = 1.0;
        let (mut v_try, mut r_try) = (v - delta, residual_of(&(v - delta)));
        while r_try.norm() > (1.0 - 1e-4 * alpha) * norm && alpha > 1e-3 {
            alpha *= 0.5;
            v_try = v - alpha * delta;
            r_try = residual_of(&v_try);
        }
        v = v_try;
        residual = r_try;
        if alpha * delta.norm() < 1e-12 * (1.0 + v.norm()) {
            break;
        }
    }

    let forces = evaluate(&v);
    let joint_qdot = v.fixed_rows::<3>(6).into_owned();
    let joint_q = s.q + dt * joint_qdot;
    let tau = match law {
        Some(law) => law(&joint_q, &joint_qdot),
        None => *tau_fixed,
    };
    let mut rhs = f + generalized_torque(&tau);
    for ((_, jac), cf) in corners.iter().zip(&forces) {
        rhs += jac.transpose() * cf.force;
    }
    let v_next = v0 + dt * factor_solve(&m, &rhs, s.t)?;

    let mut next = s.clone();
    next.set_velocity(&v_next);
    next.base_position += dt * next.base_linear_velocity();
    next.base_orientation =
        UnitQuaternion::from_scaled_axis(next.base_angular_velocity() * dt) * s.base_orientation;
    next.q += dt * next.qdot;
    next.t += dt;
    if law.is_some() && forces.iter().all(|cf| !cf.active) {
        project_momentum(model, s, &mut next, dt)?;
    }

    let contacts = corners
        .iter()
        .zip(&forces)
        .map(|((x, jac), cf)| ContactRecord::from_force(*x, *jac, &cf.force, cf.active, dt))
        .collect();
    Ok(ActuatedStep {
        state: next,
        contacts,
        tau,
        joint_q,
        joint_qdot,
    })
}
