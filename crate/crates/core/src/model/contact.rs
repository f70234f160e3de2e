//! Compliant ground contact at the four sole corners.
//!
//! Normal force is a unilateral spring-damper whose damping ramps in over
//! the first `damping_ramp_depth` of penetration; tangential force is Coulomb
//! friction regularized by `tanh(|u_t| / slip_velocity)`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use super::{GeneralizedState, HopperModel, Kinematics, PointJacobian, FOOT_BODY};

#[derive(Debug, Clone, PartialEq)]
pub struct ContactRecord {
    pub point: Vector3<f64>,
    pub normal_impulse: f64,
    pub tangential_impulse: Vector2<f64>,
    pub jacobian: PointJacobian,
    pub active: bool,
}

impl ContactRecord {
    /// Impulse on the robot as a world 3-vector.
    pub fn impulse(&self) -> Vector3<f64> {
        Vector3::new(
            self.tangential_impulse.x,
            self.tangential_impulse.y,
            self.normal_impulse,
        )
    }

    pub(crate) fn from_force(
        point: Vector3<f64>,
        jacobian: PointJacobian,
        force: &Vector3<f64>,
        active: bool,
        dt: f64,
    ) -> Self {
        let (normal, tangential) = if active {
            (force.z * dt, Vector2::new(force.x, force.y) * dt)
        } else {
            (0.0, Vector2::zeros())
        };
        ContactRecord {
            point,
            normal_impulse: normal,
            tangential_impulse: tangential,
            jacobian,
            active,
        }
    }
}

/// Force on one corner and its sensitivities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerForce {
    pub force: Vector3<f64>,
    /// ∂F/∂u, u the corner velocity.
    pub d_velocity: Matrix3<f64>,
    /// ∂F/∂x, x the corner position.
    pub d_position: Matrix3<f64>,
    pub active: bool,
}

impl CornerForce {
    const INACTIVE: CornerForce = CornerForce {
        force: Vector3::new(0.0, 0.0, 0.0),
        d_velocity: Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        d_position: Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        active: false,
    };
}

/// Resolved per-corner contact constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ContactLaw {
    pub stiffness: f64,
    pub damping: f64,
    pub ramp: f64,
    pub mu: f64,
    pub slip_velocity: f64,
}

impl ContactLaw {
    pub fn new(model: &HopperModel, mu: f64) -> Self {
        let c = &model.contact;
        ContactLaw {
            stiffness: c.stiffness,
            damping: c.damping_ratio * 2.0 * (c.stiffness * model.links[2].mass).sqrt(),
            ramp: c.damping_ramp_depth,
            mu,
            slip_velocity: c.slip_velocity,
        }
    }

    /// Force at penetration `depth` (positive into the ground) and corner velocity `u`.
    pub fn evaluate(&self, depth: f64, u: &Vector3<f64>) -> CornerForce {
        if depth <= 0.0 {
            return CornerForce::INACTIVE;
        }
        let (s, ds) = if depth < self.ramp {
            (depth / self.ramp, 1.0 / self.ramp)
        } else {
            (1.0, 0.0)
        };
        let raw = self.stiffness * depth - self.damping * s * u.z;
        if raw <= 0.0 {
            return CornerForce {
                active: true,
                ..CornerForce::INACTIVE
            };
        }
        let fn_ = raw;
        let dfn_du_z = -self.damping * s;
        // depth = -x_z
        let dfn_dx_z = -(self.stiffness - self.damping * ds * u.z);

        let ut = Vector2::new(u.x, u.y);
        let sigma = ut.norm();
        let vs = self.slip_velocity;
        let (g, dg_over_sigma) = if sigma * 1e4 < vs {
            (1.0 / vs, -2.0 / (3.0 * vs.powi(3)))
        } else {
            let th = (sigma / vs).tanh();
            let sech2 = 1.0 - th * th;
            let g = th / sigma;
            (g, (sech2 / (vs * sigma) - g / sigma) / sigma)
        };
        let ft = -self.mu * fn_ * g * ut;

        let mut d_velocity = Matrix3::zeros();
        let dgu = Matrix2::identity() * g
            + ut * ut.transpose() * dg_over_sigma;
        d_velocity
            .fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&(-self.mu * fn_ * dgu));
        let ft_per_fn = -self.mu * g * ut;
        d_velocity[(0, 2)] = ft_per_fn.x * dfn_du_z;
        d_velocity[(1, 2)] = ft_per_fn.y * dfn_du_z;
        d_velocity[(2, 2)] = dfn_du_z;

        let mut d_position = Matrix3::zeros();
        d_position[(0, 2)] = ft_per_fn.x * dfn_dx_z;
        d_position[(1, 2)] = ft_per_fn.y * dfn_dx_z;
        d_position[(2, 2)] = dfn_dx_z;

        CornerForce {
            force: Vector3::new(ft.x, ft.y, fn_),
            d_velocity,
            d_position,
            active: true,
        }
    }
}

/// Force law at one corner of `model` with friction coefficient `mu`.
pub fn corner_force(model: &HopperModel, mu: f64, depth: f64, velocity: &Vector3<f64>) -> CornerForce {
    ContactLaw::new(model, mu).evaluate(depth, velocity)
}

/// Evaluates the contact law at every sole corner for the current state.
///
/// Impulses are the instantaneous forces held over `dt_sim`.
pub fn contact_resolve(
    model: &HopperModel,
    state: &GeneralizedState,
    friction_mu: f64,
    dt_sim: f64,
) -> Vec<ContactRecord> {
    assert!(dt_sim > 0.0, "dt_sim must be positive");
    let kin = Kinematics::new(model, state);
    let law = ContactLaw::new(model, friction_mu);
    let v = state.velocity();
    model
        .foot_corners
        .iter()
        .map(|local| {
            let x = kin.foot_point(local);
            let jac = kin.point_jacobian(FOOT_BODY, &x);
            let u = jac * v;
            let cf = law.evaluate(-x.z, &u);
            ContactRecord::from_force(x, jac, &cf.force, cf.active, dt_sim)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::ContactParams;
    use super::*;

    fn law() -> ContactLaw {
        ContactLaw::new(&HopperModel::default(), 0.8)
    }

    #[test]
    fn airborne_corners_are_inactive() {
        let model = HopperModel::default();
        let mut s = model.standing_state(&model.reference_pose);
        s.base_position.z += 0.05;
        let recs = contact_resolve(&model, &s, 0.8, 0.002);
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert!(!r.active);
            assert_eq!(r.impulse(), Vector3::zeros());
        }
    }

    #[test]
    fn sliding_friction_saturates_at_mu_n() {
        let law = law();
        let depth = 2e-3;
        let cf = law.evaluate(depth, &Vector3::new(1.0, 0.0, 0.0));
        let n = cf.force.z;
        assert!((n - law.stiffness * depth).abs() < 1e-9);
        let t = (cf.force.x.powi(2) + cf.force.y.powi(2)).sqrt();
        assert!((t - 0.8 * n).abs() < 1e-6 * n, "{t} vs {}", 0.8 * n);
        assert!(cf.force.x < 0.0);
    }

    #[test]
    fn force_stays_in_friction_cone() {
        let law = law();
        for &(d, ux, uy, uz) in &[
            (1e-4, 0.01, -0.02, -0.3),
            (3e-3, 2.0, 1.0, 0.1),
            (1e-3, 0.0, 0.0, 0.0),
            (5e-3, -0.001, 0.0005, -1.0),
        ] {
            let f = law.evaluate(d, &Vector3::new(ux, uy, uz)).force;
            assert!(f.z >= 0.0);
            assert!((f.x * f.x + f.y * f.y).sqrt() <= 0.8 * f.z + 1e-9);
        }
    }

    #[test]
    fn analytic_sensitivities_match_finite_differences() {
        let law = law();
        let depth = 3e-4;
        let u = Vector3::new(0.04, -0.03, -0.2);
        let cf = law.evaluate(depth, &u);
        let h = 1e-7;
        for k in 0..3 {
            let mut up = u;
            let mut um = u;
            up[k] += h;
            um[k] -= h;
            let fd = (law.evaluate(depth, &up).force - law.evaluate(depth, &um).force) / (2.0 * h);
            assert!((fd - cf.d_velocity.column(k)).norm() < 1e-5 * (1.0 + fd.norm()), "col {k}");
        }
        // Moving the point up by h reduces depth by h.
        let fd = (law.evaluate(depth - h, &u).force - law.evaluate(depth + h, &u).force) / (2.0 * h);
        assert!((fd - cf.d_position.column(2)).norm() < 1e-4 * (1.0 + fd.norm()));
    }

    #[test]
    fn restitution_maps_to_damping_ratio() {
        assert_eq!(ContactParams::damping_ratio_for_restitution(0.0), 1.0);
        let z = ContactParams::damping_ratio_for_restitution(0.2);
        // Linear oscillator restitution for this damping ratio.
        let e = (-z * std::f64::consts::PI / (1.0 - z * z).sqrt()).exp();
        assert!((e - 0.2).abs() < 1e-12);
    }
}
