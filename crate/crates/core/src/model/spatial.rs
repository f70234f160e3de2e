//! Spatial (6D) vector helpers. Motion vectors are `[angular; linear]`,
//! force vectors are `[moment; force]`, all expressed in a world-aligned
//! frame whose origin is the current base position.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

pub fn ang(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(0).into_owned()
}

pub fn lin(v: &Vector6<f64>) -> Vector3<f64> {
    v.fixed_rows::<3>(3).into_owned()
}

pub fn join(a: &Vector3<f64>, l: &Vector3<f64>) -> Vector6<f64> {
    Vector6::new(a.x, a.y, a.z, l.x, l.y, l.z)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Motion cross product `v × m`.
pub fn cross_motion(v: &Vector6<f64>, m: &Vector6<f64>) -> Vector6<f64> {
    let (w, u) = (ang(v), lin(v));
    let (a, b) = (ang(m), lin(m));
    join(&w.cross(&a), &(w.cross(&b) + u.cross(&a)))
}

/// Force cross product `v ×* f`.
pub fn cross_force(v: &Vector6<f64>, f: &Vector6<f64>) -> Vector6<f64> {
    let (w, u) = (ang(v), lin(v));
    let (n, g) = (ang(f), lin(f));
    join(&(w.cross(&n) + u.cross(&g)), &w.cross(&g))
}

/// Spatial inertia of a body with mass `m`, COM at `c` relative to the frame
/// origin and rotational inertia `ic` about the COM (world-aligned).
pub fn spatial_inertia(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Matrix6<f64> {
    let cx = skew(c);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(ic + m * cx * cx.transpose()));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(m * cx));
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(m * cx.transpose()));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * m));
    out
}
