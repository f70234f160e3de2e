use nalgebra::Vector3;
use rand::Rng;

use super::config::{Randomization, Range};
use crate::error::Result;
use crate::model::{ContactParams, HopperModel};

/// Physical parameters drawn for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeParams {
    pub mass_scale: f64,
    pub inertia_scale: [f64; 3],
    pub com_shift: [Vector3<f64>; 3],
    pub pd_gain_scale: [f64; 3],
    pub joint_friction: [f64; 3],
    pub ground_friction: f64,
    pub restitution: f64,
}

pub fn uniform<R: Rng + ?Sized>(range: Range, rng: &mut R) -> f64 {
    let [lo, hi] = range;
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn symmetric<R: Rng + ?Sized>(half_width: f64, rng: &mut R) -> f64 {
    uniform([-half_width, half_width], rng)
}

pub fn sample_params<R: Rng + ?Sized>(r: &Randomization, rng: &mut R) -> EpisodeParams {
    let mass_scale = uniform(r.mass_scale, rng);
    let inertia_scale = std::array::from_fn(|_| uniform(r.inertia_scale, rng));
    let com_shift = std::array::from_fn(|_| {
        Vector3::new(
            symmetric(r.com_shift, rng),
            symmetric(r.com_shift, rng),
            symmetric(r.com_shift, rng),
        )
    });
    let pd_gain_scale = std::array::from_fn(|_| uniform(r.pd_gain_scale, rng));
    let joint_friction = [
        uniform(r.knee_friction, rng),
        uniform(r.ankle_friction, rng),
        uniform(r.ankle_friction, rng),
    ];
    EpisodeParams {
        mass_scale,
        inertia_scale,
        com_shift,
        pd_gain_scale,
        joint_friction,
        ground_friction: uniform(r.ground_friction, rng),
        restitution: uniform(r.restitution, rng),
    }
}

/// Copy of `nominal` with the sampled parameters applied. Inertia tensors
/// scale with both the mass scale and their own per-link scale, so a link
/// made heavier is also harder to spin. The reference pose is kept.
pub fn apply(nominal: &HopperModel, p: &EpisodeParams) -> Result<HopperModel> {
    let mut cfg = nominal.to_config();
    for (l, link) in [&mut cfg.thigh, &mut cfg.calf, &mut cfg.foot]
        .into_iter()
        .enumerate()
    {
        link.mass *= p.mass_scale;
        let s = p.mass_scale * p.inertia_scale[l];
        for row in link.inertia.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        for (c, d) in link.com_offset.iter_mut().zip(p.com_shift[l].iter()) {
            *c += d;
        }
    }
    for j in 0..3 {
        cfg.actuators.gains.kp[j] *= p.pd_gain_scale[j];
        cfg.actuators.gains.kd[j] *= p.pd_gain_scale[j];
    }
    cfg.actuators.coulomb_friction = p.joint_friction;
    cfg.contact.friction_mu = p.ground_friction;
    cfg.contact.damping_ratio = ContactParams::damping_ratio_for_restitution(p.restitution);
    HopperModel::new(cfg)
}
