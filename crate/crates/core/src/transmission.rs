//! Joint load induced by contact impulses, averaged over a control interval,
//! and the probabilistic overload termination built on it.

use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ContactRecord;

/// Actuated-joint rows of `Σ Jᵀ λ / Δt_sim` over active contacts.
pub fn instantaneous_load(contacts: &[ContactRecord], dt_sim: f64) -> Vector3<f64> {
    assert!(dt_sim > 0.0, "dt_sim must be positive");
    contacts
        .iter()
        .filter(|c| c.active)
        .map(|c| {
            let generalized = c.jacobian.transpose() * c.impulse();
            generalized.fixed_rows::<3>(6).into_owned()
        })
        .sum::<Vector3<f64>>()
        / dt_sim
}

/// Running mean of `|τ_inst|` over the substeps of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadAccumulator {
    pub sum_abs_tau: Vector3<f64>,
    pub substeps: usize,
    expected: usize,
}

impl LoadAccumulator {
    pub fn new(expected_substeps: usize) -> Self {
        assert!(expected_substeps > 0);
        LoadAccumulator {
            sum_abs_tau: Vector3::zeros(),
            substeps: 0,
            expected: expected_substeps,
        }
    }

    pub fn record(&mut self, tau_inst: &Vector3<f64>) {
        self.sum_abs_tau += tau_inst.abs();
        self.substeps += 1;
    }

    /// Returns `τ_load` and clears the accumulator for the next interval.
    pub fn finalize(&mut self) -> Result<Vector3<f64>> {
        if self.substeps != self.expected {
            return Err(Error::IncompleteAccumulation {
                recorded: self.substeps,
                expected: self.expected,
            });
        }
        let tau_load = self.sum_abs_tau / self.substeps as f64;
        self.sum_abs_tau = Vector3::zeros();
        self.substeps = 0;
        Ok(tau_load)
    }
}

/// Mean absolute load over a complete control interval.
pub fn accumulate_and_finalize(per_substep: &[Vector3<f64>], expected: usize) -> Result<Vector3<f64>> {
    let mut acc = LoadAccumulator::new(expected);
    for tau in per_substep {
        acc.record(tau);
    }
    acc.finalize()
}

/// Whether any component strictly exceeds `threshold`.
pub fn is_overloaded(tau_load: &Vector3<f64>, threshold: f64) -> bool {
    tau_load.iter().any(|t| t.abs() > threshold)
}

/// Terminates with probability ½ when any joint is overloaded.
pub fn overload_termination<R: Rng + ?Sized>(tau_load: &Vector3<f64>, threshold: f64, rng: &mut R) -> bool {
    assert!(threshold > 0.0, "threshold must be positive");
    is_overloaded(tau_load, threshold) && rng.random_bool(0.5)
}
