//! One-leg hopper simulator and training harness for flip maneuvers.

pub mod actuator;
pub mod centroidal;
pub mod check;
pub mod env;
pub mod error;
pub mod learn;
pub mod model;
pub mod rewards;
pub mod transmission;

pub use centroidal::CentroidalState;
pub use env::{EnvConfig, HopperEnv};
pub use error::{Error, Result};
pub use learn::RolloutBatch;
pub use model::{ContactRecord, GeneralizedState, HopperModel, LinkParams};
pub use rewards::RewardBreakdown;
