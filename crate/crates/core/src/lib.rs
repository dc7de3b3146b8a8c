//! Apprenticeship learning in large MDPs with linearly parameterized
//! occupancy measures, trained by projected stochastic subgradient descent.

pub mod baseline;
mod dvec_serde;
pub mod envs;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod expert;
pub mod extract;
pub mod features;
pub mod lp;
pub mod mdp;
pub mod sgd;
pub mod verify;

pub use error::{Error, Result};
