//! Heavy-traffic dynamic pricing and dispatch for a closed ride-hailing
//! network: static planning, workload reduction, the drift-control Bellman
//! equation, the resulting policies, and a seeded network simulator.

pub mod bellman;
pub mod cli;
pub mod diffusion;
pub mod error;
pub mod model;
pub mod policies;
pub mod sim;
pub mod static_plan;
pub mod stats;

pub use error::{Error, Result};
