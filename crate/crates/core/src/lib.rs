//! Deterministic agent-based epidemic simulation with a Koopman early-warning
//! pipeline and counterfactual single-agent quarantine search.

pub mod chart;
pub mod config;
pub mod curves;
pub mod dataset;
pub mod earlywarn;
pub mod error;
pub mod intervention;
pub mod koopman;
pub mod mobility;
pub mod observables;
pub mod pipeline;
pub mod population;
pub mod rng;
pub mod sim;

pub use config::{Immunity, SimConfig};
pub use error::{Error, Result};
pub use observables::{DailyRecord, Outcome, Trajectory};
pub use sim::{run_simulation, InterventionSpec, Simulator};
