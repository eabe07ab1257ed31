//! Routine-following mobility with disease and quarantine overrides.

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::population::{Agent, DiseaseState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Location {
    /// Flat grid index `y * grid_size + x`.
    Cell(u32),
    Home(u32),
}

impl Location {
    /// Dense index over cells followed by homes.
    pub fn dense_index(self, n_cells: usize) -> usize {
        match self {
            Location::Cell(c) => c as usize,
            Location::Home(h) => n_cells + h as usize,
        }
    }

    pub fn is_home(self) -> bool {
        matches!(self, Location::Home(_))
    }
}

/// Routine slot for a daytime step: `((day * phase) mod K + tau) mod K`.
pub fn routine_index(phase: u32, day: u32, tau: usize, routine_len: usize) -> usize {
    let k = routine_len as u64;
    let offset = (u64::from(day) * u64::from(phase)) % k;
    ((offset + tau as u64) % k) as usize
}

pub fn nominal_location(agent: &Agent, day: u32, tau: usize, config: &SimConfig) -> Location {
    if tau >= config.day_steps {
        return Location::Home(agent.home);
    }
    let j = routine_index(agent.phase, day, tau, agent.routine.len());
    Location::Cell(agent.routine[j])
}

/// Home when homebound by load (strictly above the threshold) or quarantined
/// on `day`; the nominal location otherwise.
pub fn effective_location(
    agent: &Agent,
    day: u32,
    tau: usize,
    viral_load: f64,
    config: &SimConfig,
) -> Location {
    let homebound = agent.state == DiseaseState::I && viral_load > config.homebound_thr;
    let quarantined = agent.quarantined_day == Some(day);
    if homebound || quarantined {
        Location::Home(agent.home)
    } else {
        nominal_location(agent, day, tau, config)
    }
}
