//! Agents and seeded population initialization.

use serde::{Deserialize, Serialize};

use crate::config::{Immunity, SimConfig};
use crate::error::Result;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiseaseState {
    S,
    I,
    R,
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u32,
    /// Home index in `0..n_homes`.
    pub home: u32,
    /// Routine cells as flat grid indices `y * grid_size + x`, pairwise distinct.
    pub routine: Vec<u32>,
    /// Daily routine shift in `1..routine_len` (0 only when `routine_len == 1`).
    pub phase: u32,
    pub susceptibility: f64,
    pub immunity: Immunity,
    pub state: DiseaseState,
    /// Step of infection; kept after recovery or death.
    pub infected_at: Option<u64>,
    /// Day on which an imposed quarantine keeps the agent at home.
    pub quarantined_day: Option<u32>,
}

impl Agent {
    pub fn is_alive(&self) -> bool {
        self.state != DiseaseState::D
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub agents: Vec<Agent>,
    pub index_case: u32,
}

/// Draws a population from `config.seed`.
///
/// Draw order is block-wise: all homes, then all routines, susceptibilities,
/// immunity categories and phases (each in agent order), then the index case.
/// Routines are drawn by rejection: uniform cells are drawn and duplicates
/// discarded until the routine holds `routine_len` cells.
pub fn init_population(config: &SimConfig) -> Result<PopulationState> {
    config.validate()?;
    let n = config.n_agents;
    let mut rng = SimRng::from_seed(config.seed);

    let homes: Vec<u32> = (0..n).map(|_| rng.below(config.n_homes as u32)).collect();

    let n_cells = config.n_cells() as u32;
    let routines: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            let mut cells = Vec::with_capacity(config.routine_len);
            while cells.len() < config.routine_len {
                let c = rng.below(n_cells);
                if !cells.contains(&c) {
                    cells.push(c);
                }
            }
            cells
        })
        .collect();

    let susceptibility: Vec<f64> = (0..n)
        .map(|_| rng.uniform(config.s_lo, config.s_hi))
        .collect();

    let immunity: Vec<Immunity> = (0..n)
        .map(|_| {
            let u = rng.unit_f64();
            let mut acc = 0.0;
            for (cat, p) in Immunity::ALL.into_iter().zip(config.immunity_probs) {
                acc += p;
                if u < acc {
                    return cat;
                }
            }
            // Rounding leaves `acc` a hair under 1; fall back to the last
            // category with positive mass.
            Immunity::ALL
                .into_iter()
                .zip(config.immunity_probs)
                .filter(|(_, p)| *p > 0.0)
                .map(|(c, _)| c)
                .last()
                .unwrap_or(Immunity::Compromised)
        })
        .collect();

    let phases: Vec<u32> = (0..n)
        .map(|_| {
            if config.routine_len > 1 {
                1 + rng.below(config.routine_len as u32 - 1)
            } else {
                0
            }
        })
        .collect();

    let index_case = rng.below(n as u32);

    let agents = (0..n)
        .map(|i| {
            let infected = i as u32 == index_case;
            Agent {
                id: i as u32,
                home: homes[i],
                routine: routines[i].clone(),
                phase: phases[i],
                susceptibility: susceptibility[i],
                immunity: immunity[i],
                state: if infected {
                    DiseaseState::I
                } else {
                    DiseaseState::S
                },
                infected_at: infected.then_some(0),
                quarantined_day: None,
            }
        })
        .collect();

    Ok(PopulationState { agents, index_case })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn reference_population_shape() {
        let cfg = SimConfig {
            seed: 11,
            ..SimConfig::default()
        };
        let pop = init_population(&cfg).unwrap();
        assert_eq!(pop.agents.len(), 500);
        let infected: Vec<_> = pop
            .agents
            .iter()
            .filter(|a| a.state == DiseaseState::I)
            .collect();
        assert_eq!(infected.len(), 1);
        assert_eq!(infected[0].id, pop.index_case);
        assert_eq!(infected[0].infected_at, Some(0));
        for a in &pop.agents {
            let set: HashSet<_> = a.routine.iter().collect();
            assert_eq!(set.len(), 10);
            assert!(a.routine.iter().all(|&c| c < 2500));
            assert!((1..=9).contains(&a.phase));
            assert!(a.home < 200);
            assert!(a.susceptibility >= 0.5 && a.susceptibility <= 1.5);
            if a.id != pop.index_case {
                assert_eq!(a.state, DiseaseState::S);
                assert_eq!(a.infected_at, None);
            }
        }
    }

    #[test]
    fn single_agent_is_index_case() {
        let cfg = SimConfig {
            n_agents: 1,
            ..SimConfig::default()
        };
        let pop = init_population(&cfg).unwrap();
        assert_eq!(pop.index_case, 0);
        assert_eq!(pop.agents[0].state, DiseaseState::I);
    }

    #[test]
    fn same_seed_same_population() {
        let cfg = SimConfig {
            seed: 99,
            ..SimConfig::default()
        };
        assert_eq!(init_population(&cfg).unwrap(), init_population(&cfg).unwrap());
        let other = SimConfig { seed: 100, ..cfg.clone() };
        assert_ne!(init_population(&cfg).unwrap(), init_population(&other).unwrap());
    }

    #[test]
    fn full_grid_routine_is_a_permutation() {
        let cfg = SimConfig {
            n_agents: 3,
            grid_size: 3,
            routine_len: 9,
            ..SimConfig::default()
        };
        let pop = init_population(&cfg).unwrap();
        for a in &pop.agents {
            let mut r = a.routine.clone();
            r.sort_unstable();
            assert_eq!(r, (0..9).collect::<Vec<_>>());
        }
    }

    #[test]
    fn too_long_routine_is_rejected() {
        let cfg = SimConfig {
            grid_size: 2,
            routine_len: 5,
            ..SimConfig::default()
        };
        assert!(init_population(&cfg).is_err());
    }

    #[test]
    fn immunity_frequencies_follow_probs() {
        let cfg = SimConfig {
            n_agents: 20_000,
            seed: 3,
            ..SimConfig::default()
        };
        let pop = init_population(&cfg).unwrap();
        let mut counts = [0usize; 4];
        for a in &pop.agents {
            counts[a.immunity.index()] += 1;
        }
        for (c, p) in counts.iter().zip(cfg.immunity_probs) {
            let f = *c as f64 / 20_000.0;
            assert!((f - p).abs() < 0.015, "{f} vs {p}");
        }
    }
}
