//! Day-structured simulation engine.
//!
//! Each day runs `day_steps` movement steps followed by `night_steps` home
//! steps. Every step refreshes loads, places agents, evaluates transmission
//! on a start-of-step snapshot (daytime grid cells, plus homes when home
//! transmission is enabled), then removes agents whose load exceeds the
//! death threshold. Recovery is checked once, at the final step of the day.

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::curves::{CurveSet, LoadTable};
use crate::error::{Error, Result};
use crate::mobility::{effective_location, Location};
use crate::observables::{aggregate_day, DailyRecord, DayEvents, Trajectory};
use crate::population::{init_population, Agent, DiseaseState, PopulationState};

/// Keeps one agent at home for one whole day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub agent: u32,
    pub day: u32,
}

impl InterventionSpec {
    pub fn validate(&self, config: &SimConfig) -> Result<()> {
        if self.agent as usize >= config.n_agents {
            return Err(Error::InvalidIntervention(format!(
                "agent {} outside [0, {})",
                self.agent, config.n_agents
            )));
        }
        if self.day as usize >= config.horizon_days {
            return Err(Error::InvalidIntervention(format!(
                "day {} outside [0, {})",
                self.day, config.horizon_days
            )));
        }
        Ok(())
    }
}

/// Hook invoked on every step where transmission is evaluated, after
/// placement and before infections are applied.
pub trait StepObserver {
    fn on_contacts(&mut self, _day: u32, _state: &StepState<'_>) {}
}

impl StepObserver for () {}

/// Mutable per-step simulation state.
pub struct StepState<'a> {
    pub config: &'a SimConfig,
    pub agents: Vec<Agent>,
    /// `v_i(t)`; zero for every agent not in state I.
    pub loads: Vec<f64>,
    /// `None` for dead agents.
    pub locations: Vec<Option<Location>>,
    pub step: u64,
    scratch: Vec<f64>,
    touched: Vec<usize>,
}

impl<'a> StepState<'a> {
    pub fn new(config: &'a SimConfig, agents: Vec<Agent>) -> Self {
        let n = agents.len();
        Self {
            config,
            agents,
            loads: vec![0.0; n],
            locations: vec![None; n],
            step: 0,
            scratch: vec![f64::NEG_INFINITY; config.n_cells() + config.n_homes],
            touched: Vec::new(),
        }
    }

    pub fn day(&self) -> u32 {
        (self.step / self.config.steps_per_day() as u64) as u32
    }

    pub fn tau(&self) -> usize {
        (self.step % self.config.steps_per_day() as u64) as usize
    }

    pub fn refresh_loads(&mut self, table: &LoadTable) {
        let t = self.step;
        for (a, v) in self.agents.iter().zip(self.loads.iter_mut()) {
            *v = match (a.state, a.infected_at) {
                (DiseaseState::I, Some(t0)) => table.load(a.immunity, t - t0),
                _ => 0.0,
            };
        }
    }

    pub fn place_agents(&mut self) {
        let (day, tau) = (self.day(), self.tau());
        for ((a, &v), loc) in self
            .agents
            .iter()
            .zip(&self.loads)
            .zip(self.locations.iter_mut())
        {
            *loc = a
                .is_alive()
                .then(|| effective_location(a, day, tau, v, self.config));
        }
    }

    pub fn is_transmission_location(&self, loc: Location) -> bool {
        !loc.is_home() || self.config.home_transmission
    }

    /// Infects every susceptible whose co-located infected sources include
    /// one with `load * susceptibility > theta_tr`. Uses the states at step
    /// start, so agents infected here do not transmit until the next step.
    /// Returns the newly infected agent ids in ascending order.
    pub fn transmission_step(&mut self) -> Vec<u32> {
        let n_cells = self.config.n_cells();
        // Maximum source load per location; OR over sources reduces to the
        // max because susceptibility is positive.
        for (i, a) in self.agents.iter().enumerate() {
            if a.state != DiseaseState::I {
                continue;
            }
            let Some(loc) = self.locations[i] else { continue };
            if !self.is_transmission_location(loc) {
                continue;
            }
            let k = loc.dense_index(n_cells);
            if self.scratch[k] == f64::NEG_INFINITY {
                self.touched.push(k);
            }
            self.scratch[k] = self.scratch[k].max(self.loads[i]);
        }
        let mut infected = Vec::new();
        if !self.touched.is_empty() {
            for (i, a) in self.agents.iter().enumerate() {
                if a.state != DiseaseState::S {
                    continue;
                }
                let Some(loc) = self.locations[i] else { continue };
                let src = self.scratch[loc.dense_index(n_cells)];
                if src * a.susceptibility > self.config.theta_tr {
                    infected.push(i as u32);
                }
            }
        }
        for k in self.touched.drain(..) {
            self.scratch[k] = f64::NEG_INFINITY;
        }
        for &i in &infected {
            let a = &mut self.agents[i as usize];
            a.state = DiseaseState::I;
            a.infected_at = Some(self.step);
        }
        infected
    }

    /// Infected agents whose current load exceeds the death threshold die now.
    pub fn end_of_step_transitions(&mut self) -> Vec<u32> {
        let mut dead = Vec::new();
        for (i, a) in self.agents.iter_mut().enumerate() {
            if a.state == DiseaseState::I && self.loads[i] > self.config.death_thr {
                a.state = DiseaseState::D;
                self.locations[i] = None;
                dead.push(i as u32);
            }
        }
        dead
    }

    /// At the day's final step: infected agents past their curve peak with a
    /// load below the recovery threshold recover.
    pub fn end_of_day_transitions(&mut self, table: &LoadTable) -> Vec<u32> {
        let t = self.step;
        let mut recovered = Vec::new();
        for (i, a) in self.agents.iter_mut().enumerate() {
            if a.state != DiseaseState::I {
                continue;
            }
            let age = t - a.infected_at.expect("infected agents carry an infection step");
            if self.loads[i] < self.config.recovery_thr && table.past_peak(a.immunity, age) {
                a.state = DiseaseState::R;
                recovered.push(i as u32);
            }
        }
        recovered
    }
}

/// A configured population ready to be run, with or without an intervention.
/// Counterfactual runs reuse the same initialized population.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    population: PopulationState,
    table: LoadTable,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        let population = init_population(&config)?;
        Self::with_population(config, population)
    }

    pub fn with_population(config: SimConfig, population: PopulationState) -> Result<Self> {
        config.validate()?;
        if population.agents.len() != config.n_agents {
            return Err(Error::Shape {
                expected: config.n_agents,
                got: population.agents.len(),
            });
        }
        let curves = CurveSet::from_config(&config.curves, config.recovery_thr)?;
        let max_age = config.horizon_days * config.steps_per_day();
        let table = curves.table(max_age);
        Ok(Self {
            config,
            population,
            table,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn population(&self) -> &PopulationState {
        &self.population
    }

    pub fn curves(&self) -> &CurveSet {
        self.table.curves()
    }

    pub fn run(&self, intervention: Option<InterventionSpec>) -> Result<Trajectory> {
        self.run_observed(intervention, &mut ())
    }

    pub fn run_observed(
        &self,
        intervention: Option<InterventionSpec>,
        observer: &mut dyn StepObserver,
    ) -> Result<Trajectory> {
        let cfg = &self.config;
        let mut agents = self.population.agents.clone();
        if let Some(spec) = intervention {
            spec.validate(cfg)?;
            agents[spec.agent as usize].quarantined_day = Some(spec.day);
        }
        let mut state = StepState::new(cfg, agents);
        let steps = cfg.steps_per_day();
        let mut records: Vec<DailyRecord> = Vec::with_capacity(cfg.horizon_days);

        for day in 0..cfg.horizon_days as u32 {
            let mut events = DayEvents::default();
            for tau in 0..steps {
                state.step = u64::from(day) * steps as u64 + tau as u64;
                state.refresh_loads(&self.table);
                state.place_agents();
                if tau < cfg.day_steps || cfg.home_transmission {
                    observer.on_contacts(day, &state);
                    events.new_inf += state.transmission_step().len() as u32;
                }
                events.new_dead += state.end_of_step_transitions().len() as u32;
            }
            events.new_rec += state.end_of_day_transitions(&self.table).len() as u32;
            let rec = aggregate_day(day, events, &state.agents, &state.loads, cfg);
            records.push(rec);
            if cfg.early_stop && rec.i == 0 {
                break;
            }
        }
        Trajectory::from_records(records, cfg.n_agents, cfg.rho_c)
    }
}

/// Initializes a population from `config.seed` and runs it once.
pub fn run_simulation(
    config: &SimConfig,
    intervention: Option<InterventionSpec>,
) -> Result<Trajectory> {
    Simulator::new(config.clone())?.run(intervention)
}
