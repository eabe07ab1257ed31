//! Single-agent, single-day quarantine counterfactuals.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_artifact, write_file};
use crate::error::{Error, Result};
use crate::observables::{Outcome, Trajectory};
use crate::population::DiseaseState;
use crate::sim::{InterventionSpec, Simulator, StepObserver, StepState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Exhaustive,
    ContactRanked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Largest attack-rate reduction.
    AttackRate,
    /// Largest peak reduction.
    Peak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionConfig {
    pub strategy: Strategy,
    pub k_agents: usize,
    pub day_min: u32,
    pub day_max: u32,
    pub criterion: Criterion,
    /// Outbreak baselines searched by the pipeline.
    pub n_baselines: usize,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::ContactRanked,
            k_agents: 50,
            day_min: 0,
            day_max: 9,
            criterion: Criterion::AttackRate,
            n_baselines: 10,
        }
    }
}

impl InterventionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.day_min > self.day_max {
            return Err(Error::config("intervention.day_min", "must not exceed day_max"));
        }
        if self.strategy == Strategy::ContactRanked && self.k_agents == 0 {
            return Err(Error::config("intervention.k_agents", "must be at least 1"));
        }
        Ok(())
    }
}

/// Counts, for every agent, infected-susceptible co-location pairs it takes
/// part in: a susceptible agent scores one per co-located infected agent, an
/// infected agent one per co-located susceptible agent. Only steps where
/// transmission is evaluated, on days up to `day_max`, are counted.
pub struct ContactCounter {
    pub day_max: u32,
    pub counts: Vec<u64>,
    infected_at: Vec<u32>,
    susceptible_at: Vec<u32>,
    touched: Vec<usize>,
}

impl ContactCounter {
    pub fn new(n_agents: usize, n_locations: usize, day_max: u32) -> Self {
        Self {
            day_max,
            counts: vec![0; n_agents],
            infected_at: vec![0; n_locations],
            susceptible_at: vec![0; n_locations],
            touched: Vec::new(),
        }
    }
}

impl StepObserver for ContactCounter {
    fn on_contacts(&mut self, day: u32, state: &StepState<'_>) {
        if day > self.day_max {
            return;
        }
        let n_cells = state.config.n_cells();
        for (a, loc) in state.agents.iter().zip(&state.locations) {
            let Some(loc) = *loc else { continue };
            if !state.is_transmission_location(loc) {
                continue;
            }
            let k = loc.dense_index(n_cells);
            match a.state {
                DiseaseState::I => self.infected_at[k] += 1,
                DiseaseState::S => self.susceptible_at[k] += 1,
                _ => continue,
            }
            self.touched.push(k);
        }
        for (i, (a, loc)) in state.agents.iter().zip(&state.locations).enumerate() {
            let Some(loc) = *loc else { continue };
            if !state.is_transmission_location(loc) {
                continue;
            }
            let k = loc.dense_index(n_cells);
            self.counts[i] += match a.state {
                DiseaseState::I => u64::from(self.susceptible_at[k]),
                DiseaseState::S => u64::from(self.infected_at[k]),
                _ => 0,
            };
        }
        for k in self.touched.drain(..) {
            self.infected_at[k] = 0;
            self.susceptible_at[k] = 0;
        }
    }
}

/// Contact counts over days `0..=day_max` of the baseline run.
pub fn contact_counts(sim: &Simulator, day_max: u32) -> Result<Vec<u64>> {
    let cfg = sim.config();
    let mut counter = ContactCounter::new(cfg.n_agents, cfg.n_cells() + cfg.n_homes, day_max);
    sim.run_observed(None, &mut counter)?;
    Ok(counter.counts)
}

/// Candidate (agent, day) pairs, ordered by agent rank then day.
///
/// Exhaustive: every agent in id order. Contact-ranked: the `k_agents`
/// agents with the highest contact counts (ties to the lower id); agents
/// with no contacts are never selected.
pub fn enumerate_candidates(sim: &Simulator, cfg: &InterventionConfig) -> Result<Vec<InterventionSpec>> {
    cfg.validate()?;
    let n = sim.config().n_agents;
    let last_day = (sim.config().horizon_days as u32).saturating_sub(1);
    let day_max = cfg.day_max.min(last_day);
    if cfg.day_min > day_max {
        return Err(Error::Empty("no candidate days inside the horizon".into()));
    }
    let agents: Vec<u32> = match cfg.strategy {
        Strategy::Exhaustive => (0..n as u32).collect(),
        Strategy::ContactRanked => {
            let counts = contact_counts(sim, day_max)?;
            let mut ranked: Vec<u32> = (0..n as u32).filter(|&a| counts[a as usize] > 0).collect();
            ranked.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
            ranked.truncate(cfg.k_agents);
            ranked
        }
    };
    let out: Vec<InterventionSpec> = agents
        .iter()
        .flat_map(|&agent| (cfg.day_min..=day_max).map(move |day| InterventionSpec { agent, day }))
        .collect();
    if out.is_empty() {
        return Err(Error::Empty("no intervention candidates".into()));
    }
    Ok(out)
}

/// Re-runs the simulator's population with one quarantine applied.
pub fn run_counterfactual(sim: &Simulator, spec: InterventionSpec) -> Result<Trajectory> {
    sim.run(Some(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectClass {
    /// Baseline at or above the outbreak threshold, counterfactual below it.
    Prevented,
    /// Attack rate or peak reduced without crossing below the threshold.
    Reduced,
    /// No reduction in either quantity.
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionReport {
    pub spec: InterventionSpec,
    pub rho0: f64,
    pub rho_u: f64,
    pub delta_rho: f64,
    pub peak0: u32,
    pub peak_u: u32,
    pub peak_day0: u32,
    pub peak_day_u: u32,
    pub delta_peak: i64,
    pub prevented: bool,
    pub effect: EffectClass,
    pub baseline_path: Option<String>,
    pub counterfactual_path: Option<String>,
}

pub fn evaluate_intervention(spec: InterventionSpec, baseline: &Outcome, cf: &Outcome, rho_c: f64) -> InterventionReport {
    let delta_rho = baseline.attack_rate - cf.attack_rate;
    let delta_peak = i64::from(baseline.peak_infected) - i64::from(cf.peak_infected);
    let prevented = baseline.attack_rate >= rho_c && cf.attack_rate < rho_c;
    let effect = if prevented {
        EffectClass::Prevented
    } else if delta_rho > 0.0 || delta_peak > 0 {
        EffectClass::Reduced
    } else {
        EffectClass::Null
    };
    InterventionReport {
        spec,
        rho0: baseline.attack_rate,
        rho_u: cf.attack_rate,
        delta_rho,
        peak0: baseline.peak_infected,
        peak_u: cf.peak_infected,
        peak_day0: baseline.peak_day,
        peak_day_u: cf.peak_day,
        delta_peak,
        prevented,
        effect,
        baseline_path: None,
        counterfactual_path: None,
    }
}

/// Ordering used to rank reports: criterion value descending, then smaller
/// day, then smaller agent id.
pub fn rank_cmp(a: &InterventionReport, b: &InterventionReport, criterion: Criterion) -> std::cmp::Ordering {
    let primary = match criterion {
        Criterion::AttackRate => b.delta_rho.total_cmp(&a.delta_rho),
        Criterion::Peak => b.delta_peak.cmp(&a.delta_peak),
    };
    primary
        .then(a.spec.day.cmp(&b.spec.day))
        .then(a.spec.agent.cmp(&b.spec.agent))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub criterion: Criterion,
    pub baseline: Outcome,
    /// Every candidate's report, best first.
    pub ranked: Vec<InterventionReport>,
    pub best: InterventionSpec,
}

impl SearchResult {
    pub fn best_report(&self) -> &InterventionReport {
        &self.ranked[0]
    }

    pub fn count(&self, effect: EffectClass) -> usize {
        self.ranked.iter().filter(|r| r.effect == effect).count()
    }
}

/// Evaluates every candidate against the baseline and ranks the reports.
pub fn search_best(sim: &Simulator, candidates: &[InterventionSpec], criterion: Criterion) -> Result<SearchResult> {
    if candidates.is_empty() {
        return Err(Error::Empty("no intervention candidates".into()));
    }
    let rho_c = sim.config().rho_c;
    let baseline = sim.run(None)?;
    let mut ranked = candidates
        .par_iter()
        .map(|&spec| {
            let cf = run_counterfactual(sim, spec)?;
            Ok(evaluate_intervention(spec, &baseline.outcome, &cf.outcome, rho_c))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| rank_cmp(a, b, criterion));
    Ok(SearchResult {
        criterion,
        baseline: baseline.outcome,
        best: ranked[0].spec,
        ranked,
    })
}

/// A stored baseline/counterfactual pair.
#[derive(Debug, Clone)]
pub struct Case {
    pub report: InterventionReport,
    pub baseline: Trajectory,
    pub counterfactual: Trajectory,
}

pub const CASE_REPORT: &str = "case.json";
pub const CASE_BASELINE: &str = "baseline.csv";
pub const CASE_COUNTERFACTUAL: &str = "counterfactual.csv";

impl Case {
    pub fn build(sim: &Simulator, spec: InterventionSpec) -> Result<Self> {
        let baseline = sim.run(None)?;
        let counterfactual = run_counterfactual(sim, spec)?;
        let mut report = evaluate_intervention(spec, &baseline.outcome, &counterfactual.outcome, sim.config().rho_c);
        report.baseline_path = Some(CASE_BASELINE.into());
        report.counterfactual_path = Some(CASE_COUNTERFACTUAL.into());
        Ok(Self {
            report,
            baseline,
            counterfactual,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(CASE_BASELINE), &self.baseline.to_csv_string())?;
        write_file(&dir.join(CASE_COUNTERFACTUAL), &self.counterfactual.to_csv_string())?;
        write_file(&dir.join(CASE_REPORT), &(serde_json::to_string_pretty(&self.report)? + "\n"))
    }

    pub fn read(dir: &Path, rho_c: f64) -> Result<Self> {
        let report: InterventionReport = serde_json::from_str(&read_artifact(&dir.join(CASE_REPORT))?)?;
        let b = dir.join(report.baseline_path.as_deref().unwrap_or(CASE_BASELINE));
        let c = dir.join(report.counterfactual_path.as_deref().unwrap_or(CASE_COUNTERFACTUAL));
        Ok(Self {
            baseline: Trajectory::read_csv(&b, rho_c)?,
            counterfactual: Trajectory::read_csv(&c, rho_c)?,
            report,
        })
    }

    /// Report recomputed from the stored trajectories.
    pub fn rederive(&self, rho_c: f64) -> InterventionReport {
        let mut r = evaluate_intervention(self.report.spec, &self.baseline.outcome, &self.counterfactual.outcome, rho_c);
        r.baseline_path = self.report.baseline_path.clone();
        r.counterfactual_path = self.report.counterfactual_path.clone();
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::observables::compute_outcome;
    use crate::observables::DailyRecord;

    fn outcome(final_s: u32, peak: u32) -> Outcome {
        let rec = DailyRecord {
            day: 0,
            s: final_s,
            i: peak,
            r: 500 - final_s - peak,
            d: 0,
            new_inf: 0,
            new_rec: 0,
            new_dead: 0,
            i_mob: peak,
            i_home: 0,
            vl_mean: 0.0,
            vl_max: 0.0,
        };
        compute_outcome(&[rec], 500, 0.3).unwrap()
    }

    #[test]
    fn prevented_and_delayed_examples() {
        let spec = InterventionSpec { agent: 1, day: 2 };
        let r = evaluate_intervention(spec, &outcome(175, 100), &outcome(499, 1), 0.3);
        assert!((r.delta_rho - 0.648).abs() < 1e-12);
        assert!(r.prevented);
        assert_eq!(r.effect, EffectClass::Prevented);
        let r = evaluate_intervention(spec, &outcome(145, 100), &outcome(155, 100), 0.3);
        assert!((r.rho0 - 0.71).abs() < 1e-12 && (r.rho_u - 0.69).abs() < 1e-12);
        assert!((r.delta_rho - 0.02).abs() < 1e-12);
        assert!(!r.prevented);
        assert_eq!(r.effect, EffectClass::Reduced);
        let r = evaluate_intervention(spec, &outcome(175, 100), &outcome(175, 100), 0.3);
        assert_eq!((r.delta_rho, r.delta_peak, r.prevented), (0.0, 0, false));
        assert_eq!(r.effect, EffectClass::Null);
    }

    #[test]
    fn exhaustive_product() {
        let cfg = SimConfig {
            n_agents: 10,
            theta_tr: f64::INFINITY,
            ..SimConfig::default()
        };
        let sim = Simulator::new(cfg).unwrap();
        let ic = InterventionConfig {
            strategy: Strategy::Exhaustive,
            day_min: 0,
            day_max: 4,
            ..InterventionConfig::default()
        };
        let c = enumerate_candidates(&sim, &ic).unwrap();
        assert_eq!(c.len(), 50);
        assert_eq!(c[0], InterventionSpec { agent: 0, day: 0 });
        assert_eq!(c[5], InterventionSpec { agent: 1, day: 0 });
    }

    #[test]
    fn ties_go_to_earliest_day_then_lowest_agent() {
        let o = outcome(175, 100);
        let mk = |agent, day| evaluate_intervention(InterventionSpec { agent, day }, &o, &o, 0.3);
        let mut v = vec![mk(3, 2), mk(1, 2), mk(5, 1)];
        v.sort_by(|a, b| rank_cmp(a, b, Criterion::AttackRate));
        let order: Vec<_> = v.iter().map(|r| (r.spec.day, r.spec.agent)).collect();
        assert_eq!(order, vec![(1, 5), (2, 1), (2, 3)]);
    }
}
