//! A prevented case found by the desk search, frozen so that changes to the
//! simulator or the search show up as a diff here.

use epiwarn::dataset::SweepSpec;
use epiwarn::intervention::{enumerate_candidates, evaluate_intervention, search_best, InterventionConfig, InterventionReport};
use epiwarn::{SimConfig, Simulator};
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    value_index: usize,
    seed_index: usize,
    base: SimConfig,
    sweep: SweepSpec,
    report: InterventionReport,
}

fn fixture() -> Fixture {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/prevented_case.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn frozen_case_still_prevents() {
    let f = fixture();
    let sim = Simulator::new(f.sweep.run_config(&f.base, f.value_index, f.seed_index)).unwrap();
    let base = sim.run(None).unwrap();
    let cf = sim.run(Some(f.report.spec)).unwrap();
    let mut r = evaluate_intervention(f.report.spec, &base.outcome, &cf.outcome, f.base.rho_c);
    r.baseline_path = f.report.baseline_path.clone();
    r.counterfactual_path = f.report.counterfactual_path.clone();
    assert_eq!(r, f.report);
    assert!(r.prevented);
}

#[test]
fn frozen_case_is_the_search_optimum() {
    let f = fixture();
    let sim = Simulator::new(f.sweep.run_config(&f.base, f.value_index, f.seed_index)).unwrap();
    let ic = InterventionConfig::default();
    let cands = enumerate_candidates(&sim, &ic).unwrap();
    let result = search_best(&sim, &cands, ic.criterion).unwrap();
    assert_eq!(result.best, f.report.spec);
}
