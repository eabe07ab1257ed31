mod common;

use std::collections::BTreeSet;

use common::desk_base;
use epiwarn::dataset::{
    generate_sweep, probe_outbreak_fraction, probe_seeds, split_runs, sweep_windows, windows_from_csv,
    windows_to_csv, Manifest, Sweep, SweepSpec, MID_BAND,
};
use epiwarn::observables::compute_outcome;
use proptest::prelude::*;

fn desk_small() -> SweepSpec {
    SweepSpec::grid(1.3, 1.3015, 1.3025, 5, 20)
}

#[test]
fn manifest_rederives_from_trajectory_files() {
    let dir = tempfile::tempdir().unwrap();
    let base = desk_base();
    let sweep = generate_sweep(&base, &desk_small()).unwrap();
    sweep.write(dir.path()).unwrap();
    let files = std::fs::read_dir(dir.path().join("runs")).unwrap().count();
    assert_eq!(files, 100);

    let back = Sweep::read(dir.path()).unwrap();
    let m = &back.manifest;
    assert_eq!(m, &sweep.manifest);
    assert_eq!(m.n_runs, 100);
    let mut mid = 0;
    for (rec, traj) in m.runs.iter().zip(&back.trajectories) {
        let o = compute_outcome(&traj.records, base.n_agents, base.rho_c).unwrap();
        assert_eq!((rec.rho, rec.label, rec.peak, rec.peak_day), (o.attack_rate, o.label, o.peak_infected, o.peak_day));
        assert_eq!(rec.recorded_days, traj.records.len());
        mid += usize::from(rec.rho > MID_BAND.0 && rec.rho < MID_BAND.1);
        let cfg = m.sweep.run_config(&m.config, rec.value_index, rec.seed_index);
        assert_eq!((cfg.seed, cfg.s_hi), (rec.seed, rec.s_hi));
    }
    assert_eq!(m.n_outbreak, m.runs.iter().filter(|r| r.label == 1).count());
    assert_eq!(m.mid_band_fraction, mid as f64 / 100.0);

    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let again = generate_sweep(&base, &desk_small()).unwrap();
    assert_eq!(again.manifest.to_json().unwrap(), text);
    assert_eq!(Manifest::read(&dir.path().join("manifest.json")).unwrap(), sweep.manifest);
}

#[test]
fn missing_manifest_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let err = Sweep::read(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("manifest.json"));
}

#[test]
fn windows_cover_the_early_days_and_round_trip() {
    let sweep = generate_sweep(&desk_base(), &SweepSpec::grid(1.3, 1.3015, 1.3025, 2, 5)).unwrap();
    let ids: Vec<usize> = (0..10).collect();
    let w = sweep_windows(&sweep, &ids, 5, 4, 12);
    for (id, traj) in sweep.trajectories.iter().enumerate() {
        let expected = (4..=12).filter(|&d| d < traj.records.len()).count();
        let got: Vec<_> = w.iter().filter(|x| x.run_id == id).collect();
        assert_eq!(got.len(), expected, "run {id}");
        for x in got {
            let end = x.end_day as usize;
            for (j, row) in x.values.iter().enumerate() {
                assert_eq!(*row, traj.records[end + 1 - 5 + j].counts());
            }
            assert_eq!(x.label, traj.outcome.label);
        }
    }
    let text = windows_to_csv(&w);
    assert_eq!(windows_from_csv(&text, "windows").unwrap(), w);
}

#[test]
fn probe_fraction_limits() {
    let seeds = probe_seeds(77, 20);
    let cfg = SweepSpec::default().probe_config(&desk_base());
    assert_eq!(probe_outbreak_fraction(&cfg, f64::INFINITY, &seeds).unwrap().outbreak_fraction, 0.0);
    assert!(probe_outbreak_fraction(&cfg, 0.0, &seeds).unwrap().outbreak_fraction >= 0.9);
}

proptest! {
    #[test]
    fn split_partitions_every_run(n in 3usize..400, seed in any::<u64>()) {
        let ids: Vec<usize> = (0..n).map(|i| i * 3 + 1).collect();
        match split_runs(&ids, [0.7, 0.15, 0.15], seed) {
            Ok(s) => {
                let all: BTreeSet<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
                prop_assert_eq!(all.len(), n);
                prop_assert_eq!(all, ids.iter().copied().collect::<BTreeSet<_>>());
                prop_assert_eq!(s.train.len(), (0.7 * n as f64 + 1e-9).floor() as usize);
                prop_assert_eq!(s.val.len(), (0.15 * n as f64 + 1e-9).floor() as usize);
                prop_assert_eq!(split_runs(&ids, [0.7, 0.15, 0.15], seed).unwrap(), s);
            }
            Err(_) => prop_assert!(n < 7),
        }
    }
}
