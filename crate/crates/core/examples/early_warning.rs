//! Sweep -> Koopman features -> random forest -> held-out metrics.

use epiwarn::dataset::{generate_sweep, split_runs, sweep_windows, SweepSpec};
use epiwarn::earlywarn::{evaluate_ew, fit_early_warning, EarlyWarnConfig};
use epiwarn::koopman::{sweep_samples, train, KoopmanConfig};
use epiwarn::pipeline::{count_scale, DESK_THETA_TR};
use epiwarn::SimConfig;

fn main() -> epiwarn::Result<()> {
    let base = SimConfig {
        theta_tr: DESK_THETA_TR,
        ..SimConfig::default()
    };
    let sweep = generate_sweep(&base, &SweepSpec::default())?;
    let ids: Vec<usize> = (0..sweep.manifest.n_runs).collect();
    let split = split_runs(&ids, [0.7, 0.15, 0.15], 5)?;

    let kc = KoopmanConfig {
        epochs: 30,
        ..KoopmanConfig::default()
    };
    let samples = |ids: &[usize]| sweep_samples(&sweep, ids, kc.k, kc.horizon, 4, 12);
    let (model, _) = train(&samples(&split.train), &samples(&split.val), &kc, count_scale(base.n_agents))?;

    let ew = EarlyWarnConfig::default();
    let train_w = sweep_windows(&sweep, &split.train, kc.k, ew.end_day_min, ew.end_day_max);
    let test_w = sweep_windows(&sweep, &split.test, kc.k, ew.end_day_min, ew.end_day_max);
    let (forest, layout) = fit_early_warning(&train_w, Some(&model), &ew)?;
    let r = evaluate_ew(&forest, &layout, Some(&model), &test_w, ew.threshold)?;

    println!("window AUC {:?}, run AUC {:?}", r.overall.roc_auc, r.run_level.roc_auc);
    print!("{}", r.end_day_csv());
    print!("{}", r.family_csv());
    Ok(())
}
