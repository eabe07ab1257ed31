mod common;

use common::brute_auc;
use epiwarn::dataset::Window;
use epiwarn::earlywarn::{
    average_precision, build_features, compute_metrics, evaluate_ew, fit_early_warning, roc_auc, train_forest,
    EarlyWarnConfig, FeatureLayout, ForestModel, ForestParams,
};
use proptest::prelude::*;

/// Mean over positives of the precision at that positive's score.
fn ap_oracle(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return None;
    }
    let mut sum = 0.0;
    for (i, _) in labels.iter().enumerate().filter(|(_, &y)| y == 1) {
        let above: Vec<usize> = (0..labels.len()).filter(|&j| scores[j] >= scores[i]).collect();
        let tp = above.iter().filter(|&&j| labels[j] == 1).count();
        sum += tp as f64 / above.len() as f64;
    }
    Some(sum / n_pos as f64)
}

fn scored_set() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    (1usize..=200).prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..=1, n),
            // Coarse grid so ties are common.
            prop::collection::vec((0u32..20).prop_map(|v| f64::from(v) / 20.0), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn auc_equals_pair_counting((labels, scores) in scored_set()) {
        prop_assert_eq!(roc_auc(&labels, &scores), brute_auc(&labels, &scores));
    }

    #[test]
    fn ap_equals_per_positive_precision((labels, scores) in scored_set()) {
        match (average_precision(&labels, &scores), ap_oracle(&labels, &scores)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn forest_probabilities_are_bounded(seed in any::<u64>(), q in prop::collection::vec(-5.0f64..105.0, 1)) {
        let (x, y) = toy();
        let f = train_forest(&x, &y, vec!["x".into()], &ForestParams { n_trees: 10, ..ForestParams::default() }, seed).unwrap();
        let p = f.predict_proba(&q).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

fn toy() -> (Vec<Vec<f64>>, Vec<u8>) {
    ((0..100).map(|i| vec![f64::from(i)]).collect(), (0..100).map(|i| u8::from(i >= 50)).collect())
}

#[test]
fn worked_examples() {
    assert_eq!(roc_auc(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]), Some(0.75));
    assert_eq!(average_precision(&[1, 0, 1], &[0.9, 0.8, 0.7]), Some(0.5 * 1.0 + 0.5 * (2.0 / 3.0)));
}

#[test]
fn separable_toy_seeded_and_normalized() {
    let (x, y) = toy();
    let p = ForestParams::default();
    let a = train_forest(&x, &y, vec!["x".into()], &p, 3).unwrap();
    let b = train_forest(&x, &y, vec!["x".into()], &p, 3).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let scores = a.predict_batch(&x).unwrap();
    assert_eq!(compute_metrics(&y, &scores, 0.5).unwrap().accuracy, 1.0);
    assert!((a.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let back = ForestModel::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back.predict_batch(&x).unwrap(), scores);
}

fn window(run_id: usize, end_day: u32, infected: f64, label: u8) -> Window {
    let values = (0..5)
        .map(|d| {
            let i = infected * (1.0 + d as f64);
            [500.0 - i, i, 0.0, 0.0, infected, 0.0, 0.0, i, 0.0]
        })
        .collect();
    Window {
        run_id,
        end_day,
        label,
        rho: if label == 1 { 0.6 } else { 0.01 },
        s_lo: 1.3,
        s_hi: 1.302,
        values,
    }
}

#[test]
fn run_level_uses_each_runs_last_window() {
    // Even runs break out; only the day-12 window tells them apart.
    let mut train = Vec::new();
    let mut test = Vec::new();
    for run in 0..40 {
        let label = u8::from(run % 2 == 0);
        let late = if label == 1 { 5.0 + (run % 5) as f64 } else { 1.0 + (run % 3) as f64 * 0.5 };
        let set = if run < 30 { &mut train } else { &mut test };
        set.push(window(run, 4, 1.0, label));
        set.push(window(run, 12, late, label));
    }
    let cfg = EarlyWarnConfig {
        use_koopman: false,
        ..EarlyWarnConfig::default()
    };
    let (forest, layout) = fit_early_warning(&train, None, &cfg).unwrap();
    assert_eq!(layout.len(), 38);
    let r = evaluate_ew(&forest, &layout, None, &test, 0.5).unwrap();
    assert_eq!(r.run_level.n, 10);
    assert_eq!(r.run_level.roc_auc, Some(1.0));
    assert_eq!(r.overall.n, 20);
    assert_eq!(r.per_end_day.iter().map(|d| d.end_day).collect::<Vec<_>>(), vec![4, 12]);
    assert_eq!(r.per_end_day[0].auc, Some(0.5));
    let total: f64 = r.family_importance.iter().map(|(_, v)| v).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn features_follow_the_layout() {
    let w = window(3, 8, 2.0, 1);
    let layout = FeatureLayout::new(None, true);
    let x = build_features(&w, None, &layout).unwrap();
    let at = |name: &str| x[layout.names.iter().position(|n| n == name).unwrap()];
    assert_eq!(at("I_last"), 10.0);
    assert_eq!(at("I_mean"), 6.0);
    assert_eq!(at("I_change"), 8.0);
    assert_eq!(at("I_mean_daily_change"), 2.0);
    assert_eq!(at("S_max"), 498.0);
    assert_eq!(at("end_day"), 8.0);
    assert_eq!(at("s_hi"), 1.302);
}
