//! Early-warning classification of eventual outbreaks from early windows.

pub mod features;
pub mod forest;
pub mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::koopman::KoopmanModel;

pub use features::{build_features, series_stats, FeatureLayout};
pub use forest::{gini, train_forest, ForestModel, ForestParams, Tree};
pub use metrics::{average_precision, compute_metrics, roc_auc, Confusion, Metrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyWarnConfig {
    pub forest: ForestParams,
    pub seed: u64,
    pub end_day_min: u32,
    pub end_day_max: u32,
    pub use_koopman: bool,
    pub include_end_day: bool,
    pub threshold: f64,
}

impl Default for EarlyWarnConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            seed: 11,
            end_day_min: 4,
            end_day_max: 12,
            use_koopman: true,
            include_end_day: true,
            threshold: 0.5,
        }
    }
}

impl EarlyWarnConfig {
    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        if self.end_day_min > self.end_day_max {
            return Err(Error::config("earlywarn.end_day_min", "must not exceed end_day_max"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("earlywarn.threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Feature rows for `windows`, computed in parallel and returned in input order.
pub fn feature_matrix(windows: &[Window], model: Option<&KoopmanModel>, layout: &FeatureLayout) -> Result<Vec<Vec<f64>>> {
    windows
        .par_iter()
        .map(|w| build_features(w, model, layout))
        .collect()
}

pub fn fit_early_warning(
    windows: &[Window],
    model: Option<&KoopmanModel>,
    cfg: &EarlyWarnConfig,
) -> Result<(ForestModel, FeatureLayout)> {
    cfg.validate()?;
    let layout = FeatureLayout::for_model(if cfg.use_koopman { model } else { None }, cfg.include_end_day);
    let x = feature_matrix(windows, if cfg.use_koopman { model } else { None }, &layout)?;
    let y: Vec<u8> = windows.iter().map(|w| w.label).collect();
    let forest = train_forest(&x, &y, layout.names.clone(), &cfg.forest, cfg.seed)?;
    Ok((forest, layout))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndDayRow {
    pub end_day: u32,
    pub windows: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Metrics,
    /// One unit per run, scored by its latest window.
    pub run_level: Metrics,
    pub per_end_day: Vec<EndDayRow>,
    /// (family, summed normalized importance), in layout order.
    pub family_importance: Vec<(String, f64)>,
    pub feature_importance: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn end_day_csv(&self) -> String {
        let mut out = String::from("end_day,windows,accuracy,auc\n");
        for r in &self.per_end_day {
            let auc = r.auc.map_or_else(|| "NA".to_string(), |a| a.to_string());
            let _ = writeln!(out, "{},{},{},{}", r.end_day, r.windows, r.accuracy, auc);
        }
        out
    }

    pub fn family_csv(&self) -> String {
        let mut out = String::from("family,importance\n");
        for (f, v) in &self.family_importance {
            let _ = writeln!(out, "{f},{v}");
        }
        out
    }
}

/// Forest metrics over `windows`: overall, per run (last window), per end
/// day, plus family importance sums.
pub fn evaluate_ew(
    forest: &ForestModel,
    layout: &FeatureLayout,
    model: Option<&KoopmanModel>,
    windows: &[Window],
    threshold: f64,
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Empty("no test windows".into()));
    }
    if layout.names != forest.feature_names {
        return Err(Error::Shape {
            expected: forest.n_features(),
            got: layout.len(),
        });
    }
    let x = feature_matrix(windows, model, layout)?;
    let scores = forest.predict_batch(&x)?;
    let labels: Vec<u8> = windows.iter().map(|w| w.label).collect();
    let overall = compute_metrics(&labels, &scores, threshold)?;

    let mut last: BTreeMap<usize, (u32, usize)> = BTreeMap::new();
    let mut by_day: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        let e = last.entry(w.run_id).or_insert((w.end_day, i));
        if w.end_day >= e.0 {
            *e = (w.end_day, i);
        }
        by_day.entry(w.end_day).or_default().push(i);
    }
    let run_labels: Vec<u8> = last.values().map(|&(_, i)| labels[i]).collect();
    let run_scores: Vec<f64> = last.values().map(|&(_, i)| scores[i]).collect();
    let run_level = compute_metrics(&run_labels, &run_scores, threshold)?;

    let per_end_day = by_day
        .into_iter()
        .map(|(day, idx)| {
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            EndDayRow {
                end_day: day,
                windows: idx.len(),
                accuracy: Confusion::at_threshold(&l, &s, threshold).accuracy(),
                auc: roc_auc(&l, &s),
            }
        })
        .collect();

    let family_importance = layout
        .family_names()
        .into_iter()
        .map(|fam| {
            let v = layout
                .families
                .iter()
                .zip(&forest.importances)
                .filter(|(f, _)| **f == fam)
                .map(|(_, v)| v)
                .sum();
            (fam, v)
        })
        .collect();
    let feature_importance = layout
        .names
        .iter()
        .cloned()
        .zip(forest.importances.iter().copied())
        .collect();
    Ok(EvalReport {
        overall,
        run_level,
        per_end_day,
        family_importance,
        feature_importance,
    })
}
