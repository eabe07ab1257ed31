//! Classifier feature layout.
//!
//! Order: five statistics for each of seven window series, then the optional
//! Koopman block (latent coordinates, forecast infected counts, forecast
//! incidence sum, attack-rate head, outbreak probability), the two
//! susceptibility bounds, and optionally the window end day.

use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::koopman::KoopmanModel;

pub const LAYOUT_VERSION: &str = "epiwarn-features/1";

/// (column in the count observables, feature prefix, family).
pub const SERIES: [(usize, &str, &str); 7] = [
    (0, "S", "susceptible"),
    (1, "I", "infected"),
    (4, "new_inf", "incidence"),
    (2, "R", "other_series"),
    (3, "D", "other_series"),
    (7, "I_mob", "other_series"),
    (8, "I_home", "other_series"),
];

pub const STATS: [&str; 5] = ["last", "mean", "max", "change", "mean_daily_change"];

const COL_I: usize = 1;
const COL_NEW_INF: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub version: String,
    pub names: Vec<String>,
    pub families: Vec<String>,
    /// (latent dimension, forecast horizon) when the Koopman block is present.
    pub koopman: Option<(usize, usize)>,
    pub include_end_day: bool,
}

impl FeatureLayout {
    pub fn new(koopman: Option<(usize, usize)>, include_end_day: bool) -> Self {
        let mut names = Vec::new();
        let mut families = Vec::new();
        let mut push = |n: String, f: &str| {
            names.push(n);
            families.push(f.to_string());
        };
        for (_, prefix, family) in SERIES {
            for stat in STATS {
                push(format!("{prefix}_{stat}"), family);
            }
        }
        if let Some((r, h)) = koopman {
            for i in 0..r {
                push(format!("koop_z{i}"), "koopman");
            }
            for l in 1..=h {
                push(format!("koop_fc_I_{l}"), "koopman");
            }
            push("koop_fc_incidence_sum".into(), "koopman");
            push("koop_attack_rate".into(), "koopman");
            push("koop_outbreak_prob".into(), "koopman");
        }
        push("s_lo".into(), "susceptibility");
        push("s_hi".into(), "susceptibility");
        if include_end_day {
            push("end_day".into(), "end_day");
        }
        Self {
            version: LAYOUT_VERSION.to_string(),
            names,
            families,
            koopman,
            include_end_day,
        }
    }

    pub fn for_model(model: Option<&KoopmanModel>, include_end_day: bool) -> Self {
        Self::new(model.map(|m| (m.dims.latent, m.horizon)), include_end_day)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Distinct family names in first-appearance order.
    pub fn family_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.families {
            if !out.contains(f) {
                out.push(f.clone());
            }
        }
        out
    }
}

/// last, mean, max, last - first, and (last - first) / (k - 1).
pub fn series_stats(v: &[f64]) -> [f64; 5] {
    let n = v.len();
    if n == 0 {
        return [0.0; 5];
    }
    let last = v[n - 1];
    let mean = v.iter().sum::<f64>() / n as f64;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let change = last - v[0];
    let daily = if n > 1 { change / (n - 1) as f64 } else { 0.0 };
    [last, mean, max, change, daily]
}

pub fn build_features(window: &Window, model: Option<&KoopmanModel>, layout: &FeatureLayout) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(layout.len());
    for (col, _, _) in SERIES {
        x.extend(series_stats(&window.series(col)));
    }
    match (layout.koopman, model) {
        (Some((r, h)), Some(model)) => {
            if model.dims.latent != r || model.horizon != h {
                return Err(Error::Shape {
                    expected: r,
                    got: model.dims.latent,
                });
            }
            let flat = window.flat();
            let z = model.encode(&flat)?;
            let fc = model.forecast(&flat, h)?;
            let (ar, p) = model.predict_heads(&z);
            x.extend(&z);
            x.extend(fc.iter().map(|row| row[COL_I]));
            x.push(fc.iter().map(|row| row[COL_NEW_INF]).sum());
            x.push(ar);
            x.push(p);
        }
        (None, _) => {}
        (Some(_), None) => {
            return Err(Error::config("earlywarn.use_koopman", "feature layout needs a Koopman model"));
        }
    }
    x.push(window.s_lo);
    x.push(window.s_hi);
    if layout.include_end_day {
        x.push(f64::from(window.end_day));
    }
    debug_assert_eq!(x.len(), layout.len());
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse("features", format!("non-finite feature for run {}", window.run_id)));
    }
    Ok(x)
}
