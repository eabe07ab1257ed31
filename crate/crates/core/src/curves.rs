//! Viral-load curves per immunity category.
//!
//! The default is a smooth pulse `V * (a/A)^2 * exp(2 * (1 - a/A))` that
//! starts at zero, peaks at `V` when the infection age `a` equals `A` steps
//! and decays afterwards. Tabulated curves read from CSV replace it when
//! configured.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Immunity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub peak_load: f64,
    /// Infection age of the peak, in steps.
    pub peak_age: f64,
}

impl Pulse {
    pub fn eval(&self, age: f64) -> f64 {
        let x = age / self.peak_age;
        self.peak_load * x * x * (2.0 * (1.0 - x)).exp()
    }
}

/// Strong, medium, low, compromised.
pub const DEFAULT_PULSES: [Pulse; 4] = [
    Pulse {
        peak_load: 45.0,
        peak_age: 80.0,
    },
    Pulse {
        peak_load: 70.0,
        peak_age: 120.0,
    },
    Pulse {
        peak_load: 95.0,
        peak_age: 160.0,
    },
    Pulse {
        peak_load: 115.0,
        peak_age: 200.0,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CurveConfig {
    Parametric { pulses: [Pulse; 4] },
    /// One `age_step,load` CSV per category, in strong/medium/low/compromised order.
    Tabulated { files: [PathBuf; 4] },
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig::Parametric {
            pulses: DEFAULT_PULSES,
        }
    }
}

impl CurveConfig {
    pub fn validate(&self) -> Result<()> {
        if let CurveConfig::Parametric { pulses } = self {
            for (p, cat) in pulses.iter().zip(Immunity::ALL) {
                if !(p.peak_load.is_finite() && p.peak_load > 0.0) {
                    return Err(Error::config(
                        format!("curves.{}.peak_load", cat.name()),
                        "must be finite and positive",
                    ));
                }
                if !(p.peak_age.is_finite() && p.peak_age > 0.0) {
                    return Err(Error::config(
                        format!("curves.{}.peak_age", cat.name()),
                        "must be finite and positive",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Piecewise-linear curve over increasing ages; zero past the last point.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCurve {
    ages: Vec<f64>,
    loads: Vec<f64>,
}

impl TabulatedCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let ctx = "tabulated curve";
        if points.is_empty() {
            return Err(Error::parse(ctx, "no points"));
        }
        if points[0].0 != 0.0 {
            return Err(Error::parse(ctx, "first age must be 0"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::parse(ctx, "ages must be strictly increasing"));
            }
        }
        if points
            .iter()
            .any(|&(a, v)| !a.is_finite() || !v.is_finite() || v < 0.0)
        {
            return Err(Error::parse(ctx, "values must be finite and non-negative"));
        }
        // Unimodal: non-decreasing up to the first maximum, non-increasing after.
        let peak = points
            .iter()
            .enumerate()
            .fold(0, |best, (i, p)| if p.1 > points[best].1 { i } else { best });
        let rising = points[..=peak].windows(2).all(|w| w[1].1 >= w[0].1);
        let falling = points[peak..].windows(2).all(|w| w[1].1 <= w[0].1);
        if !(rising && falling) {
            return Err(Error::parse(ctx, "curve must have a single peak"));
        }
        let (ages, loads) = points.into_iter().unzip();
        Ok(Self { ages, loads })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Csv(e),
        })?;
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["age_step", "load"] {
            return Err(Error::parse(
                path.display().to_string(),
                "expected header `age_step,load`",
            ));
        }
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
            };
            points.push((num(0)?, num(1)?));
        }
        Self::new(points)
    }

    pub fn eval(&self, age: f64) -> f64 {
        let last = self.ages.len() - 1;
        if age > self.ages[last] || age < 0.0 {
            return 0.0;
        }
        let i = self.ages.partition_point(|&a| a <= age);
        if i == 0 {
            return self.loads[0];
        }
        let lo = i - 1;
        if lo == last {
            return self.loads[last];
        }
        let t = (age - self.ages[lo]) / (self.ages[lo + 1] - self.ages[lo]);
        self.loads[lo] + t * (self.loads[lo + 1] - self.loads[lo])
    }

    fn last_age_at_or_above(&self, thr: f64) -> f64 {
        self.ages
            .iter()
            .zip(&self.loads)
            .filter(|(_, &v)| v >= thr)
            .map(|(&a, _)| a)
            .last()
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Curve {
    Pulse(Pulse),
    Table(TabulatedCurve),
}

/// Evaluated curves for all four categories.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    curves: [Curve; 4],
    recovery_thr: f64,
}

impl CurveSet {
    pub fn parametric(pulses: [Pulse; 4], recovery_thr: f64) -> Self {
        Self {
            curves: pulses.map(Curve::Pulse),
            recovery_thr,
        }
    }

    pub fn tabulated(tables: [TabulatedCurve; 4], recovery_thr: f64) -> Self {
        Self {
            curves: tables.map(Curve::Table),
            recovery_thr,
        }
    }

    pub fn from_config(cfg: &CurveConfig, recovery_thr: f64) -> Result<Self> {
        match cfg {
            CurveConfig::Parametric { pulses } => Ok(Self::parametric(*pulses, recovery_thr)),
            CurveConfig::Tabulated { files } => {
                let mut tables = Vec::with_capacity(4);
                for f in files {
                    tables.push(TabulatedCurve::read_csv(f)?);
                }
                let tables: [TabulatedCurve; 4] = tables.try_into().expect("four files");
                Ok(Self::tabulated(tables, recovery_thr))
            }
        }
    }

    /// Load of a category at an integer infection age (in steps).
    pub fn viral_load(&self, category: Immunity, age_steps: u64) -> f64 {
        let a = age_steps as f64;
        match &self.curves[category.index()] {
            Curve::Pulse(p) => p.eval(a),
            Curve::Table(t) => t.eval(a),
        }
    }

    /// Age after which a sub-recovery load counts as the decaying tail.
    pub fn recovery_guard_age(&self, category: Immunity) -> f64 {
        match &self.curves[category.index()] {
            Curve::Pulse(p) => p.peak_age,
            Curve::Table(t) => t.last_age_at_or_above(self.recovery_thr),
        }
    }

    pub fn is_past_peak(&self, category: Immunity, age_steps: u64) -> bool {
        age_steps as f64 > self.recovery_guard_age(category)
    }

    /// Precomputes loads for ages `0..max_age`.
    pub fn table(&self, max_age: usize) -> LoadTable {
        let loads = Immunity::ALL.map(|c| {
            (0..max_age as u64)
                .map(|a| self.viral_load(c, a))
                .collect::<Vec<_>>()
        });
        let guards = Immunity::ALL.map(|c| self.recovery_guard_age(c));
        LoadTable {
            set: self.clone(),
            loads,
            guards,
        }
    }
}

/// Cached curve values indexed by category and integer age.
#[derive(Debug, Clone)]
pub struct LoadTable {
    set: CurveSet,
    loads: [Vec<f64>; 4],
    guards: [f64; 4],
}

impl LoadTable {
    #[inline]
    pub fn load(&self, category: Immunity, age: u64) -> f64 {
        match self.loads[category.index()].get(age as usize) {
            Some(&v) => v,
            None => self.set.viral_load(category, age),
        }
    }

    #[inline]
    pub fn past_peak(&self, category: Immunity, age: u64) -> bool {
        age as f64 > self.guards[category.index()]
    }

    pub fn curves(&self) -> &CurveSet {
        &self.set
    }
}
