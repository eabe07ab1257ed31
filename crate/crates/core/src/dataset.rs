//! Boundary-focused sweeps, run-level splits, early windows and threshold
//! calibration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::observables::{Trajectory, COUNT_COLUMNS};
use crate::rng::{derive_seed, SimRng};
use crate::sim::run_simulation;

pub const MANIFEST_VERSION: &str = "epiwarn-manifest/1";

/// Lower and upper attack-rate bounds of the "ambiguous" band reported by
/// the bimodality guard.
pub const MID_BAND: (f64, f64) = (0.1, 0.3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub s_lo: f64,
    pub s_hi_values: Vec<f64>,
    pub seeds_per_value: usize,
    pub master_seed: u64,
    pub horizon_days: usize,
    pub early_stop: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self::grid(1.3, 1.3015, 1.3025, 5, 40)
    }
}

impl SweepSpec {
    /// `n_values` evenly spaced upper bounds from `first` to `last` inclusive.
    pub fn grid(s_lo: f64, first: f64, last: f64, n_values: usize, seeds_per_value: usize) -> Self {
        let s_hi_values = match n_values {
            0 => Vec::new(),
            1 => vec![first],
            n => (0..n)
                .map(|i| first + (last - first) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        Self {
            s_lo,
            s_hi_values,
            seeds_per_value,
            master_seed: 2024,
            horizon_days: 365,
            early_stop: true,
        }
    }

    pub fn n_runs(&self) -> usize {
        self.s_hi_values.len() * self.seeds_per_value
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_hi_values.is_empty() {
            return Err(Error::config("sweep.s_hi_values", "must not be empty"));
        }
        if self.seeds_per_value == 0 {
            return Err(Error::config("sweep.seeds_per_value", "must be at least 1"));
        }
        if self.horizon_days == 0 {
            return Err(Error::config("sweep.horizon_days", "must be at least 1"));
        }
        if !(self.s_lo > 0.0) {
            return Err(Error::config("sweep.s_lo", "must be positive"));
        }
        if self.s_hi_values.iter().any(|&v| !(v >= self.s_lo)) {
            return Err(Error::config("sweep.s_hi_values", "every value must be >= s_lo"));
        }
        if self.s_hi_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("sweep.s_hi_values", "must be strictly increasing"));
        }
        Ok(())
    }

    /// Template used to probe the sweep's regime: middle upper bound, sweep
    /// horizon and stopping rule.
    pub fn probe_config(&self, base: &SimConfig) -> SimConfig {
        let mid = self.s_hi_values.get(self.s_hi_values.len() / 2).copied();
        SimConfig {
            s_lo: self.s_lo,
            s_hi: mid.unwrap_or(self.s_lo),
            horizon_days: self.horizon_days,
            early_stop: self.early_stop,
            ..base.clone()
        }
    }

    /// Simulation config for one run of the sweep.
    pub fn run_config(&self, base: &SimConfig, value_index: usize, seed_index: usize) -> SimConfig {
        SimConfig {
            s_lo: self.s_lo,
            s_hi: self.s_hi_values[value_index],
            horizon_days: self.horizon_days,
            early_stop: self.early_stop,
            seed: derive_seed(self.master_seed, &[value_index as u64, seed_index as u64]),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub value_index: usize,
    pub seed_index: usize,
    pub s_hi: f64,
    pub seed: u64,
    pub rho: f64,
    pub label: u8,
    pub peak: u32,
    pub peak_day: u32,
    pub recorded_days: usize,
    /// Relative to the manifest directory.
    pub trajectory_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: SimConfig,
    pub sweep: SweepSpec,
    pub n_runs: usize,
    pub n_outbreak: usize,
    /// Fraction of runs with attack rate strictly inside `MID_BAND`.
    pub mid_band_fraction: f64,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_artifact(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json()?)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.runs.iter().map(|r| r.label).collect()
    }
}

/// A sweep held in memory: manifest plus one trajectory per run, in run order.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub manifest: Manifest,
    pub trajectories: Vec<Trajectory>,
}

impl Sweep {
    /// Writes `manifest.json` and `runs/run_XXXXXX.csv` below `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let runs_dir = dir.join("runs");
        std::fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
        self.manifest
            .runs
            .par_iter()
            .zip(self.trajectories.par_iter())
            .try_for_each(|(rec, traj)| traj.write_csv(&dir.join(&rec.trajectory_path)))?;
        self.manifest.write(&dir.join("manifest.json"))
    }

    /// Loads a sweep written by [`Sweep::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(&dir.join("manifest.json"))?;
        let rho_c = manifest.config.rho_c;
        let trajectories = manifest
            .runs
            .par_iter()
            .map(|r| Trajectory::read_csv(&dir.join(&r.trajectory_path), rho_c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            manifest,
            trajectories,
        })
    }
}

pub fn trajectory_file_name(run_id: usize) -> String {
    format!("runs/run_{run_id:06}.csv")
}

/// Runs every (value, seed) pair of the sweep in parallel. Run ids are
/// assigned value-major, so the output order does not depend on scheduling.
pub fn generate_sweep(base: &SimConfig, spec: &SweepSpec) -> Result<Sweep> {
    spec.validate()?;
    base.validate()?;
    let per = spec.seeds_per_value;
    let results: Vec<(RunRecord, Trajectory)> = (0..spec.n_runs())
        .into_par_iter()
        .map(|run_id| {
            let (vi, si) = (run_id / per, run_id % per);
            let cfg = spec.run_config(base, vi, si);
            let traj = run_simulation(&cfg, None)?;
            let o = &traj.outcome;
            let rec = RunRecord {
                run_id,
                value_index: vi,
                seed_index: si,
                s_hi: cfg.s_hi,
                seed: cfg.seed,
                rho: o.attack_rate,
                label: o.label,
                peak: o.peak_infected,
                peak_day: o.peak_day,
                recorded_days: traj.records.len(),
                trajectory_path: trajectory_file_name(run_id),
            };
            Ok((rec, traj))
        })
        .collect::<Result<_>>()?;
    let (runs, trajectories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let manifest = build_manifest(base, spec, runs);
    Ok(Sweep {
        manifest,
        trajectories,
    })
}

fn build_manifest(base: &SimConfig, spec: &SweepSpec, mut runs: Vec<RunRecord>) -> Manifest {
    runs.sort_by_key(|r| r.run_id);
    let n = runs.len();
    let mid = runs
        .iter()
        .filter(|r| r.rho > MID_BAND.0 && r.rho < MID_BAND.1)
        .count();
    Manifest {
        version: MANIFEST_VERSION.to_string(),
        config: base.clone(),
        sweep: spec.clone(),
        n_runs: n,
        n_outbreak: runs.iter().filter(|r| r.label == 1).count(),
        mid_band_fraction: if n == 0 { 0.0 } else { mid as f64 / n as f64 },
        runs,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn part_of(&self, run_id: usize) -> Option<&'static str> {
        if self.train.contains(&run_id) {
            Some("train")
        } else if self.val.contains(&run_id) {
            Some("val")
        } else if self.test.contains(&run_id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Partitions run ids after a seeded shuffle. Train and validation sizes are
/// `floor(ratio * n)`; the test partition takes the remainder.
pub fn split_runs(run_ids: &[usize], ratios: [f64; 3], split_seed: u64) -> Result<Split> {
    if ratios.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::config("split.ratios", "every ratio must be positive"));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split.ratios", "must sum to 1"));
    }
    let n = run_ids.len();
    if n < 3 {
        return Err(Error::Empty(format!("{n} runs cannot fill 3 partitions")));
    }
    // The small slack absorbs products such as 0.15 * 10200 = 1529.9999...
    let size = |r: f64| (r * n as f64 + 1e-9).floor() as usize;
    let n_train = size(ratios[0]);
    let n_val = size(ratios[1]);
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Empty(format!(
            "{n} runs leave an empty partition at ratios {ratios:?}"
        )));
    }
    let mut ids = run_ids.to_vec();
    ids.sort_unstable();
    SimRng::from_seed(split_seed).shuffle(&mut ids);
    let mut train = ids[..n_train].to_vec();
    let mut val = ids[n_train..n_train + n_val].to_vec();
    let mut test = ids[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub run_id: usize,
    pub end_day: u32,
    pub label: u8,
    pub rho: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    /// `k` rows of the nine count observables, oldest day first.
    pub values: Vec<[f64; 9]>,
}

impl Window {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Day-major flattening: all nine observables of the first day, then the next.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    /// Column `j` of [`COUNT_COLUMNS`] across the window.
    pub fn series(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }
}

/// Windows of `k` days ending on each recorded day in `[end_min, end_max]`.
pub fn extract_windows(
    traj: &Trajectory,
    run_id: usize,
    s_bounds: (f64, f64),
    k: usize,
    end_min: u32,
    end_max: u32,
) -> Vec<Window> {
    if k == 0 || traj.records.is_empty() {
        return Vec::new();
    }
    let last = traj.records.len() as u32 - 1;
    let lo = end_min.max(k as u32 - 1);
    let hi = end_max.min(last);
    (lo..=hi)
        .map(|e| {
            let start = (e + 1) as usize - k;
            Window {
                run_id,
                end_day: e,
                label: traj.outcome.label,
                rho: traj.outcome.attack_rate,
                s_lo: s_bounds.0,
                s_hi: s_bounds.1,
                values: traj.records[start..=e as usize]
                    .iter()
                    .map(|r| r.counts())
                    .collect(),
            }
        })
        .collect()
}

/// Windows for every run of `sweep` whose id is in `run_ids`, ordered by run
/// id then end day.
pub fn sweep_windows(sweep: &Sweep, run_ids: &[usize], k: usize, end_min: u32, end_max: u32) -> Vec<Window> {
    let s_lo = sweep.manifest.sweep.s_lo;
    let mut ids = run_ids.to_vec();
    ids.sort_unstable();
    ids.iter()
        .flat_map(|&id| {
            let rec = &sweep.manifest.runs[id];
            extract_windows(&sweep.trajectories[id], id, (s_lo, rec.s_hi), k, end_min, end_max)
        })
        .collect()
}

pub fn windows_csv_header(k: usize) -> String {
    let mut h = String::from("run_id,end_day,label,rho,s_lo,s_hi");
    for t in 0..k {
        for c in COUNT_COLUMNS {
            let _ = write!(h, ",t{t}_{c}");
        }
    }
    h
}

pub fn windows_to_csv(windows: &[Window]) -> String {
    let k = windows.first().map_or(0, Window::k);
    let mut out = windows_csv_header(k);
    out.push('\n');
    for w in windows {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            w.run_id, w.end_day, w.label, w.rho, w.s_lo, w.s_hi
        );
        for v in w.flat() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn windows_from_csv(text: &str, context: &str) -> Result<Vec<Window>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let n_cols = rdr.headers()?.len();
    if n_cols < 6 || (n_cols - 6) % 9 != 0 {
        return Err(Error::parse(context, format!("{n_cols} columns is not 6 + 9k")));
    }
    let k = (n_cols - 6) / 9;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| Error::parse(context, format!("column {i}: {e}")))
        };
        let values = (0..k)
            .map(|t| {
                let mut day = [0.0; 9];
                for (j, v) in day.iter_mut().enumerate() {
                    *v = f(6 + t * 9 + j)?;
                }
                Ok(day)
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Window {
            run_id: f(0)? as usize,
            end_day: f(1)? as u32,
            label: f(2)? as u8,
            rho: f(3)?,
            s_lo: f(4)?,
            s_hi: f(5)?,
            values,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub theta_tr: f64,
    pub outbreak_fraction: f64,
    pub n_outbreak: usize,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub theta_tr: f64,
    pub outbreak_fraction: f64,
    pub band: (f64, f64),
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    pub band: (f64, f64),
    pub bracket: (f64, f64),
    pub probe_seeds: usize,
    pub probe_master_seed: u64,
    pub max_iter: usize,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            band: (0.3, 0.7),
            bracket: (0.0, 200.0),
            probe_seeds: 100,
            probe_master_seed: 77,
            max_iter: 40,
        }
    }
}

/// Outbreak fraction at `theta_tr` over `seeds`.
pub fn probe_outbreak_fraction(base: &SimConfig, theta_tr: f64, seeds: &[u64]) -> Result<Probe> {
    let labels = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SimConfig {
                theta_tr,
                seed,
                ..base.clone()
            };
            run_simulation(&cfg, None).map(|t| t.outcome.label)
        })
        .collect::<Result<Vec<u8>>>()?;
    let n_outbreak = labels.iter().filter(|&&l| l == 1).count();
    Ok(Probe {
        theta_tr,
        outbreak_fraction: n_outbreak as f64 / seeds.len() as f64,
        n_outbreak,
        n_runs: seeds.len(),
    })
}

pub fn probe_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(master, &[i])).collect()
}

/// Bisection on the transmission threshold until the outbreak fraction over
/// the probe seeds falls inside `spec.band`. The fraction is non-increasing
/// in `theta_tr`, so the lower bracket end must sit at or above the band and
/// the upper end at or below it.
pub fn calibrate_threshold(base: &SimConfig, spec: &CalibrationSpec) -> Result<Calibration> {
    let (band_lo, band_hi) = spec.band;
    if !(0.0 < band_lo && band_lo <= band_hi && band_hi < 1.0) {
        return Err(Error::config("calibration.band", "must satisfy 0 < lo <= hi < 1"));
    }
    if spec.probe_seeds < 20 {
        return Err(Error::config("calibration.probe_seeds", "must be at least 20"));
    }
    let (mut lo, mut hi) = spec.bracket;
    if !(lo < hi) {
        return Err(Error::config("calibration.bracket", "must satisfy lo < hi"));
    }
    let seeds = probe_seeds(spec.probe_master_seed, spec.probe_seeds);
    let mut probes = Vec::new();
    let in_band = |f: f64| f >= band_lo && f <= band_hi;
    let done = |p: &Probe, probes: Vec<Probe>| Calibration {
        theta_tr: p.theta_tr,
        outbreak_fraction: p.outbreak_fraction,
        band: spec.band,
        probes,
    };

    let p_lo = probe_outbreak_fraction(base, lo, &seeds)?;
    let p_hi = probe_outbreak_fraction(base, hi, &seeds)?;
    probes.push(p_lo.clone());
    probes.push(p_hi.clone());
    if in_band(p_lo.outbreak_fraction) {
        return Ok(done(&p_lo, probes));
    }
    if in_band(p_hi.outbreak_fraction) {
        return Ok(done(&p_hi, probes));
    }
    let no_crossing = |lo: f64, hi: f64, flo: f64, fhi: f64| Error::NoCrossing {
        lo,
        hi,
        frac_lo: flo,
        frac_hi: fhi,
    };
    if p_lo.outbreak_fraction < band_lo || p_hi.outbreak_fraction > band_hi {
        return Err(no_crossing(lo, hi, p_lo.outbreak_fraction, p_hi.outbreak_fraction));
    }
    let (mut f_lo, mut f_hi) = (p_lo.outbreak_fraction, p_hi.outbreak_fraction);
    for _ in 0..spec.max_iter {
        let mid = 0.5 * (lo + hi);
        let p = probe_outbreak_fraction(base, mid, &seeds)?;
        probes.push(p.clone());
        if in_band(p.outbreak_fraction) {
            return Ok(done(&p, probes));
        }
        if p.outbreak_fraction > band_hi {
            lo = mid;
            f_lo = p.outbreak_fraction;
        } else {
            hi = mid;
            f_hi = p.outbreak_fraction;
        }
    }
    Err(no_crossing(lo, hi, f_lo, f_hi))
}

/// Group windows by run id, preserving order within each run.
pub fn windows_by_run(windows: &[Window]) -> BTreeMap<usize, Vec<&Window>> {
    let mut map: BTreeMap<usize, Vec<&Window>> = BTreeMap::new();
    for w in windows {
        map.entry(w.run_id).or_default().push(w);
    }
    map
}

pub(crate) fn read_artifact(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(PathBuf::from(path)),
        _ => Error::io(path, e),
    })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
