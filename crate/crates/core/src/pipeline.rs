//! Pipeline configuration and the file-level commands behind the CLI.
//!
//! Every command reads its inputs from disk, writes its outputs below one
//! directory, and drops a `provenance.json` (config echo, seeds, tool
//! version) next to them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chart::counterfactual_svg;
use crate::config::SimConfig;
use crate::dataset::{
    calibrate_threshold, generate_sweep, read_artifact, split_runs, sweep_windows, windows_to_csv, write_file,
    Calibration, CalibrationSpec, Split, Sweep, SweepSpec,
};
use crate::earlywarn::{evaluate_ew, fit_early_warning, EarlyWarnConfig, EvalReport, FeatureLayout, ForestModel};
use crate::error::{Error, Result};
use crate::intervention::{
    enumerate_candidates, search_best, Case, EffectClass, InterventionConfig, InterventionReport, SearchResult,
};
use crate::koopman::{
    evaluate_koopman, forecast_mse_ratio, sweep_samples, train, KoopmanConfig, KoopmanEval, KoopmanModel, TrainReport,
};
use crate::observables::Trajectory;
use crate::sim::{InterventionSpec, Simulator};

pub const TOOL: &str = "epiwarn";
pub const CONFIG_ENV: &str = "EPIWARN_CONFIG";
pub const PROVENANCE: &str = "provenance.json";

/// Transmission threshold found by calibrating the default desk sweep.
pub const DESK_THETA_TR: f64 = 58.49609375;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.7, 0.15, 0.15],
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub root: PathBuf,
    pub calibration: PathBuf,
    pub sweep: PathBuf,
    pub koopman: PathBuf,
    pub earlywarn: PathBuf,
    pub eval: PathBuf,
    pub intervene: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            root: "out".into(),
            calibration: "calibration".into(),
            sweep: "sweep".into(),
            koopman: "koopman".into(),
            earlywarn: "earlywarn".into(),
            eval: "eval".into(),
            intervene: "intervene".into(),
        }
    }
}

impl Paths {
    pub fn resolve(&self, sub: &Path) -> PathBuf {
        self.root.join(sub)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub calibration: CalibrationSpec,
    pub sweep: SweepSpec,
    pub split: SplitSpec,
    pub koopman: KoopmanConfig,
    pub earlywarn: EarlyWarnConfig,
    pub intervention: InterventionConfig,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig {
                theta_tr: DESK_THETA_TR,
                ..SimConfig::default()
            },
            calibration: CalibrationSpec::default(),
            sweep: SweepSpec::default(),
            split: SplitSpec::default(),
            koopman: KoopmanConfig::default(),
            earlywarn: EarlyWarnConfig::default(),
            intervention: InterventionConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.sweep.validate()?;
        self.koopman.validate()?;
        self.earlywarn.validate()?;
        self.intervention.validate()?;
        if self.earlywarn.end_day_max < self.koopman.k as u32 - 1 {
            return Err(Error::config("earlywarn.end_day_max", "leaves no window of koopman.k days"));
        }
        Ok(())
    }

    /// Parses a JSON document, applies `key.path=value` overrides, fills
    /// defaults and validates.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        if !doc.is_object() {
            return Err(Error::config("config", "top level must be a JSON object"));
        }
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Explicit path, else `$EPIWARN_CONFIG`, else built-in defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let text = match path.map(Path::to_path_buf).or(env_path) {
            Some(p) => read_artifact(&p)?,
            None => "{}".to_string(),
        };
        Self::from_json_with_overrides(&text, overrides)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Sets `a.b.c` in `doc`. The value is read as JSON when it parses, and as a
/// plain string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key.path=value"))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty path segment"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for p in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not inside an object")))?;
        node = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Error::config(key, "parent is not an object"))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<String>,
    pub config: PipelineConfig,
}

pub fn write_provenance(dir: &Path, command: &str, cfg: &PipelineConfig, inputs: &[&Path]) -> Result<()> {
    let seeds = [
        ("sim", cfg.sim.seed),
        ("sweep_master", cfg.sweep.master_seed),
        ("calibration_probes", cfg.calibration.probe_master_seed),
        ("split", cfg.split.seed),
        ("koopman", cfg.koopman.seed),
        ("earlywarn", cfg.earlywarn.seed),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let p = Provenance {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seeds,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config: cfg.clone(),
    };
    write_file(&dir.join(PROVENANCE), &(serde_json::to_string_pretty(&p)? + "\n"))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_artifact(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// One run of `cfg.sim`, optionally with a seed override and a quarantine.
/// Writes `trajectory.csv` and `outcome.json`.
pub fn simulate(cfg: &PipelineConfig, seed: Option<u64>, intervention: Option<InterventionSpec>, out: &Path) -> Result<Trajectory> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    let traj = Simulator::new(cfg.sim.clone())?.run(intervention)?;
    traj.write_csv(&out.join("trajectory.csv"))?;
    write_json(&out.join("outcome.json"), &traj.outcome)?;
    write_provenance(out, "simulate", &cfg, &[])?;
    Ok(traj)
}

/// Bisects the transmission threshold on the sweep's probe configuration.
pub fn calibrate(cfg: &PipelineConfig, out: &Path) -> Result<Calibration> {
    let base = cfg.sweep.probe_config(&cfg.sim);
    let cal = calibrate_threshold(&base, &cfg.calibration)?;
    write_json(&out.join("calibration.json"), &cal)?;
    write_provenance(out, "calibrate", cfg, &[])?;
    Ok(cal)
}

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    read_json(path)
}

/// Generates and writes the sweep. With a calibration file, its threshold
/// replaces `sim.theta_tr` (and is echoed in the manifest and provenance).
pub fn sweep(cfg: &PipelineConfig, calibration: Option<&Path>, out: &Path) -> Result<Sweep> {
    let mut cfg = cfg.clone();
    let mut inputs = Vec::new();
    if let Some(p) = calibration {
        cfg.sim.theta_tr = read_calibration(p)?.theta_tr;
        inputs.push(p);
    }
    let sw = generate_sweep(&cfg.sim, &cfg.sweep)?;
    sw.write(out)?;
    write_provenance(out, "sweep", &cfg, &inputs)?;
    Ok(sw)
}

pub fn split_for(cfg: &PipelineConfig, sweep: &Sweep) -> Result<Split> {
    let ids: Vec<usize> = sweep.manifest.runs.iter().map(|r| r.run_id).collect();
    split_runs(&ids, cfg.split.ratios, cfg.split.seed)
}

/// Observables are divided by the population size before encoding.
pub fn count_scale(n_agents: usize) -> Vec<f64> {
    vec![n_agents as f64; 9]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub initial_val_total: f64,
    pub selected_epoch: usize,
    pub selected_val_total: f64,
    pub test_forecast_mse_ratio: f64,
    pub test: KoopmanEval,
}

pub fn train_koopman(cfg: &PipelineConfig, sweep_dir: &Path, out: &Path) -> Result<(KoopmanModel, TrainReport, KoopmanSummary)> {
    let sw = Sweep::read(sweep_dir)?;
    let split = split_for(cfg, &sw)?;
    let kc = &cfg.koopman;
    let samples = |ids: &[usize]| sweep_samples(&sw, ids, kc.k, kc.horizon, kc.end_day_min, kc.end_day_max);
    let (tr, va, te) = (samples(&split.train), samples(&split.val), samples(&split.test));
    let (model, report) = train(&tr, &va, kc, count_scale(sw.manifest.config.n_agents))?;
    let summary = KoopmanSummary {
        n_train: tr.len(),
        n_val: va.len(),
        n_test: te.len(),
        initial_val_total: report.initial().val.total,
        selected_epoch: report.selected_epoch,
        selected_val_total: report.selected().val.total,
        test_forecast_mse_ratio: forecast_mse_ratio(&model, &te)?,
        test: evaluate_koopman(&model, &te, cfg.earlywarn.threshold)?,
    };
    write_file(&out.join("model.json"), &model.to_json()?)?;
    write_file(&out.join("training.csv"), &report.to_csv())?;
    write_json(&out.join("split.json"), &split)?;
    write_json(&out.join("summary.json"), &summary)?;
    write_provenance(out, "train-koopman", cfg, &[sweep_dir])?;
    Ok((model, report, summary))
}

pub fn read_koopman(path: &Path) -> Result<KoopmanModel> {
    KoopmanModel::from_json(&read_artifact(path)?)
}

fn model_for(cfg: &PipelineConfig, koopman_model: Option<&Path>) -> Result<Option<KoopmanModel>> {
    if !cfg.earlywarn.use_koopman {
        return Ok(None);
    }
    let path = koopman_model.ok_or_else(|| {
        Error::config("earlywarn.use_koopman", "Koopman features need a trained model (--koopman)")
    })?;
    let model = read_koopman(path)?;
    if model.dims.k != cfg.koopman.k {
        return Err(Error::config("koopman.k", "does not match the trained model"));
    }
    Ok(Some(model))
}

pub fn train_ew(
    cfg: &PipelineConfig,
    sweep_dir: &Path,
    koopman_model: Option<&Path>,
    out: &Path,
) -> Result<(ForestModel, FeatureLayout)> {
    let sw = Sweep::read(sweep_dir)?;
    let model = model_for(cfg, koopman_model)?;
    let split = split_for(cfg, &sw)?;
    let ew = &cfg.earlywarn;
    let windows = sweep_windows(&sw, &split.train, cfg.koopman.k, ew.end_day_min, ew.end_day_max);
    let (forest, layout) = fit_early_warning(&windows, model.as_ref(), ew)?;
    write_file(&out.join("forest.json"), &forest.to_json()?)?;
    write_json(&out.join("layout.json"), &layout)?;
    write_file(&out.join("train_windows.csv"), &windows_to_csv(&windows))?;
    let mut inputs = vec![sweep_dir];
    inputs.extend(koopman_model);
    write_provenance(out, "train-ew", cfg, &inputs)?;
    Ok((forest, layout))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub n_test_runs: usize,
    pub early_warning: EvalReport,
    /// Outbreak-head metrics of the Koopman model on the same windows.
    pub koopman_head: Option<KoopmanEval>,
}

pub fn eval(
    cfg: &PipelineConfig,
    sweep_dir: &Path,
    koopman_model: Option<&Path>,
    ew_dir: &Path,
    out: &Path,
) -> Result<EvalOutput> {
    let sw = Sweep::read(sweep_dir)?;
    let model = model_for(cfg, koopman_model)?;
    let forest = ForestModel::from_json(&read_artifact(&ew_dir.join("forest.json"))?)?;
    let layout: FeatureLayout = read_json(&ew_dir.join("layout.json"))?;
    let split = split_for(cfg, &sw)?;
    let ew = &cfg.earlywarn;
    let windows = sweep_windows(&sw, &split.test, cfg.koopman.k, ew.end_day_min, ew.end_day_max);
    let report = evaluate_ew(&forest, &layout, model.as_ref(), &windows, ew.threshold)?;
    let koopman_head = match &model {
        Some(m) => {
            let s = sweep_samples(&sw, &split.test, m.dims.k, m.horizon, ew.end_day_min, ew.end_day_max);
            Some(evaluate_koopman(m, &s, ew.threshold)?)
        }
        None => None,
    };
    let output = EvalOutput {
        n_test_runs: split.test.len(),
        early_warning: report,
        koopman_head,
    };
    write_json(&out.join("eval.json"), &output)?;
    write_file(&out.join("end_day.csv"), &output.early_warning.end_day_csv())?;
    write_file(&out.join("families.csv"), &output.early_warning.family_csv())?;
    write_file(&out.join("test_windows.csv"), &windows_to_csv(&windows))?;
    let mut inputs = vec![sweep_dir, ew_dir];
    inputs.extend(koopman_model);
    write_provenance(out, "eval", cfg, &inputs)?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSearch {
    pub run_id: usize,
    pub seed: u64,
    pub s_hi: f64,
    pub rho0: f64,
    pub n_candidates: usize,
    pub prevented: usize,
    pub reduced: usize,
    pub null: usize,
    pub best: InterventionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSummary {
    pub config: InterventionConfig,
    pub baselines: Vec<BaselineSearch>,
    /// (run id, directory) of the stored prevented example, if any.
    pub prevented_case: Option<(usize, String)>,
    /// (run id, directory) of the stored reduced-but-not-prevented example.
    pub reduced_case: Option<(usize, String)>,
}

impl InterventionSummary {
    pub fn total(&self, effect: EffectClass) -> usize {
        self.baselines
            .iter()
            .map(|b| match effect {
                EffectClass::Prevented => b.prevented,
                EffectClass::Reduced => b.reduced,
                EffectClass::Null => b.null,
            })
            .sum()
    }
}

/// Simulator reproducing run `run_id` of a stored sweep.
pub fn sweep_run_simulator(sw: &Sweep, run_id: usize) -> Result<Simulator> {
    let rec = sw
        .manifest
        .runs
        .iter()
        .find(|r| r.run_id == run_id)
        .ok_or_else(|| Error::InvalidIntervention(format!("run {run_id} is not in the sweep")))?;
    let cfg = sw.manifest.sweep.run_config(&sw.manifest.config, rec.value_index, rec.seed_index);
    Simulator::new(cfg)
}

/// Searches the first `n_baselines` outbreak runs of the sweep (or the given
/// runs) and stores per-run ranked tables plus one prevented and one reduced
/// example case.
pub fn intervene(cfg: &PipelineConfig, sweep_dir: &Path, runs: Option<&[usize]>, out: &Path) -> Result<InterventionSummary> {
    let sw = Sweep::read(sweep_dir)?;
    let ic = &cfg.intervention;
    let selected: Vec<usize> = match runs {
        Some(r) => r.to_vec(),
        None => sw
            .manifest
            .runs
            .iter()
            .filter(|r| r.label == 1)
            .map(|r| r.run_id)
            .take(ic.n_baselines)
            .collect(),
    };
    if selected.is_empty() {
        return Err(Error::Empty("no outbreak baselines in the sweep".into()));
    }
    let mut baselines = Vec::new();
    let mut prevented: Option<(usize, InterventionSpec)> = None;
    let mut reduced: Option<(usize, InterventionSpec)> = None;
    for &run_id in &selected {
        let sim = sweep_run_simulator(&sw, run_id)?;
        let candidates = enumerate_candidates(&sim, ic)?;
        let result: SearchResult = search_best(&sim, &candidates, ic.criterion)?;
        let stored = &sw.trajectories[run_id].outcome;
        if result.baseline != *stored {
            return Err(Error::parse(
                sweep_dir.display().to_string(),
                format!("run {run_id} does not replay to its stored trajectory"),
            ));
        }
        let dir = out.join(format!("run_{run_id:06}"));
        write_json(&dir.join("search.json"), &result)?;
        Case::build(&sim, result.best)?.write(&dir.join("best"))?;
        let first = |effect| result.ranked.iter().find(|r| r.effect == effect).map(|r| (run_id, r.spec));
        prevented = prevented.or_else(|| first(EffectClass::Prevented));
        reduced = reduced.or_else(|| first(EffectClass::Reduced));
        baselines.push(BaselineSearch {
            run_id,
            seed: sim.config().seed,
            s_hi: sim.config().s_hi,
            rho0: result.baseline.attack_rate,
            n_candidates: candidates.len(),
            prevented: result.count(EffectClass::Prevented),
            reduced: result.count(EffectClass::Reduced),
            null: result.count(EffectClass::Null),
            best: result.best_report().clone(),
        });
    }
    let store = |found: Option<(usize, InterventionSpec)>, name: &str| -> Result<Option<(usize, String)>> {
        let Some((run_id, spec)) = found else { return Ok(None) };
        let sim = sweep_run_simulator(&sw, run_id)?;
        let rel = format!("cases/{name}");
        Case::build(&sim, spec)?.write(&out.join(&rel))?;
        Ok(Some((run_id, rel)))
    };
    let summary = InterventionSummary {
        config: ic.clone(),
        prevented_case: store(prevented, "prevented")?,
        reduced_case: store(reduced, "reduced")?,
        baselines,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_provenance(out, "intervene", cfg, &[sweep_dir])?;
    Ok(summary)
}

/// Writes the counterfactual chart of a stored case; returns the SVG path.
pub fn report(cfg: &PipelineConfig, case_dir: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let case = Case::read(case_dir, cfg.sim.rho_c)?;
    let r = &case.report;
    let title = format!(
        "quarantine agent {} on day {}: attack rate {:.3} -> {:.3}",
        r.spec.agent, r.spec.day, r.rho0, r.rho_u
    );
    let svg = counterfactual_svg(&case.baseline, &case.counterfactual, r.spec.day, &title);
    let path = out.map_or_else(|| case_dir.join("chart.svg"), Path::to_path_buf);
    write_file(&path, &svg)?;
    if let Some(dir) = path.parent() {
        write_provenance(dir, "report", cfg, &[case_dir])?;
    }
    Ok(path)
}
