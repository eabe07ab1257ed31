use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epiwarn::intervention::EffectClass;
use epiwarn::pipeline::{self, PipelineConfig};
use epiwarn::{InterventionSpec, Result};

#[derive(Parser)]
#[command(name = "epiwarn", version, about = "Epidemic simulation, early warning and counterfactual quarantine search")]
struct Cli {
    /// Pipeline config (JSON). Falls back to $EPIWARN_CONFIG, then defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. --set sim.theta_tr=60
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Simulate {
        #[arg(long)]
        seed: Option<u64>,
        /// Quarantine this agent (requires --day).
        #[arg(long, requires = "day")]
        agent: Option<u32>,
        #[arg(long, requires = "agent")]
        day: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the susceptibility sweep.
    Sweep {
        /// calibration.json whose threshold replaces sim.theta_tr.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bisect the transmission threshold into the near-critical band.
    Calibrate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the Koopman autoencoder on a sweep.
    TrainKoopman {
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the random-forest early-warning classifier.
    TrainEw {
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Koopman model.json.
        #[arg(long)]
        koopman: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the classifier on held-out runs.
    Eval {
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long)]
        koopman: Option<PathBuf>,
        /// Directory written by train-ew.
        #[arg(long)]
        ew: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search single-agent quarantines on outbreak baselines.
    Intervene {
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Run ids to search instead of the first outbreak runs.
        #[arg(long, value_delimiter = ',')]
        runs: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the SVG chart of a stored case.
    Report {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let p = &cfg.paths;
    let or = |given: Option<PathBuf>, sub: &PathBuf| given.unwrap_or_else(|| p.resolve(sub));
    let default_model = || p.resolve(&p.koopman).join("model.json");
    match cli.command {
        Command::Simulate { seed, agent, day, out } => {
            let spec = agent.zip(day).map(|(agent, day)| InterventionSpec { agent, day });
            let t = pipeline::simulate(&cfg, seed, spec, &out)?;
            let o = &t.outcome;
            println!(
                "days {} attack_rate {} label {} peak {} (day {})",
                t.records.len(),
                o.attack_rate,
                o.label,
                o.peak_infected,
                o.peak_day
            );
        }
        Command::Sweep { calibration, out } => {
            let out = or(out, &p.sweep);
            let sw = pipeline::sweep(&cfg, calibration.as_deref(), &out)?;
            let m = &sw.manifest;
            println!(
                "{} runs, {} outbreaks, mid-band fraction {} -> {}",
                m.n_runs,
                m.n_outbreak,
                m.mid_band_fraction,
                out.display()
            );
        }
        Command::Calibrate { out } => {
            let out = or(out, &p.calibration);
            let c = pipeline::calibrate(&cfg, &out)?;
            println!(
                "theta_tr {} (outbreak fraction {}, {} probes) -> {}",
                c.theta_tr,
                c.outbreak_fraction,
                c.probes.len(),
                out.display()
            );
        }
        Command::TrainKoopman { sweep, out } => {
            let (sweep, out) = (or(sweep, &p.sweep), or(out, &p.koopman));
            let (_, _, s) = pipeline::train_koopman(&cfg, &sweep, &out)?;
            println!(
                "val total {} -> {} (epoch {}), test forecast mse ratio {} -> {}",
                s.initial_val_total,
                s.selected_val_total,
                s.selected_epoch,
                s.test_forecast_mse_ratio,
                out.display()
            );
        }
        Command::TrainEw { sweep, koopman, out } => {
            let (sweep, out) = (or(sweep, &p.sweep), or(out, &p.earlywarn));
            let koopman = koopman.or_else(|| cfg.earlywarn.use_koopman.then(default_model));
            let (forest, layout) = pipeline::train_ew(&cfg, &sweep, koopman.as_deref(), &out)?;
            println!("{} trees over {} features -> {}", forest.trees.len(), layout.len(), out.display());
        }
        Command::Eval { sweep, koopman, ew, out } => {
            let (sweep, ew, out) = (or(sweep, &p.sweep), or(ew, &p.earlywarn), or(out, &p.eval));
            let koopman = koopman.or_else(|| cfg.earlywarn.use_koopman.then(default_model));
            let r = pipeline::eval(&cfg, &sweep, koopman.as_deref(), &ew, &out)?;
            let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |a| format!("{a:.4}"));
            println!(
                "window auc {} accuracy {:.4} | run auc {} accuracy {:.4} -> {}",
                fmt(r.early_warning.overall.roc_auc),
                r.early_warning.overall.accuracy,
                fmt(r.early_warning.run_level.roc_auc),
                r.early_warning.run_level.accuracy,
                out.display()
            );
        }
        Command::Intervene { sweep, runs, out } => {
            let (sweep, out) = (or(sweep, &p.sweep), or(out, &p.intervene));
            let s = pipeline::intervene(&cfg, &sweep, runs.as_deref(), &out)?;
            for b in &s.baselines {
                println!(
                    "run {}: rho0 {:.3}, {} candidates, best agent {} day {} delta_rho {:.3} ({:?})",
                    b.run_id, b.rho0, b.n_candidates, b.best.spec.agent, b.best.spec.day, b.best.delta_rho, b.best.effect
                );
            }
            println!(
                "prevented {} reduced {} null {} -> {}",
                s.total(EffectClass::Prevented),
                s.total(EffectClass::Reduced),
                s.total(EffectClass::Null),
                out.display()
            );
        }
        Command::Report { case, out } => {
            let path = pipeline::report(&cfg, &case, out.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
