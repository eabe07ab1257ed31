//! Store a counterfactual case and render its chart.
//!
//!     cargo run --release --example report_chart -- /tmp/case

use std::path::PathBuf;

use epiwarn::chart::counterfactual_svg;
use epiwarn::dataset::SweepSpec;
use epiwarn::intervention::Case;
use epiwarn::pipeline::DESK_THETA_TR;
use epiwarn::{InterventionSpec, SimConfig, Simulator};

fn main() -> epiwarn::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("epiwarn_case"), PathBuf::from);
    let base = SimConfig {
        theta_tr: DESK_THETA_TR,
        ..SimConfig::default()
    };
    let sim = Simulator::new(SweepSpec::default().run_config(&base, 0, 7))?;
    let case = Case::build(&sim, InterventionSpec { agent: 159, day: 3 })?;
    case.write(&dir)?;

    let svg = counterfactual_svg(&case.baseline, &case.counterfactual, case.report.spec.day, "agent 159, day 3");
    std::fs::write(dir.join("chart.svg"), svg).map_err(|e| epiwarn::Error::io(dir.join("chart.svg"), e))?;
    println!("{:?}: rho {:.3} -> {:.3}", case.report.effect, case.report.rho0, case.report.rho_u);
    println!("wrote {}", dir.display());
    Ok(())
}
