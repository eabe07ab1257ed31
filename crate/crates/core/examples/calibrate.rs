//! Bisect the transmission threshold until roughly half the probe runs break
//! out. Takes a few seconds per probe on one core.

use epiwarn::dataset::{calibrate_threshold, CalibrationSpec, SweepSpec};
use epiwarn::SimConfig;

fn main() -> epiwarn::Result<()> {
    let base = SweepSpec::default().probe_config(&SimConfig::default());
    let spec = CalibrationSpec {
        probe_seeds: 40,
        ..CalibrationSpec::default()
    };
    let cal = calibrate_threshold(&base, &spec)?;
    for p in &cal.probes {
        println!("theta {:>12.6}  outbreak fraction {:.3}", p.theta_tr, p.outbreak_fraction);
    }
    println!("calibrated theta_tr = {} (fraction {:.3})", cal.theta_tr, cal.outbreak_fraction);
    Ok(())
}
