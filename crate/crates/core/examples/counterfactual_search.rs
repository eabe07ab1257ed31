//! Contact-ranked quarantine search on one outbreak baseline.

use epiwarn::dataset::SweepSpec;
use epiwarn::intervention::{enumerate_candidates, search_best, EffectClass, InterventionConfig};
use epiwarn::pipeline::DESK_THETA_TR;
use epiwarn::{SimConfig, Simulator};

fn main() -> epiwarn::Result<()> {
    let base = SimConfig {
        theta_tr: DESK_THETA_TR,
        ..SimConfig::default()
    };
    // Run 7 of the default desk sweep: value 0, seed 7.
    let cfg = SweepSpec::default().run_config(&base, 0, 7);
    let sim = Simulator::new(cfg)?;
    let ic = InterventionConfig::default();
    let candidates = enumerate_candidates(&sim, &ic)?;
    let result = search_best(&sim, &candidates, ic.criterion)?;

    println!("baseline attack rate {:.3}, {} candidates", result.baseline.attack_rate, candidates.len());
    for r in result.ranked.iter().take(5) {
        println!(
            "agent {:>3} day {}: rho {:.3} -> {:.3}, peak {} -> {} ({:?})",
            r.spec.agent, r.spec.day, r.rho0, r.rho_u, r.peak0, r.peak_u, r.effect
        );
    }
    for e in [EffectClass::Prevented, EffectClass::Reduced, EffectClass::Null] {
        println!("{e:?}: {}", result.count(e));
    }
    Ok(())
}
