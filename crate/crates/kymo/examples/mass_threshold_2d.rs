//! Qualitative 2D probe of the accumulation dichotomy: a uniform population
//! u with a seeded signal bump v. Where v is high the motility gamma(v) is
//! low, so cells pile up there — but only if the total mass is large enough
//! to sustain the signal. The probe rescales one profile across a mass
//! ladder and classifies each run from its peak-density trend.
//!
//!     cargo run --example mass_threshold_2d

use kymo::elliptic::SolverSettings;
use kymo::experiments::critical_mass_probe;
use kymo::grid::GridSpec;
use kymo::motility::MotilitySpec;
use kymo::scheme::{InitSpec, SimConfig};

fn main() -> kymo::Result<()> {
    let cfg = SimConfig {
        grid: GridSpec::new_2d(24, 24, 1.0, 1.0)?,
        motility: MotilitySpec::ExpDecay,
        tau: 0.5, // finite relaxation so the seeded signal can act before it equilibrates
        epsilon: 0.001,
        epsilon0: 0.4,
        dt: 2e-3,
        t_final: 1.0,
        solver: SolverSettings::default(),
        initial_u: InitSpec::Constant { value: 1.0 }, // rescaled per ladder mass
        initial_v: InitSpec::GaussianBump {
            center: vec![0.5, 0.5],
            width: 0.15,
            amplitude: 2.0,
            floor: 0.1,
        },
        cadence: 50,
        mms: None,
        outside_theory: false,
    };
    let report = critical_mass_probe(&cfg, &[1.0, 5.0, 10.0, 20.0, 40.0])?;
    println!("{:>10} {:>12} {:>10}", "mass", "peak ratio", "verdict");
    for p in &report.classifications {
        println!("{:10.2} {:12.4} {:>10}", p.mass, p.peak_ratio, p.classification);
    }
    Ok(())
}
