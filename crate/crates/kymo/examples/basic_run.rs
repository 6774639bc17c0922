//! Integrate a 1D bump and print the audited diagnostics as a table.
//!
//!     cargo run --example basic_run

use kymo::elliptic::SolverSettings;
use kymo::grid::GridSpec;
use kymo::motility::MotilitySpec;
use kymo::scheme::{run, InitSpec, SimConfig};

fn main() -> kymo::Result<()> {
    let cfg = SimConfig {
        grid: GridSpec::new_1d(64, 1.0)?,
        motility: MotilitySpec::ExpDecay,
        tau: 0.0,
        epsilon: 0.01,
        epsilon0: 0.4,
        dt: 1e-3,
        t_final: 0.1,
        solver: SolverSettings::default(),
        initial_u: InitSpec::GaussianBump {
            center: vec![0.4],
            width: 0.1,
            amplitude: 2.0,
            floor: 0.1,
        },
        initial_v: InitSpec::Constant { value: 0.3 },
        cadence: 10,
        mms: None,
        outside_theory: false,
    };
    let out = run(&cfg)?;
    println!("{:>8} {:>12} {:>10} {:>10} {:>10} {:>12}", "t", "mass", "max u", "max v", "entropy", "key resid");
    for r in &out.records {
        println!(
            "{:8.4} {:12.9} {:10.5} {:10.5} {:10.5} {:12.3e}",
            r.t, r.mass, r.max_u, r.max_v, r.entropy, r.key_identity_residual
        );
    }
    println!(
        "\n{} steps, {} solver iterations, worst residual {:.2e}",
        out.steps_taken, out.total_stats.iterations, out.total_stats.residual
    );
    Ok(())
}
