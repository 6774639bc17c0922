//! Measure both convergence orders: first order in time by dt-halving
//! self-convergence, second order in space against a manufactured cosine
//! solution with dt tied to h^2.
//!
//!     cargo run --example convergence_orders

use kymo::elliptic::SolverSettings;
use kymo::experiments::{mms_refinement, temporal_refinement};
use kymo::grid::GridSpec;
use kymo::mms::MmsCase;
use kymo::motility::MotilitySpec;
use kymo::scheme::{InitSpec, SimConfig};

fn main() -> kymo::Result<()> {
    let mut temporal_cfg = SimConfig {
        grid: GridSpec::new_1d(24, 1.0)?,
        motility: MotilitySpec::ExpDecay,
        tau: 0.0,
        epsilon: 0.01,
        epsilon0: 0.4,
        dt: 2e-3,
        t_final: 0.04,
        solver: SolverSettings::default(),
        initial_u: InitSpec::GaussianBump {
            center: vec![0.5],
            width: 0.25,
            amplitude: 1.0,
            floor: 0.2,
        },
        initial_v: InitSpec::Constant { value: 0.3 },
        cadence: 1,
        mms: None,
        outside_theory: false,
    };
    let t = temporal_refinement(&temporal_cfg, 4)?;
    println!("temporal (dt-halving Cauchy differences):");
    println!("  errors {:?}", t.errors);
    println!("  observed order {:.3} (expected {} +/- {}) -> {:?}\n", t.observed_order, t.expected_order, t.tolerance, t.status);

    temporal_cfg.grid = GridSpec::new_1d(16, 1.0)?;
    temporal_cfg.motility = MotilitySpec::Constant { g0: 0.5 };
    temporal_cfg.epsilon0 = 0.8;
    temporal_cfg.mms = Some(MmsCase::CosineDecay1d);
    temporal_cfg.dt = 4e-3;
    temporal_cfg.t_final = 0.064;
    let s = mms_refinement(&temporal_cfg, 3)?;
    println!("spatial (manufactured cosine solution, dt ~ h^2):");
    println!("  errors {:?}", s.errors);
    println!("  observed order {:.3} (expected {} +/- {}) -> {:?}", s.observed_order, s.expected_order, s.tolerance, s.status);
    Ok(())
}
