//! Multi-run studies: the epsilon-gap sweep, temporal and spatial refinement
//! orders, uniform regularity budgets across a run family, and a 2D
//! mass-threshold probe.
//!
//! Every study runs its family in a fixed order (or with a deterministic
//! index-ordered reduction when KYMO_THREADS allows workers), so reports are
//! reproducible byte for byte.

use crate::audit::{self, CheckResult, RegularityBudgets};
use crate::error::{KymoError, Result};
use crate::grid::{self, GridSpec, NormKind};
use crate::scheme::{run, run_with, RunOutput, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ExperimentStatus {
    Pass,
    Fail,
    /// The data does not support a trustworthy fit (scattered residuals).
    Unreliable,
    /// The quantity under study vanishes identically; nothing to fit.
    Degenerate,
}

/// Least-squares line through (x_i, y_i).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// sqrt(1 - R^2): 0 for a perfect line, ~1 for noise.
    pub scatter: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<FitResult> {
    let n = points.len();
    if n < 3 {
        return Err(KymoError::InsufficientPoints { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let syy = points.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>();
    if sxx == 0.0 {
        return Err(KymoError::DomainViolation("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let scatter = if syy == 0.0 {
        0.0
    } else {
        (1.0 - (sxy * sxy) / (sxx * syy)).max(0.0).sqrt()
    };
    Ok(FitResult { slope, intercept: my - slope * mx, scatter })
}

fn worker_count() -> usize {
    std::env::var("KYMO_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Run a family of configs, sequentially or on up to KYMO_THREADS workers.
/// Results always come back in input order.
pub fn run_family(configs: &[SimConfig]) -> Result<Vec<RunOutput>> {
    let workers = worker_count().min(configs.len().max(1));
    if workers <= 1 {
        return configs.iter().map(run).collect();
    }
    let mut slots: Vec<Option<Result<RunOutput>>> = Vec::new();
    slots.resize_with(configs.len(), || None);
    std::thread::scope(|scope| {
        for (chunk_cfg, chunk_out) in configs
            .chunks(configs.len().div_ceil(workers))
            .zip(slots.chunks_mut(configs.len().div_ceil(workers)))
        {
            scope.spawn(move || {
                for (cfg, slot) in chunk_cfg.iter().zip(chunk_out.iter_mut()) {
                    *slot = Some(run(cfg));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled every slot")).collect()
}

/// Time-integrated squared H1 gap between the lift w and the signal v:
///   G = sum_n dt (|w - v|_L2^2 + |grad(w - v)|_L2^2)
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonSweepReport {
    pub epsilons: Vec<f64>,
    pub gap_values: Vec<f64>,
    pub fit: Option<FitResult>,
    pub status: ExperimentStatus,
    pub detail: String,
}

pub fn epsilon_sweep(base: &SimConfig, epsilons: &[f64]) -> Result<EpsilonSweepReport> {
    if epsilons.len() < 3 {
        return Err(KymoError::InsufficientPoints { needed: 3, got: epsilons.len() });
    }
    if base.tau != 0.0 {
        return Err(KymoError::DomainViolation(
            "the cutoff-gap sweep is defined for the instantaneous-signal case tau = 0".into(),
        ));
    }
    let mut eps: Vec<f64> = epsilons.to_vec();
    eps.sort_by(|a, b| a.total_cmp(b));
    let mut gaps = Vec::with_capacity(eps.len());
    for &e in &eps {
        let mut cfg = base.clone();
        cfg.epsilon = e;
        cfg.cadence = 1;
        let mut g = 0.0;
        run_with(&cfg, |state, _| {
            if state.step_index > 0 {
                let diff = state.w.zip_with(&state.v, |a, b| a - b);
                let l2 = grid::norm(&diff, NormKind::L2);
                let gr = grid::grad_norm(&diff, 2.0);
                g += cfg.dt * (l2 * l2 + gr * gr);
            }
            Ok(())
        })?;
        gaps.push(g);
    }
    if gaps.iter().all(|&g| g <= 1e-30) {
        return Ok(EpsilonSweepReport {
            epsilons: eps,
            gap_values: gaps,
            fit: None,
            status: ExperimentStatus::Degenerate,
            detail: "gap vanishes at every epsilon (w and v already coincide)".into(),
        });
    }
    let points: Vec<(f64, f64)> = eps
        .iter()
        .zip(&gaps)
        .filter(|(_, &g)| g > 0.0)
        .map(|(&e, &g)| (e.ln(), g.ln()))
        .collect();
    let fit = fit_line(&points)?;
    let (status, detail) = if fit.scatter > 0.2 {
        (
            ExperimentStatus::Unreliable,
            format!("log-log fit too scattered (scatter {:.3})", fit.scatter),
        )
    } else if fit.slope >= 0.9 {
        (
            ExperimentStatus::Pass,
            format!("gap closes at rate eps^{:.3}", fit.slope),
        )
    } else {
        (
            ExperimentStatus::Fail,
            format!("gap decay rate {:.3} below 0.9", fit.slope),
        )
    };
    Ok(EpsilonSweepReport { epsilons: eps, gap_values: gaps, fit: Some(fit), status, detail })
}

/// Observed convergence order from a refinement ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementReport {
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub observed_order: f64,
    pub expected_order: f64,
    pub tolerance: f64,
    pub status: ExperimentStatus,
    pub detail: String,
}

fn order_report(errors: Vec<f64>, expected: f64, tolerance: f64, detail_head: &str) -> RefinementReport {
    let orders: Vec<f64> = errors
        .windows(2)
        .map(|p| (p[0] / p[1]).ln() / 2.0f64.ln())
        .collect();
    let observed = *orders.last().unwrap_or(&f64::NAN);
    let status = if (observed - expected).abs() <= tolerance {
        ExperimentStatus::Pass
    } else {
        ExperimentStatus::Fail
    };
    RefinementReport {
        detail: format!("{detail_head}: orders {orders:?}"),
        errors,
        orders,
        observed_order: observed,
        expected_order: expected,
        tolerance,
        status,
    }
}

/// Halve dt `levels` times on a fixed grid and measure the Cauchy differences
/// of the final density. First-order time stepping gives order 1.
pub fn temporal_refinement(base: &SimConfig, levels: usize) -> Result<RefinementReport> {
    if levels < 3 {
        return Err(KymoError::InsufficientPoints { needed: 3, got: levels });
    }
    let mut configs = Vec::with_capacity(levels);
    for k in 0..levels {
        let mut cfg = base.clone();
        cfg.dt = base.dt / (1 << k) as f64;
        cfg.cadence = usize::MAX; // only initial and final records matter
        configs.push(cfg);
    }
    let outs = run_family(&configs)?;
    let errors: Vec<f64> = outs
        .windows(2)
        .map(|p| {
            let diff = p[0].final_state.u.zip_with(&p[1].final_state.u, |a, b| a - b);
            grid::norm(&diff, NormKind::L2)
        })
        .collect();
    Ok(order_report(errors, 1.0, 0.25, "dt-halving Cauchy differences of final u"))
}

/// Refine the mesh against a manufactured exact solution with dt tied to h^2,
/// so the measured order is the spatial one (expected 2).
pub fn mms_refinement(base: &SimConfig, levels: usize) -> Result<RefinementReport> {
    if levels < 3 {
        return Err(KymoError::InsufficientPoints { needed: 3, got: levels });
    }
    let Some(case) = base.mms else {
        return Err(KymoError::MmsInconsistent(
            "spatial refinement needs a manufactured-solution case in the config".into(),
        ));
    };
    let mut errors = Vec::with_capacity(levels);
    for k in 0..levels {
        let factor = 1 << k;
        let mut cfg = base.clone();
        cfg.grid = GridSpec::new_1d(base.grid.cells[0] * factor, base.grid.lengths[0])?;
        cfg.dt = base.dt / (factor * factor) as f64;
        cfg.cadence = usize::MAX;
        let out = run(&cfg)?;
        let f = case.functions(&cfg.motility, cfg.epsilon, cfg.grid.lengths[0])?;
        let exact = f.exact_u_field(cfg.grid, out.final_state.t);
        let diff = out.final_state.u.zip_with(&exact, |a, b| a - b);
        errors.push(grid::norm(&diff, NormKind::L2));
    }
    Ok(order_report(errors, 2.0, 0.25, "L2 error of final u against the exact solution"))
}

/// Uniform-boundedness of the a priori budgets across a config family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetFamilyReport {
    pub budgets: Vec<(String, RegularityBudgets)>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

pub fn budget_family(
    labeled: &[(String, SimConfig)],
    stability_factor: f64,
) -> Result<BudgetFamilyReport> {
    if labeled.len() < 2 {
        return Err(KymoError::InsufficientPoints { needed: 2, got: labeled.len() });
    }
    let configs: Vec<SimConfig> = labeled.iter().map(|(_, c)| c.clone()).collect();
    let outs = run_family(&configs)?;
    let budgets: Vec<(String, RegularityBudgets)> = labeled
        .iter()
        .zip(&outs)
        .map(|((name, cfg), out)| (name.clone(), audit::regularity_budgets(&out.records, cfg)))
        .collect();
    let checks = audit::check_norm_budgets(&budgets, stability_factor);
    let passed = checks.iter().all(|c| c.status != audit::CheckStatus::Fail);
    Ok(BudgetFamilyReport { budgets, checks, passed })
}

/// Qualitative 2D mass probe: rescale one bump profile to a ladder of total
/// masses and classify each run as "bounded" or "growing" from the peak
/// density trend. Classification only; no pass/fail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassProbeReport {
    pub classifications: Vec<MassProbePoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassProbePoint {
    pub mass: f64,
    pub peak_ratio: f64,
    pub classification: String,
    /// (t, max u) along the run.
    pub peak_trajectory: Vec<(f64, f64)>,
    /// (t, F) along the run; the energy functional exists for this motility.
    pub lyapunov_trajectory: Vec<(f64, f64)>,
}

pub fn critical_mass_probe(base: &SimConfig, masses: &[f64]) -> Result<MassProbeReport> {
    if base.grid.dim != 2 {
        return Err(KymoError::DomainViolation("mass probe needs a 2D grid".into()));
    }
    if !matches!(base.motility, crate::motility::MotilitySpec::ExpDecay) {
        return Err(KymoError::WrongMotility(
            "the mass dichotomy is specific to the exponentially decaying motility".into(),
        ));
    }
    let profile = base.initial_u.build(base.grid)?;
    let profile_mass = grid::integrate(&profile);
    if profile_mass <= 0.0 {
        return Err(KymoError::DomainViolation("probe profile has zero mass".into()));
    }
    let dir = std::env::temp_dir().join(format!("kymo-mass-probe-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let mut classifications = Vec::with_capacity(masses.len());
    for (k, &mass) in masses.iter().enumerate() {
        let scaled = profile.map(|v| v * mass / profile_mass);
        let path = dir.join(format!("u0-{k}.ksf"));
        crate::snapshot::write_snapshot(&path, &scaled, 0.0)?;
        let mut cfg = base.clone();
        cfg.initial_u = crate::scheme::InitSpec::FromFile { path: path.clone() };
        let out = run(&cfg)?;
        let peak0 = out.records.first().map(|r| r.max_u).unwrap_or(0.0);
        let peak = out.records.iter().map(|r| r.max_u).fold(0.0f64, f64::max);
        let ratio = if peak0 > 0.0 { peak / peak0 } else { f64::INFINITY };
        classifications.push(MassProbePoint {
            mass,
            peak_ratio: ratio,
            // A >20% rise of the peak above its initial value marks genuine
            // accumulation; diffusion-dominated runs never exceed 1.
            classification: if ratio > 1.2 { "growing" } else { "bounded" }.into(),
            peak_trajectory: out.records.iter().map(|r| (r.t, r.max_u)).collect(),
            lyapunov_trajectory: out
                .records
                .iter()
                .filter_map(|r| r.lyapunov_f.map(|f| (r.t, f)))
                .collect(),
        });
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(MassProbeReport { classifications })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motility::MotilitySpec;
    use crate::scheme::InitSpec;

    #[test]
    fn fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..6).map(|k| (k as f64, 3.0 - 2.0 * k as f64)).collect();
        let f = fit_line(&pts).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!(f.scatter < 1e-7);
    }

    #[test]
    fn fit_needs_three_points() {
        assert!(matches!(
            fit_line(&[(0.0, 0.0), (1.0, 1.0)]),
            Err(KymoError::InsufficientPoints { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn sweep_on_constant_state_matches_closed_form() {
        // u = 1, w = v-gap comes only from the cutoff: w - v = eps/(1 + eps),
        // so G = T |Omega| (eps/(1+eps))^2 and the fitted slope is near 2.
        let mut cfg = crate::scheme::tests::base_config_1d(16);
        cfg.t_final = 0.02;
        let eps = [1e-4, 2e-4, 4e-4, 8e-4];
        let report = epsilon_sweep(&cfg, &eps).unwrap();
        for (e, g) in report.epsilons.iter().zip(&report.gap_values) {
            let expect = cfg.t_final * (e / (1.0 + e)).powi(2);
            assert!(
                (g - expect).abs() < 1e-3 * expect,
                "eps {e}: gap {g:.6e} vs closed form {expect:.6e}"
            );
        }
        let fit = report.fit.unwrap();
        assert!((fit.slope - 2.0).abs() < 0.05, "slope {}", fit.slope);
        assert_eq!(report.status, ExperimentStatus::Pass);
    }

    #[test]
    fn sweep_rejects_two_points() {
        let cfg = crate::scheme::tests::base_config_1d(8);
        assert!(matches!(
            epsilon_sweep(&cfg, &[1e-3, 1e-4]),
            Err(KymoError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn temporal_order_near_one() {
        let mut cfg = crate::scheme::tests::base_config_1d(24);
        cfg.initial_u = InitSpec::GaussianBump {
            center: vec![0.5],
            width: 0.25,
            amplitude: 1.0,
            floor: 0.2,
        };
        cfg.dt = 2e-3;
        cfg.t_final = 0.04;
        let report = temporal_refinement(&cfg, 4).unwrap();
        assert_eq!(
            report.status,
            ExperimentStatus::Pass,
            "observed order {} (errors {:?})",
            report.observed_order,
            report.errors
        );
    }

    #[test]
    fn mms_spatial_order_near_two() {
        let mut cfg = crate::scheme::tests::base_config_1d(16);
        cfg.motility = MotilitySpec::Constant { g0: 0.5 };
        cfg.mms = Some(crate::mms::MmsCase::CosineDecay1d);
        cfg.dt = 4e-3;
        cfg.t_final = 0.064;
        let report = mms_refinement(&cfg, 3).unwrap();
        assert_eq!(
            report.status,
            ExperimentStatus::Pass,
            "observed order {} (errors {:?})",
            report.observed_order,
            report.errors
        );
    }

    #[test]
    fn budget_family_stable_under_mesh_refinement() {
        let mut coarse = crate::scheme::tests::base_config_1d(16);
        coarse.initial_u = InitSpec::GaussianBump {
            center: vec![0.5],
            width: 0.2,
            amplitude: 1.0,
            floor: 0.2,
        };
        coarse.t_final = 0.02;
        let mut fine = coarse.clone();
        fine.grid = GridSpec::new_1d(32, 1.0).unwrap();
        let report = budget_family(
            &[("n16".into(), coarse), ("n32".into(), fine)],
            3.0,
        )
        .unwrap();
        assert!(report.passed, "checks: {:?}", report.checks);
    }

    #[test]
    fn mass_probe_classifies_diffuse_run_as_bounded() {
        let mut cfg = crate::scheme::tests::base_config_1d(8);
        cfg.grid = GridSpec::new_2d(8, 8, 1.0, 1.0).unwrap();
        cfg.initial_u = InitSpec::GaussianBump {
            center: vec![0.5, 0.5],
            width: 0.2,
            amplitude: 1.0,
            floor: 0.1,
        };
        cfg.t_final = 0.01;
        cfg.dt = 1e-3;
        let report = critical_mass_probe(&cfg, &[0.5]).unwrap();
        assert_eq!(report.classifications[0].classification, "bounded");
        assert!(report.classifications[0].peak_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn mass_probe_detects_accumulation_at_high_mass() {
        // uniform population, seeded signal bump: cells pile up where the
        // motility is suppressed, and at high mass the rise exceeds 20%
        let mut cfg = crate::scheme::tests::base_config_1d(8);
        cfg.grid = GridSpec::new_2d(16, 16, 1.0, 1.0).unwrap();
        cfg.tau = 0.5;
        cfg.epsilon0 = 0.4;
        cfg.initial_u = InitSpec::Constant { value: 1.0 };
        cfg.initial_v = InitSpec::GaussianBump {
            center: vec![0.5, 0.5],
            width: 0.15,
            amplitude: 2.0,
            floor: 0.1,
        };
        cfg.dt = 2e-3;
        cfg.t_final = 0.5;
        cfg.cadence = 25;
        let report = critical_mass_probe(&cfg, &[40.0]).unwrap();
        assert_eq!(
            report.classifications[0].classification,
            "growing",
            "peak ratio {}",
            report.classifications[0].peak_ratio
        );
    }
}
