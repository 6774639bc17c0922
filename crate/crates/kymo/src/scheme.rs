//! Time integration of the regularized system: the conservative M-matrix
//! u-step, the v-step (elliptic for tau = 0, backward Euler for tau > 0),
//! the cut-off f_eps, the auxiliary Helmholtz lift w, and the discrete key
//! identity.
//!
//! Splitting order: u advances implicitly with the motility frozen at the
//! current v, then v is solved from the fresh u, then w is lifted from the
//! fresh u. With that order the discrete elliptic comparison v <= w holds at
//! every time level when tau = 0, and the key identity is an algebraic fact
//! of the step, limited only by solver residuals.
//!
//! Internal per-step solves run at `rel_tolerance * min(1, dt)` so that
//! difference quotients of solver noise stay below the audit tolerances.

use crate::audit::{self, BoundEnvelope, DiagnosticsRecord};
use crate::elliptic::{self, SolveStats, SolverSettings};
use crate::error::{KymoError, Result};
use crate::grid::{self, Field, GridSpec, NormKind};
use crate::mms::MmsCase;
use crate::motility::MotilitySpec;
use crate::snapshot;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Initial-data recipe for one of the fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    Constant { value: f64 },
    GaussianBump { center: Vec<f64>, width: f64, amplitude: f64, floor: f64 },
    RandomPositive { seed: u64, low: f64, high: f64 },
    FromFile { path: PathBuf },
}

impl InitSpec {
    pub fn validate(&self, grid: &GridSpec) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            InitSpec::Constant { value } => {
                if *value < 0.0 {
                    errs.push(format!("constant initial value {value} is negative"));
                }
            }
            InitSpec::GaussianBump { center, width, amplitude, floor } => {
                if center.len() != grid.dim {
                    errs.push(format!(
                        "bump center has {} coordinates on a {}D grid",
                        center.len(),
                        grid.dim
                    ));
                }
                if !(*width > 0.0) {
                    errs.push(format!("bump width {width} must be positive"));
                }
                if *amplitude < 0.0 || *floor < 0.0 {
                    errs.push("bump amplitude and floor must be nonnegative".into());
                }
            }
            InitSpec::RandomPositive { low, high, .. } => {
                if !(*low >= 0.0 && high > low) {
                    errs.push(format!("random range [{low}, {high}) invalid or negative"));
                }
            }
            InitSpec::FromFile { .. } => {}
        }
        errs
    }

    pub fn build(&self, grid: GridSpec) -> Result<Field> {
        match self {
            InitSpec::Constant { value } => Ok(Field::constant(grid, *value)),
            InitSpec::GaussianBump { center, width, amplitude, floor } => {
                let w2 = width * width;
                Ok(Field::from_fn(grid, |x| {
                    let mut r2 = 0.0;
                    for (a, c) in center.iter().enumerate() {
                        r2 += (x[a] - c) * (x[a] - c);
                    }
                    floor + amplitude * (-r2 / w2).exp()
                }))
            }
            InitSpec::RandomPositive { seed, low, high } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let values = (0..grid.cell_count()).map(|_| rng.gen_range(*low..*high)).collect();
                Field::from_values(grid, values)
            }
            InitSpec::FromFile { path } => {
                let (f, _) = snapshot::read_snapshot(path, grid.lengths)?;
                if f.grid.cells != grid.cells || f.grid.dim != grid.dim {
                    return Err(KymoError::ConfigInvalid {
                        violations: vec![format!(
                            "snapshot {} has grid {:?}, run expects {:?}",
                            path.display(),
                            f.grid.cells,
                            grid.cells
                        )],
                    });
                }
                Ok(f)
            }
        }
    }
}

fn default_cadence() -> usize {
    1
}

/// All run parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub motility: MotilitySpec,
    pub tau: f64,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    pub initial_u: InitSpec,
    pub initial_v: InitSpec,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsCase>,
    /// Accepted only with an explicit override; marks the run as outside the
    /// theory's hypotheses and downgrades comparison checks to SKIPPED.
    #[serde(default)]
    pub outside_theory: bool,
}

impl SimConfig {
    /// Certified sup of gamma for this run's motility.
    pub fn k_gamma(&self) -> f64 {
        self.motility.k_gamma()
    }

    pub fn k_gamma_eff(&self) -> f64 {
        self.k_gamma() + self.epsilon0
    }

    /// Violations that make a run meaningless regardless of theory.
    pub fn hard_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.extend(self.motility.validate());
        v.extend(self.solver.validate());
        v.extend(self.initial_u.validate(&self.grid));
        v.extend(self.initial_v.validate(&self.grid));
        if !(self.dt > 0.0) {
            v.push(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_final >= 0.0) {
            v.push(format!("t_final = {} must be nonnegative", self.t_final));
        }
        if self.tau < 0.0 {
            v.push(format!("tau = {} must be nonnegative", self.tau));
        }
        if !(self.epsilon > 0.0) {
            v.push(format!("epsilon = {} must be positive", self.epsilon));
        }
        if self.cadence == 0 {
            v.push("cadence must be at least 1".into());
        }
        if let Some(case) = &self.mms {
            v.extend(case.validate(&self.grid, &self.motility, self.tau));
        }
        v
    }

    /// Violations of the standing hypotheses behind the comparison bounds.
    /// These can be waived with the outside-theory override.
    pub fn theory_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let kg = self.k_gamma();
        if self.tau > 0.0 {
            if self.tau * kg >= 1.0 {
                v.push(format!(
                    "tau = {} >= 1/K_gamma = {}: outside the existence hypothesis",
                    self.tau,
                    1.0 / kg
                ));
            }
            let cap = (1.0 / self.tau - kg).min(1.0);
            if !(self.epsilon0 > 0.0 && self.epsilon0 < cap) {
                v.push(format!(
                    "epsilon0 = {} not in (0, min(1, 1/tau - K_gamma)) = (0, {cap})",
                    self.epsilon0
                ));
            }
        } else if !(self.epsilon0 > 0.0 && self.epsilon0 < 1.0) {
            v.push(format!("epsilon0 = {} not in (0, 1)", self.epsilon0));
        }
        if self.epsilon >= self.epsilon0 {
            v.push(format!(
                "epsilon = {} must lie strictly below epsilon0 = {}",
                self.epsilon, self.epsilon0
            ));
        }
        if self.dt * self.k_gamma_eff() >= 1.0 {
            v.push(format!(
                "dt (K_gamma + epsilon0) = {} >= 1: discrete comparison envelope unavailable",
                self.dt * self.k_gamma_eff()
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = self.hard_violations();
        if !self.outside_theory {
            violations.extend(self.theory_violations());
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(KymoError::ConfigInvalid { violations })
        }
    }

    /// Replace the seed of every RandomPositive initial field.
    pub fn override_seed(&mut self, seed: u64) {
        for init in [&mut self.initial_u, &mut self.initial_v] {
            if let InitSpec::RandomPositive { seed: s, .. } = init {
                *s = seed;
            }
        }
    }

    /// Per-step solve target: tighter than the user tolerance by a factor dt
    /// so time-difference quotients of solver noise stay below audit scales.
    fn step_tol(&self) -> f64 {
        self.solver.rel_tolerance * self.dt.min(1.0)
    }

    fn mms_functions(&self) -> Result<Option<crate::mms::MmsFunctions>> {
        match &self.mms {
            None => Ok(None),
            Some(case) => {
                let f = case.functions(&self.motility, self.epsilon, self.grid.lengths[0])?;
                f.verify()?;
                Ok(Some(f))
            }
        }
    }
}

/// The evolving triple (u, v, w) at one time level.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub w: Field,
    pub step_index: usize,
    pub last_solver_stats: SolveStats,
}

/// Quantities recorded at initialization for the comparison envelopes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitSummary {
    pub u0_linf: f64,
    pub v0_linf: f64,
    pub u0_mean: f64,
    /// Minimal K0 with v0 <= w0 + K0 pointwise.
    pub k0: f64,
}

/// The cut-off f_eps(u) = u / (1 + eps u), pointwise.
pub fn f_eps(u: &Field, epsilon: f64) -> Field {
    u.map(|v| v / (1.0 + epsilon * v))
}

/// Build the initial state: fields per the init specs, w0 the Helmholtz lift
/// of u0, plus the constants the comparison envelopes start from.
pub fn initialize(cfg: &SimConfig) -> Result<(SimState, InitSummary)> {
    cfg.validate()?;
    let u0 = match cfg.mms_functions()? {
        // Manufactured runs start from the exact solution at t = 0.
        Some(f) => f.exact_u_field(cfg.grid, 0.0),
        None => cfg.initial_u.build(cfg.grid)?,
    };
    let mut v0 = cfg.initial_v.build(cfg.grid)?;
    let mut init_stats = SolveStats { iterations: 0, residual: 0.0 };
    if cfg.tau == 0.0 {
        // v is slaved to u by the elliptic equation; an arbitrary configured
        // v0 would inject an O(1) initial layer into the very first step.
        let (v, sv) = step_v(&v0, &u0, cfg, 0.0)?;
        v0 = v;
        init_stats.merge(sv);
    }
    for (name, f) in [("u0", &u0), ("v0", &v0)] {
        if f.min() < 0.0 {
            return Err(KymoError::ConfigInvalid {
                violations: vec![format!("{name} has negative values (min {})", f.min())],
            });
        }
        if cfg.motility.v_floor() > 0.0 && name == "v0" && f.min() < cfg.motility.v_floor() {
            return Err(KymoError::ConfigInvalid {
                violations: vec![format!(
                    "v0 (min {}) dips below the motility floor {}",
                    f.min(),
                    cfg.motility.v_floor()
                )],
            });
        }
    }
    let (w0, stats) = elliptic::helmholtz_inv_with_tol(&u0, &cfg.solver, cfg.step_tol())?;
    init_stats.merge(stats);
    let stats = init_stats;
    let k0 = v0
        .values()
        .iter()
        .zip(w0.values())
        .map(|(v, w)| (v - w).max(0.0))
        .fold(0.0f64, f64::max);
    let summary = InitSummary {
        u0_linf: grid::norm(&u0, NormKind::Linf),
        v0_linf: grid::norm(&v0, NormKind::Linf),
        u0_mean: grid::mean(&u0),
        k0,
    };
    let state = SimState {
        t: 0.0,
        u: u0,
        v: v0,
        w: w0,
        step_index: 0,
        last_solver_stats: stats,
    };
    Ok((state, summary))
}

fn positivity_cleanup(
    field: &mut Field,
    guard: f64,
    restore_integral: Option<f64>,
) -> Result<()> {
    let min = field.min();
    if min < -guard {
        return Err(KymoError::PositivityLoss { min, guard });
    }
    if min < 0.0 {
        for v in field.values_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        if let Some(target) = restore_integral {
            let cur = grid::integrate(field);
            if cur > 0.0 && target > 0.0 {
                let scale = target / cur;
                for v in field.values_mut() {
                    *v *= scale;
                }
            }
        }
    }
    Ok(())
}

/// Advance u implicitly: solve (I - dt L diag(a)) u_next = u + dt source with
/// a = gamma(v) + eps frozen. The solve runs on the symmetrized variable
/// q = a u, for which the system diag(1/a) - dt L is SPD.
///
/// Unit column sums make the exact solve conserve the integral of u; the
/// transposed system is a strictly dominant Z-matrix, so the exact solve
/// preserves nonnegativity for any dt. Solver noise at the tolerance floor is
/// clipped and the integral restored.
pub fn step_u(u: &Field, v: &Field, cfg: &SimConfig, t_next: f64) -> Result<(Field, SolveStats)> {
    let g = cfg.grid;
    let gamma = cfg.motility.eval_gamma(v)?;
    let a: Vec<f64> = gamma.values().iter().map(|&gv| gv + cfg.epsilon).collect();
    let dt = cfg.dt;

    let mms = cfg.mms_functions()?;
    let mut rhs = u.clone();
    if let Some(f) = &mms {
        let s = f.source_u_field(g, t_next);
        rhs = rhs.zip_with(&s, |a, b| a + dt * b);
    }

    let apply = |src: &[f64], dst: &mut [f64]| {
        grid::laplacian_apply(&g, src, dst);
        for k in 0..src.len() {
            dst[k] = src[k] / a[k] - dt * dst[k];
        }
    };
    let (q, stats) = elliptic::solve_spd(apply, rhs.values(), &cfg.solver, cfg.step_tol())?;
    let mut u_next = Field::from_values(
        g,
        q.iter().zip(&a).map(|(qi, ai)| qi / ai).collect(),
    )?;

    let guard = 10.0 * cfg.solver.rel_tolerance * (1.0 + grid::norm(u, NormKind::Linf));
    let target = if mms.is_none() { Some(grid::integrate(u)) } else { None };
    positivity_cleanup(&mut u_next, guard, target)?;
    Ok((u_next, stats))
}

/// Advance v: backward Euler (tau/dt + 1 - L) v_next = (tau/dt) v + f_eps(u)
/// for tau > 0, the elliptic solve (I - L) v_next = f_eps(u) for tau = 0.
pub fn step_v(
    v: &Field,
    u_new: &Field,
    cfg: &SimConfig,
    t_next: f64,
) -> Result<(Field, SolveStats)> {
    let g = cfg.grid;
    let mut rhs = f_eps(u_new, cfg.epsilon);
    if let Some(f) = &cfg.mms_functions()? {
        let s = f.source_v_field(g, t_next);
        rhs = rhs.zip_with(&s, |a, b| a + b);
    }
    let c0 = if cfg.tau > 0.0 { cfg.tau / cfg.dt } else { 0.0 };
    if c0 > 0.0 {
        rhs = rhs.zip_with(v, |r, vo| r + c0 * vo);
    }
    let apply = |src: &[f64], dst: &mut [f64]| {
        grid::laplacian_apply(&g, src, dst);
        for k in 0..src.len() {
            dst[k] = (c0 + 1.0) * src[k] - dst[k];
        }
    };
    let (vals, stats) = elliptic::solve_spd(apply, rhs.values(), &cfg.solver, cfg.step_tol())?;
    let mut v_next = Field::from_values(g, vals)?;
    let guard = 10.0 * cfg.solver.rel_tolerance * (1.0 + grid::norm(&rhs, NormKind::Linf));
    positivity_cleanup(&mut v_next, guard, None)?;
    Ok((v_next, stats))
}

/// One full step: u, then v from the fresh u, then the w lift.
pub fn step(state: &SimState, cfg: &SimConfig) -> Result<SimState> {
    let t_next = (state.step_index + 1) as f64 * cfg.dt;
    let (u_next, mut stats) = step_u(&state.u, &state.v, cfg, t_next)?;
    let (v_next, sv) = step_v(&state.v, &u_next, cfg, t_next)?;
    stats.merge(sv);
    let (w_next, sw) = elliptic::helmholtz_inv_with_tol(&u_next, &cfg.solver, cfg.step_tol())?;
    stats.merge(sw);
    Ok(SimState {
        t: t_next,
        u: u_next,
        v: v_next,
        w: w_next,
        step_index: state.step_index + 1,
        last_solver_stats: stats,
    })
}

/// Linf residual of the discrete key identity across one step:
/// (w_next - w_prev)/dt + a u_next - (I-L)^{-1}[a u_next], with a the
/// coefficient the u-step actually used (gamma at the previous v, plus eps).
/// An algebraic identity of the step, so the residual is bounded by solver
/// tolerances, not by dt.
pub fn key_identity_residual(prev: &SimState, next: &SimState, cfg: &SimConfig) -> Result<f64> {
    let gamma = cfg.motility.eval_gamma(&prev.v)?;
    let au = next
        .u
        .zip_with(&gamma, |ui, gi| (gi + cfg.epsilon) * ui);
    let (lift, _) = elliptic::helmholtz_inv_with_tol(&au, &cfg.solver, cfg.step_tol())?;
    let mut worst = 0.0f64;
    for k in 0..cfg.grid.cell_count() {
        let r = (next.w.values()[k] - prev.w.values()[k]) / cfg.dt + au.values()[k]
            - lift.values()[k];
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Everything a finished run hands to the audit and report layers.
#[derive(Debug)]
pub struct RunOutput {
    pub config: SimConfig,
    pub init: InitSummary,
    pub envelope: BoundEnvelope,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    pub total_stats: SolveStats,
    pub steps_taken: usize,
}

/// Run the scheme from t = 0 to t_final, invoking the audit at the configured
/// cadence. `on_audit` fires for every audited state (including the initial
/// and final ones); use it to emit snapshots. Deterministic for a fixed config.
pub fn run_with(
    cfg: &SimConfig,
    mut on_audit: impl FnMut(&SimState, Option<&DiagnosticsRecord>) -> Result<()>,
) -> Result<RunOutput> {
    let (mut state, init) = initialize(cfg)?;
    let envelope = BoundEnvelope::new(cfg, &state.w, init.k0)?;
    let audits_enabled = cfg.mms.is_none();
    let mut records = Vec::new();
    let mut total_stats = state.last_solver_stats;

    let mut audit_now = |state: &SimState,
                         prev: Option<&SimState>,
                         records: &mut Vec<DiagnosticsRecord>|
     -> Result<()> {
        if audits_enabled {
            let rec = audit::audit_state(state, prev, &envelope, cfg)?;
            on_audit(state, Some(&rec))?;
            records.push(rec);
        } else {
            on_audit(state, None)?;
        }
        Ok(())
    };

    audit_now(&state, None, &mut records)?;
    let n_steps = (cfg.t_final / cfg.dt).round() as usize;
    for n in 1..=n_steps {
        let next = step(&state, cfg)?;
        total_stats.merge(next.last_solver_stats);
        if n % cfg.cadence == 0 || n == n_steps {
            audit_now(&next, Some(&state), &mut records)?;
        }
        state = next;
    }
    Ok(RunOutput {
        config: cfg.clone(),
        init,
        envelope,
        records,
        final_state: state,
        total_stats,
        steps_taken: n_steps,
    })
}

pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    run_with(cfg, |_, _| Ok(()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::elliptic::SolverMode;
    use approx::assert_relative_eq;

    pub(crate) fn base_config_1d(n: usize) -> SimConfig {
        SimConfig {
            grid: GridSpec::new_1d(n, 1.0).unwrap(),
            motility: MotilitySpec::ExpDecay,
            tau: 0.0,
            epsilon: 1e-3,
            epsilon0: 0.5,
            dt: 1e-3,
            t_final: 0.01,
            solver: SolverSettings::default(),
            initial_u: InitSpec::Constant { value: 1.0 },
            initial_v: InitSpec::Constant { value: 1.0 },
            cadence: 1,
            mms: None,
            outside_theory: false,
        }
    }

    #[test]
    fn f_eps_examples() {
        let g = GridSpec::new_1d(4, 1.0).unwrap();
        assert_eq!(f_eps(&Field::constant(g, 5.0), 0.0).values()[0], 5.0);
        assert_relative_eq!(f_eps(&Field::constant(g, 10.0), 0.1).values()[0], 5.0);
        let capped = f_eps(&Field::constant(g, 1000.0), 0.5).values()[0];
        assert_relative_eq!(capped, 1000.0 / 501.0);
        assert!(capped < 2.0);
    }

    #[test]
    fn initialize_constant_data() {
        let cfg = base_config_1d(16);
        let (state, summary) = initialize(&cfg).unwrap();
        for &w in state.w.values() {
            assert_relative_eq!(w, 1.0, epsilon = 1e-9);
        }
        assert!(summary.k0 < 1e-9);
        assert_relative_eq!(summary.u0_mean, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn initialize_zero_u_unit_v() {
        // tau > 0 keeps the configured v0; the lift of u = 0 vanishes, so
        // K0 = max(v0 - w0) = 1 exactly.
        let mut cfg = base_config_1d(16);
        cfg.tau = 0.5;
        cfg.initial_u = InitSpec::Constant { value: 0.0 };
        let (state, summary) = initialize(&cfg).unwrap();
        assert!(grid::norm(&state.w, NormKind::Linf) < 1e-12);
        assert_relative_eq!(summary.k0, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn initialize_slaves_v_to_u_when_tau_zero() {
        let mut cfg = base_config_1d(16);
        cfg.initial_v = InitSpec::Constant { value: 7.0 }; // ignored at tau = 0
        let (state, summary) = initialize(&cfg).unwrap();
        let expect = 1.0 / (1.0 + cfg.epsilon);
        for &v in state.v.values() {
            assert_relative_eq!(v, expect, epsilon = 1e-9);
        }
        assert!(summary.k0 < 1e-9);
    }

    #[test]
    fn initialize_bump_preserves_mean_through_lift() {
        let mut cfg = base_config_1d(64);
        cfg.initial_u = InitSpec::GaussianBump {
            center: vec![0.5],
            width: 0.1,
            amplitude: 2.0,
            floor: 0.1,
        };
        let (state, _) = initialize(&cfg).unwrap();
        assert_relative_eq!(
            grid::mean(&state.w),
            grid::mean(&state.u),
            epsilon = 1e-9
        );
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let mut cfg = base_config_1d(16);
        cfg.tau = 2.0; // K_gamma = 1 for exp decay
        assert!(matches!(cfg.validate(), Err(KymoError::ConfigInvalid { .. })));
        cfg.outside_theory = true;
        assert!(cfg.validate().is_ok());

        let mut cfg = base_config_1d(16);
        cfg.epsilon = cfg.epsilon0;
        assert!(cfg.validate().is_err());

        let mut cfg = base_config_1d(16);
        cfg.dt = 1.0; // dt (K_gamma + eps0) = 1.5 >= 1
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn homogeneous_state_is_stationary() {
        // u0 = v0 = 1, epsilon -> 0 reference mode is an exact fixed point;
        // with finite epsilon u stays constant and v settles at 1/(1+eps).
        let mut cfg = base_config_1d(24);
        cfg.epsilon = 1e-6;
        let (state, _) = initialize(&cfg).unwrap();
        let next = step(&state, &cfg).unwrap();
        for &u in next.u.values() {
            assert_relative_eq!(u, 1.0, epsilon = 1e-9);
        }
        for &v in next.v.values() {
            assert_relative_eq!(v, 1.0 / (1.0 + 1e-6), epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_u_decays_v_by_backward_euler() {
        let mut cfg = base_config_1d(16);
        cfg.tau = 0.5;
        cfg.epsilon0 = 0.4; // min(1, 1/tau - K) = 1
        cfg.dt = 0.1;
        cfg.initial_u = InitSpec::Constant { value: 0.0 };
        let (mut state, _) = initialize(&cfg).unwrap();
        for n in 1..=3 {
            state = step(&state, &cfg).unwrap();
            let expect = 1.0 / (1.0 + cfg.dt / cfg.tau).powi(n);
            for &v in state.v.values() {
                assert_relative_eq!(v, expect, epsilon = 1e-8);
            }
            assert!(grid::norm(&state.u, NormKind::Linf) < 1e-12);
        }
    }

    #[test]
    fn constant_u_step_with_spatially_constant_v() {
        let mut cfg = base_config_1d(16);
        cfg.initial_v = InitSpec::Constant { value: 0.7 };
        let (state, _) = initialize(&cfg).unwrap();
        let (u_next, _) = step_u(&state.u, &state.v, &cfg, cfg.dt).unwrap();
        for &u in u_next.values() {
            assert_relative_eq!(u, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn step_v_constant_field_algebra() {
        let mut cfg = base_config_1d(16);
        cfg.tau = 0.5;
        cfg.epsilon0 = 0.4;
        cfg.dt = 0.01;
        cfg.epsilon = 0.1;
        let (state, _) = initialize(&cfg).unwrap();
        let u = Field::constant(cfg.grid, 1.0);
        let (v_next, _) = step_v(&state.v, &u, &cfg, cfg.dt).unwrap();
        let c0 = cfg.tau / cfg.dt;
        let expect = (c0 + 1.0 / 1.1) / (c0 + 1.0);
        for &v in v_next.values() {
            assert_relative_eq!(v, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn mass_is_conserved_and_positivity_holds() {
        let mut cfg = base_config_1d(48);
        cfg.initial_u = InitSpec::GaussianBump {
            center: vec![0.3],
            width: 0.08,
            amplitude: 3.0,
            floor: 0.0,
        };
        cfg.initial_v = InitSpec::Constant { value: 0.2 };
        cfg.t_final = 0.05;
        let out = run(&cfg).unwrap();
        let m0 = out.records[0].mass;
        for rec in &out.records {
            assert!((rec.mass - m0).abs() <= 1e-9 * m0);
            assert!(rec.min_u >= 0.0);
        }
        assert!(out.final_state.v.min() >= 0.0);
    }

    #[test]
    fn steps_match_dense_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let mut cfg = base_config_1d(12);
            cfg.dt = 0.05;
            let u = Field::from_values(
                cfg.grid,
                (0..12).map(|_| rng.gen_range(0.1..2.0)).collect(),
            )
            .unwrap();
            let v = Field::from_values(
                cfg.grid,
                (0..12).map(|_| rng.gen_range(0.0..1.5)).collect(),
            )
            .unwrap();
            let (ui, _) = step_u(&u, &v, &cfg, cfg.dt).unwrap();
            let mut dense_cfg = cfg.clone();
            dense_cfg.solver.mode = SolverMode::DenseDirect;
            let (ud, _) = step_u(&u, &v, &dense_cfg, cfg.dt).unwrap();
            let diff = ui.zip_with(&ud, |a, b| a - b);
            assert!(grid::norm(&diff, NormKind::Linf) < 1e-8);

            let (vi, _) = step_v(&v, &u, &cfg, cfg.dt).unwrap();
            let (vd, _) = step_v(&v, &u, &dense_cfg, cfg.dt).unwrap();
            let diffv = vi.zip_with(&vd, |a, b| a - b);
            assert!(grid::norm(&diffv, NormKind::Linf) < 1e-8);
        }
    }

    #[test]
    fn key_identity_residual_is_solver_limited() {
        let mut cfg = base_config_1d(24);
        cfg.initial_u = InitSpec::GaussianBump {
            center: vec![0.5],
            width: 0.1,
            amplitude: 2.0,
            floor: 0.1,
        };
        cfg.initial_v = InitSpec::Constant { value: 0.5 };
        let (state, _) = initialize(&cfg).unwrap();
        let next = step(&state, &cfg).unwrap();
        let r = key_identity_residual(&state, &next, &cfg).unwrap();
        assert!(r <= 1e-8, "iterative residual {r}");

        let mut dense_cfg = cfg.clone();
        dense_cfg.solver.mode = SolverMode::DenseDirect;
        let (state, _) = initialize(&dense_cfg).unwrap();
        let next = step(&state, &dense_cfg).unwrap();
        let r = key_identity_residual(&state, &next, &dense_cfg).unwrap();
        assert!(r <= 1e-12, "dense residual {r}");
    }

    #[test]
    fn zero_horizon_yields_initial_state_only() {
        let mut cfg = base_config_1d(16);
        cfg.t_final = 0.0;
        let out = run(&cfg).unwrap();
        assert_eq!(out.steps_taken, 0);
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn richardson_self_consistency_in_time() {
        // two steps of dt/2 agree with one step of dt to O(dt^2)
        let mut cfg = base_config_1d(32);
        cfg.initial_u = InitSpec::GaussianBump {
            center: vec![0.5],
            width: 0.25,
            amplitude: 1.0,
            floor: 0.2,
        };
        cfg.initial_v = InitSpec::Constant { value: 0.3 };
        let err_at = |dt: f64| {
            let mut c1 = cfg.clone();
            c1.dt = dt;
            let (s0, _) = initialize(&c1).unwrap();
            let coarse = step(&s0, &c1).unwrap();
            let mut c2 = cfg.clone();
            c2.dt = dt / 2.0;
            let half = step(&step(&s0, &c2).unwrap(), &c2).unwrap();
            let diff = coarse.u.zip_with(&half.u, |a, b| a - b);
            grid::norm(&diff, NormKind::L2)
        };
        let (e1, e2) = (err_at(0.004), err_at(0.002));
        let order = (e1 / e2).ln() / 2.0f64.ln();
        assert!(order > 1.5, "local consistency order {order} (errors {e1:.3e}, {e2:.3e})");
    }
}
