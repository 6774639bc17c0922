//! Command-line front end: load a JSON config, run a simulation or a study,
//! and lay the results out as out/<run-id>/{manifest.json, diagnostics.csv,
//! audit_report.json, snapshots/, plots/}.
//!
//! Exit codes: 0 all checks pass (SKIPPED never counts against), 1 at least
//! one check failed, 2 configuration or I/O error.

use crate::audit::{self, AuditReport, CheckStatus, ReportMeta};
use crate::elliptic::SolverMode;
use crate::error::{KymoError, Result};
use crate::experiments::{self, ExperimentStatus};
use crate::scheme::{self, InitSummary, RunOutput, SimConfig};
use crate::snapshot;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "kymo", version, about = "Signal-dependent-motility simulator with built-in estimate audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct CommonOpts {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; results land in <out>/<run-id>/.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the audit cadence (steps between diagnostics records).
    #[arg(long)]
    pub cadence: Option<usize>,
    /// Accept parameters outside the comparison theory's hypotheses;
    /// comparison checks become SKIPPED and the manifest records the waiver.
    #[arg(long)]
    pub outside_theory: bool,
    /// Solve every linear system by dense factorization (small grids only).
    #[arg(long)]
    pub dense_solver: bool,
    /// Override the seed of random initial data.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Integrate one configuration and audit every recorded state.
    Run {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Rerun one configuration over a ladder of cutoff strengths and fit the
    /// decay rate of the time-integrated H1 gap between w and v.
    SweepEpsilon {
        #[command(flatten)]
        common: CommonOpts,
        /// Comma-separated cutoff values, at least 3.
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
    },
    /// Measure a convergence order by refinement.
    Refine {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum)]
        mode: RefineMode,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Classify 2D runs across a mass ladder as bounded or growing.
    Probe {
        #[command(flatten)]
        common: CommonOpts,
        /// Comma-separated total masses.
        #[arg(long, value_delimiter = ',', required = true)]
        masses: Vec<f64>,
    },
    /// Recompute the audit report of a finished run from its saved outputs.
    AuditOffline {
        /// A run directory produced by `kymo run`.
        #[arg(long)]
        run_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefineMode {
    /// dt-halving Cauchy study on a fixed grid (expected order 1).
    Temporal,
    /// Mesh refinement against a manufactured solution (expected order 2).
    Mms,
}

pub const MANIFEST_SCHEMA: &str = "kymo-manifest-v1";

/// Everything needed to reproduce and re-audit a run. Wall-clock stamps live
/// only here; diagnostics and reports are timestamp-free and deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    pub config: SimConfig,
    pub init: InitSummary,
    pub report_meta: ReportMeta,
    pub steps_taken: usize,
    pub solver_iterations: usize,
    pub worst_solver_residual: f64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub exit_status: String,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Load, override and validate a run configuration.
pub fn load_config(common: &CommonOpts) -> Result<SimConfig> {
    let text = fs::read_to_string(&common.config)?;
    let mut cfg: SimConfig = serde_json::from_str(&text).map_err(|e| {
        KymoError::ParseError(format!("{}: {e}", common.config.display()))
    })?;
    if let Some(c) = common.cadence {
        cfg.cadence = c;
    }
    if common.outside_theory {
        cfg.outside_theory = true;
    }
    if common.dense_solver {
        cfg.solver.mode = SolverMode::DenseDirect;
    }
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_id(common: &CommonOpts, suffix: &str) -> String {
    let stem = common
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    if suffix.is_empty() { stem } else { format!("{stem}-{suffix}") }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| KymoError::ParseError(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn print_checks(report: &AuditReport) {
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIPPED",
        };
        println!(
            "check {:<22} {status:<7} margin {: >13.6e}  tol {: >13.6e}  {}",
            c.name, c.worst_margin, c.tolerance, c.detail
        );
    }
}

fn write_snapshots(dir: &Path, tag: &str, state: &scheme::SimState) -> Result<()> {
    for (name, field) in [("u", &state.u), ("v", &state.v), ("w", &state.w)] {
        snapshot::write_snapshot(&dir.join(format!("{name}-{tag}.ksf")), field, state.t)?;
    }
    Ok(())
}

fn write_plots(dir: &Path, out: &RunOutput, meta: &ReportMeta) -> Result<()> {
    let series: [(&str, Box<dyn Fn(&audit::DiagnosticsRecord) -> Option<f64>>); 8] = [
        ("mass", Box::new(|r| Some(r.mass))),
        ("max_u", Box::new(|r| Some(r.max_u))),
        ("max_v", Box::new(|r| Some(r.max_v))),
        ("max_w", Box::new(|r| Some(r.max_w))),
        ("entropy", Box::new(|r| Some(r.entropy))),
        ("hminus1_sq", Box::new(|r| Some(r.hminus1_sq))),
        ("key_identity_residual", Box::new(|r| Some(r.key_identity_residual))),
        ("lyapunov_f", Box::new(|r| r.lyapunov_f)),
    ];
    for (name, get) in &series {
        let mut buf = String::from("t,value\n");
        let mut any = false;
        for r in &out.records {
            if let Some(v) = get(r) {
                buf.push_str(&format!("{:.17e},{:.17e}\n", r.t, v));
                any = true;
            }
        }
        if any {
            fs::write(dir.join(format!("{name}.csv")), buf)?;
        }
    }
    // Envelope overlay: the sup of the discrete comparison bound against the
    // observed sup of w.
    let mut buf = String::from("t,envelope_sup,max_w\n");
    let mut any = false;
    for r in &out.records {
        let n = (r.t / out.config.dt).round() as usize;
        if let Some(g) = out.envelope.growth(n) {
            buf.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", r.t, meta.w0_linf * g, r.max_w));
            any = true;
        }
    }
    if any {
        fs::write(dir.join("envelope_w.csv"), buf)?;
    }
    Ok(())
}

fn status_word(passed: bool) -> &'static str {
    if passed { "pass" } else { "fail" }
}

pub fn cmd_run(common: &CommonOpts) -> Result<i32> {
    let started = now_unix();
    let cfg = load_config(common)?;
    let dir = common.out.join(run_id(common, ""));
    fs::create_dir_all(dir.join("snapshots"))?;
    fs::create_dir_all(dir.join("plots"))?;

    let out = scheme::run(&cfg)?;
    let (initial, _) = scheme::initialize(&cfg)?;
    write_snapshots(&dir.join("snapshots"), "initial", &initial)?;
    write_snapshots(&dir.join("snapshots"), "final", &out.final_state)?;

    let mut csv = Vec::new();
    audit::write_diagnostics_csv(&mut csv, &out.records)?;
    fs::write(dir.join("diagnostics.csv"), csv)?;

    let meta = audit::report_meta(&out);
    let report = audit::audit_report(&out.records, &cfg, &meta);
    write_json(&dir.join("audit_report.json"), &report)?;
    write_plots(&dir.join("plots"), &out, &meta)?;
    print_checks(&report);

    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "run".into(),
        config: cfg,
        init: out.init.clone(),
        report_meta: meta,
        steps_taken: out.steps_taken,
        solver_iterations: out.total_stats.iterations,
        worst_solver_residual: out.total_stats.residual,
        started_unix: started,
        finished_unix: now_unix(),
        exit_status: status_word(report.passed).into(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!("run {}: {}", dir.display(), status_word(report.passed));
    Ok(if report.passed { 0 } else { 1 })
}

pub fn cmd_audit_offline(run_dir: &Path) -> Result<i32> {
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json"))?)
        .map_err(|e| KymoError::ParseError(format!("manifest.json: {e}")))?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(KymoError::ParseError(format!(
            "unsupported manifest schema {}",
            manifest.schema
        )));
    }
    let records = audit::parse_diagnostics_csv(&fs::read_to_string(run_dir.join("diagnostics.csv"))?)?;
    let mut meta = manifest.report_meta.clone();
    // Recompute the lift-invariant residual from the saved final snapshots
    // when they are present; fall back to the manifest value otherwise.
    let u_path = run_dir.join("snapshots/u-final.ksf");
    let w_path = run_dir.join("snapshots/w-final.ksf");
    if u_path.exists() && w_path.exists() {
        let lengths = manifest.config.grid.lengths;
        let (u, _) = snapshot::read_snapshot(&u_path, lengths)?;
        let (w, _) = snapshot::read_snapshot(&w_path, lengths)?;
        let mut lw = vec![0.0; w.values().len()];
        crate::elliptic::helmholtz_apply(&w.grid, w.values(), &mut lw);
        meta.w_invariant_residual = lw
            .iter()
            .zip(u.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
    }
    let report = audit::audit_report(&records, &manifest.config, &meta);
    write_json(&run_dir.join("audit_report.json"), &report)?;
    print_checks(&report);
    println!("offline audit {}: {}", run_dir.display(), status_word(report.passed));
    Ok(if report.passed { 0 } else { 1 })
}

fn experiment_exit(status: ExperimentStatus) -> i32 {
    match status {
        ExperimentStatus::Pass | ExperimentStatus::Degenerate => 0,
        ExperimentStatus::Fail | ExperimentStatus::Unreliable => 1,
    }
}

pub fn cmd_sweep_epsilon(common: &CommonOpts, epsilons: &[f64]) -> Result<i32> {
    let cfg = load_config(common)?;
    let dir = common.out.join(run_id(common, "sweep"));
    fs::create_dir_all(&dir)?;
    let report = experiments::epsilon_sweep(&cfg, epsilons)?;
    write_json(&dir.join("experiment_report.json"), &report)?;
    println!("sweep-epsilon {:?}: {}", report.status, report.detail);
    Ok(experiment_exit(report.status))
}

pub fn cmd_refine(common: &CommonOpts, mode: RefineMode, levels: usize) -> Result<i32> {
    let cfg = load_config(common)?;
    let dir = common.out.join(run_id(common, "refine"));
    fs::create_dir_all(&dir)?;
    let report = match mode {
        RefineMode::Temporal => experiments::temporal_refinement(&cfg, levels)?,
        RefineMode::Mms => experiments::mms_refinement(&cfg, levels)?,
    };
    write_json(&dir.join("experiment_report.json"), &report)?;
    println!(
        "refine {:?}: observed order {:.3} (expected {} +/- {}): {:?}",
        mode, report.observed_order, report.expected_order, report.tolerance, report.status
    );
    Ok(experiment_exit(report.status))
}

pub fn cmd_probe(common: &CommonOpts, masses: &[f64]) -> Result<i32> {
    let cfg = load_config(common)?;
    let dir = common.out.join(run_id(common, "probe"));
    fs::create_dir_all(&dir)?;
    let report = experiments::critical_mass_probe(&cfg, masses)?;
    write_json(&dir.join("experiment_report.json"), &report)?;
    for p in &report.classifications {
        println!(
            "probe mass {:.6e}: {} (peak ratio {:.3})",
            p.mass, p.classification, p.peak_ratio
        );
    }
    Ok(0)
}

pub fn dispatch(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Run { common } => cmd_run(common),
        Command::SweepEpsilon { common, epsilons } => cmd_sweep_epsilon(common, epsilons),
        Command::Refine { common, mode, levels } => cmd_refine(common, *mode, *levels),
        Command::Probe { common, masses } => cmd_probe(common, masses),
        Command::AuditOffline { run_dir } => cmd_audit_offline(run_dir),
    }
}

/// Process entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            2
        }
    }
}
