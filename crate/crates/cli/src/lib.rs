//! Seeded decoherence experiments from the command line.
//!
//! `demo` runs one scenario, `sweep` runs a parameter grid, `separability`
//! analyses a single state. Output directories always receive a
//! `manifest.json` whose config digest can be recomputed.

pub mod config;
pub mod format;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use declab::engine::{
    evolve_trajectory, run_sweep, uniform_grid, EvolutionConfig, SweepOutcome, TrajectoryRecord,
};
use declab::measurement::{build_default_preselection, build_premeasurement_state, system_split, MeasurementScenario};
use declab::measures::{chsh_max, mutual_information, negativity, pointer_distinguishability, ppt_check, BipartiteSplit};
use declab::quantum::matrix_json::from_rows;
use declab::quantum::{DensityOperator, Factor, Layout, StateVector};
use declab::separability::{closest_separable, SolverSettings};
use declab::Complex64;

use config::{DemoConfig, SeparabilityConfig, StateSpec, SweepConfig};
use format::{csv, fmt_num, fmt_opt, fmt_text};
use manifest::{now_utc, RunManifest, MANIFEST_FILE};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const BUDGET_FILE: &str = "budget.json";
pub const SEPARABILITY_FILE: &str = "separability.json";

pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "t",
    "coherence",
    "negativity",
    "ree",
    "ree_gap",
    "classical_corr",
    "ratio",
    "seed",
    "cell_id",
];

pub const SWEEP_COLUMNS: [&str; 14] = [
    "cell_id",
    "d_m",
    "d_e",
    "coupling",
    "leak",
    "seed",
    "tau",
    "t_late",
    "ree",
    "ree_gap",
    "classical_corr",
    "ratio",
    "pinch_distance",
    "error",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 config, 3 I/O, 4 capacity, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Capacity(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<declab::Error> for CliError {
    fn from(e: declab::Error) -> Self {
        match e {
            declab::Error::Capacity { .. } => CliError::Capacity(e.to_string()),
            declab::Error::Argument(_) | declab::Error::InvalidState(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "decoherence-lab", version, about = "Seeded decoherence experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Master seed; overrides the config's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `out` for demo and sweep).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One default scenario: trajectory.csv, budget.json, manifest.json.
    Demo,
    /// A parameter grid from --config: sweep.csv, trajectories.csv, manifest.json.
    Sweep,
    /// Correlation measures of the state named in --config, printed as JSON.
    Separability,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Demo => {
            let mut cfg = match &cli.config {
                Some(p) => config::parse(&read(p)?, &p.display().to_string())?,
                None => DemoConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let rec = cmd_demo(&cfg, &out)?;
            println!(
                "demo: tau = {}, {} rows written to {}",
                fmt_opt(rec.tau),
                rec.rows.len(),
                out.display()
            );
        }
        Command::Sweep => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| CliError::Config("sweep needs --config FILE".into()))?;
            let mut cfg: SweepConfig = config::parse(&read(path)?, &path.display().to_string())?;
            if let Some(s) = cli.seed {
                cfg.master_seed = s;
            }
            let outcomes = cmd_sweep(&cfg, &out)?;
            let failed = outcomes.iter().filter(|o| o.record.is_err()).count();
            println!("sweep: {} rows ({failed} failed) written to {}", outcomes.len(), out.display());
        }
        Command::Separability => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| CliError::Config("separability needs --config FILE".into()))?;
            let cfg: SeparabilityConfig = config::parse(&read(path)?, &path.display().to_string())?;
            let report = cmd_separability(&cfg, cli.seed.unwrap_or(0), cli.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report).expect("JSON"));
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<(), CliError> {
    write(dir, MANIFEST_FILE, &(serde_json::to_string_pretty(m).expect("JSON") + "\n"))
}

fn trajectory_rows(rec: &TrajectoryRecord, seed: u64, cell_id: usize) -> Vec<Vec<String>> {
    rec.rows
        .iter()
        .map(|r| {
            let b = r.budget.as_ref();
            vec![
                fmt_num(r.t),
                fmt_num(r.coherence),
                fmt_num(r.negativity),
                fmt_opt(b.map(|b| b.ree)),
                fmt_opt(b.map(|b| b.gap)),
                fmt_opt(b.map(|b| b.classical)),
                fmt_opt(b.and_then(|b| b.ratio)),
                seed.to_string(),
                cell_id.to_string(),
            ]
        })
        .collect()
}

/// Trajectory CSV for one record.
pub fn trajectory_csv(rec: &TrajectoryRecord, seed: u64, cell_id: usize) -> String {
    csv(&TRAJECTORY_COLUMNS, &trajectory_rows(rec, seed, cell_id))
}

/// Late-time correlation budget plus every scheduled one.
pub fn budget_json(rec: &TrajectoryRecord) -> serde_json::Value {
    let scheduled: Vec<_> = rec
        .rows
        .iter()
        .filter_map(|r| r.budget.as_ref().map(|b| (r, b)))
        .map(|(r, b)| {
            json!({
                "t": r.t,
                "ree": b.ree,
                "ree_gap": b.gap,
                "classical_corr": b.classical,
                "ratio": b.ratio,
                "ratio_interval": b.ratio_interval,
                "converged": b.converged,
                "iterations": b.iterations,
                "coherence": r.coherence,
                "negativity": r.negativity,
                "pinch_distance": r.pinch_distance,
            })
        })
        .collect();
    json!({
        "tau": rec.tau,
        "decay_fit": rec.fit,
        "late": scheduled.last(),
        "scheduled": scheduled,
    })
}

/// Run the single demo scenario and write its artifacts into `out`.
pub fn cmd_demo(cfg: &DemoConfig, out: &Path) -> Result<TrajectoryRecord, CliError> {
    let started = now_utc();
    cfg.validate()?;
    let scenario = MeasurementScenario::new(cfg.alpha, cfg.d_m, cfg.d_e, cfg.coupling, cfg.leak, cfg.seed)?;
    let ecfg = EvolutionConfig {
        scenario,
        times: uniform_grid(cfg.t_max, cfg.dt)?,
        level_spacing: cfg.level_spacing,
        schedule: cfg.schedule.clone(),
    };
    ecfg.validate()?;
    prepare_dir(out)?;

    let rec = evolve_trajectory(&ecfg, &ecfg.dynamics_rng())?;
    write(out, TRAJECTORY_FILE, &trajectory_csv(&rec, cfg.seed, 0))?;
    write(out, BUDGET_FILE, &(serde_json::to_string_pretty(&budget_json(&rec)).expect("JSON") + "\n"))?;
    let m = RunManifest::new(
        "demo",
        cfg.seed,
        config::to_text(cfg),
        started,
        vec![TRAJECTORY_FILE.into(), BUDGET_FILE.into()],
    );
    write_manifest(out, &m)?;
    Ok(rec)
}

/// One summary line per cell and seed.
pub fn sweep_csv(outcomes: &[SweepOutcome]) -> String {
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            let s = o.summary();
            vec![
                s.cell.cell_id.to_string(),
                s.cell.d_m.to_string(),
                s.cell.d_e.to_string(),
                fmt_num(s.cell.coupling),
                fmt_num(s.cell.leak),
                s.seed_index.to_string(),
                fmt_opt(s.tau),
                fmt_opt(s.t_late),
                fmt_opt(s.ree),
                fmt_opt(s.ree_gap),
                fmt_opt(s.classical_corr),
                fmt_opt(s.ratio),
                fmt_opt(s.pinch_distance),
                s.error.as_deref().map(fmt_text).unwrap_or_default(),
            ]
        })
        .collect();
    csv(&SWEEP_COLUMNS, &rows)
}

/// Every successful trajectory of a sweep, tagged by seed index and cell.
pub fn trajectories_csv(outcomes: &[SweepOutcome]) -> String {
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .filter_map(|o| o.record.as_ref().ok().map(|r| (o, r)))
        .flat_map(|(o, r)| trajectory_rows(r, o.seed_index as u64, o.cell.cell_id))
        .collect();
    csv(&TRAJECTORY_COLUMNS, &rows)
}

/// Run a sweep and write its artifacts into `out`.
pub fn cmd_sweep(cfg: &SweepConfig, out: &Path) -> Result<Vec<SweepOutcome>, CliError> {
    let started = now_utc();
    let spec = cfg.to_spec()?;
    spec.validate()?;
    prepare_dir(out)?;
    let outcomes = run_sweep(&spec)?;
    write(out, SWEEP_FILE, &sweep_csv(&outcomes))?;
    write(out, TRAJECTORIES_FILE, &trajectories_csv(&outcomes))?;
    let m = RunManifest::new(
        "sweep",
        cfg.master_seed,
        config::to_text(cfg),
        started,
        vec![SWEEP_FILE.into(), TRAJECTORIES_FILE.into()],
    );
    write_manifest(out, &m)?;
    Ok(outcomes)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn two_qubits() -> Layout {
    Layout::qubit_pair("A", "B").expect("valid layout")
}

fn pure(amps: [f64; 4]) -> Result<DensityOperator, CliError> {
    let v = nalgebra::DVector::from_iterator(4, amps.iter().map(|&a| c(a)));
    Ok(StateVector::new(v, two_qubits())?.projector())
}

fn matrix(raw: &config::RawMatrix, layout: Layout) -> Result<DensityOperator, CliError> {
    let m = from_rows(raw).map_err(CliError::Config)?;
    if m.nrows() != m.ncols() || m.nrows() != layout.total_dim() {
        return Err(CliError::Config(format!(
            "matrix is {}x{} but the layout has dimension {}",
            m.nrows(),
            m.ncols(),
            layout.total_dim()
        )));
    }
    Ok(DensityOperator::new(m, layout)?)
}

/// The state and split a spec names.
pub fn build_state(spec: &StateSpec) -> Result<(DensityOperator, BipartiteSplit), CliError> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let rho = match spec {
        StateSpec::Bell => pure([h, 0.0, 0.0, h])?,
        StateSpec::Singlet => pure([0.0, h, -h, 0.0])?,
        StateSpec::Product => pure([h, h, 0.0, 0.0])?,
        StateSpec::Werner { p } => {
            if !(0.0..=1.0).contains(p) {
                return Err(CliError::Config(format!("werner weight p = {p} outside [0, 1]")));
            }
            let singlet = pure([0.0, h, -h, 0.0])?;
            singlet.mix(&DensityOperator::maximally_mixed(two_qubits()), *p)?
        }
        StateSpec::Eq2Model { alpha, d_m, decohered, seed } => {
            let s = MeasurementScenario::new(*alpha, *d_m, 1, 0.0, 0.0, *seed)?;
            let rho = if *decohered {
                build_default_preselection(&s)?
            } else {
                build_premeasurement_state(&s)?.rho
            };
            let split = system_split(rho.layout())?;
            return Ok((rho, split));
        }
        StateSpec::Matrix { dims, matrix: raw, split_at } => {
            if *split_at == 0 || *split_at >= dims.len() {
                return Err(CliError::Config(format!(
                    "split_at = {split_at} must leave factors on both sides of {} factors",
                    dims.len()
                )));
            }
            let factors = dims.iter().enumerate().map(|(k, &d)| Factor::new(format!("f{k}"), d)).collect();
            let layout = Layout::new(factors)?;
            let side_a: Vec<String> = (0..*split_at).map(|k| format!("f{k}")).collect();
            let rho = matrix(raw, layout)?;
            let split = BipartiteSplit::new(rho.layout(), &side_a)?;
            return Ok((rho, split));
        }
    };
    let split = BipartiteSplit::halves(rho.layout())?;
    Ok((rho, split))
}

/// Correlation measures of one state as a JSON object.
pub fn cmd_separability(cfg: &SeparabilityConfig, seed: u64, out: Option<&Path>) -> Result<serde_json::Value, CliError> {
    let started = now_utc();
    cfg.validate()?;
    let (rho, split) = build_state(&cfg.state)?;
    let mut settings = SolverSettings::with_seed(seed, 0);
    if let Some(s) = &cfg.solver {
        settings.gap_tolerance = s.gap_tolerance.unwrap_or(settings.gap_tolerance);
        settings.max_iterations = s.max_iterations.unwrap_or(settings.max_iterations);
    }
    let report = closest_separable(&rho, &split, &settings)?;
    let (lo, hi) = report.ree_interval();
    let dims = split.dims(rho.layout())?;
    let chsh = if dims == (2, 2) {
        let ordered = rho.permuted(&split.order())?;
        Some(chsh_max(&ordered)?.value)
    } else {
        None
    };
    let pointer = match &cfg.pointer {
        Some(p) => {
            let n = p.m1.len();
            let m1 = matrix(&p.m1, Layout::single("m", n)?)?;
            let m2 = matrix(&p.m2, Layout::single("m", p.m2.len())?)?;
            Some(pointer_distinguishability(&m1, &m2)?)
        }
        None => None,
    };
    let value = json!({
        "state": cfg.state,
        "dims": [dims.0, dims.1],
        "ree": report.ree.value,
        "ree_gap": report.duality_gap,
        "ree_interval": [lo, hi],
        "converged": report.converged,
        "iterations": report.iterations,
        "classical_corr": report.classical_correlation()?.value,
        "mutual_information": mutual_information(&rho, &split)?.value,
        "negativity": negativity(&rho, &split)?.value,
        "ppt": ppt_check(&rho, &split)?,
        "chsh_max": chsh,
        "pointer_distinguishability": pointer,
    });
    if let Some(dir) = out {
        prepare_dir(dir)?;
        write(dir, SEPARABILITY_FILE, &(serde_json::to_string_pretty(&value).expect("JSON") + "\n"))?;
        let m = RunManifest::new("separability", seed, config::to_text(cfg), started, vec![SEPARABILITY_FILE.into()]);
        write_manifest(dir, &m)?;
    }
    Ok(value)
}
