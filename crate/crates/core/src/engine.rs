//! Exact system–apparatus–environment evolution, decoherence times and sweeps.
//!
//! The Hamiltonian acts on `pointer ⊗ micro ⊗ E` and as the identity on `S`,
//! so the global state stays `Σᵢ αᵢ|sᵢ⟩ ⊗ Φᵢ(t)` with
//! `Φᵢ(t) = exp(−iHt)|aᵢ⟩|e₀⟩`. Only the two branch vectors are propagated.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::measurement::{
    apparatus_branches, system_split, MeasurementScenario, ENVIRONMENT, SYSTEM,
};
use crate::measures::{negativity, trace_norm};
use crate::quantum::matrix_json::complex_pair;
use crate::quantum::random::mix_stream;
use crate::quantum::{
    gue_sample, trace_distance, DensityOperator, Factor, HermitianOperator, Layout, Propagator, Role,
    RngStream, StateVector, MAX_TOTAL_DIM,
};
use crate::separability::{closest_separable, SolverSettings};

/// Substream ids under a trajectory's stream.
const HAMILTONIAN_STREAM: u64 = 0;
const SOLVER_STREAM: u64 = 1;
/// Substream of the scenario's stream that drives the dynamics.
const DYNAMICS_STREAM: u64 = 1;

/// Below this classical correlation the ratio is not reported.
const MIN_CLASSICAL: f64 = 1e-12;

/// Grid indices at which the separable-state solver runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// First, middle and last grid time.
    #[default]
    FirstMidLast,
    Last,
    All,
    None,
    Indices(Vec<usize>),
}

impl Schedule {
    /// Sorted, deduplicated indices into a grid of `n` times.
    pub fn indices(&self, n: usize) -> Result<Vec<usize>> {
        let mut idx = match self {
            _ if n == 0 => Vec::new(),
            Schedule::FirstMidLast => vec![0, (n - 1) / 2, n - 1],
            Schedule::Last => vec![n - 1],
            Schedule::All => (0..n).collect(),
            Schedule::None => Vec::new(),
            Schedule::Indices(v) => v.clone(),
        };
        if let Some(&bad) = idx.iter().find(|&&k| k >= n) {
            return arg(format!("scheduled index {bad} outside a grid of {n} times"));
        }
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub scenario: MeasurementScenario,
    /// Strictly increasing, starting at 0.
    pub times: Vec<f64>,
    /// Half-width `w` of the uniform diagonal apparatus and environment energies.
    #[serde(default)]
    pub level_spacing: f64,
    #[serde(default)]
    pub schedule: Schedule,
}

impl EvolutionConfig {
    pub fn new(scenario: MeasurementScenario, times: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            scenario,
            times,
            level_spacing: 0.0,
            schedule: Schedule::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `S ⊗ A ⊗ E` dimension.
    pub fn total_dim(&self) -> usize {
        2usize
            .saturating_mul(self.scenario.apparatus_dim())
            .saturating_mul(self.scenario.d_e)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let d = self.total_dim();
        if d > MAX_TOTAL_DIM {
            return Err(Error::Capacity {
                requested: d,
                max: MAX_TOTAL_DIM,
            });
        }
        validate_grid(&self.times)?;
        if !(self.level_spacing >= 0.0 && self.level_spacing.is_finite()) {
            return arg(format!("level spacing must be finite and >= 0 (got {})", self.level_spacing));
        }
        self.schedule.indices(self.times.len())?;
        Ok(())
    }

    /// The stream the demo and sweeps use for the dynamics of this scenario.
    pub fn dynamics_rng(&self) -> RngStream {
        self.scenario.rng().substream(DYNAMICS_STREAM)
    }
}

fn validate_grid(times: &[f64]) -> Result<()> {
    match times.first() {
        None => return arg("time grid is empty"),
        Some(&t0) if t0 != 0.0 => return arg(format!("time grid must start at 0 (got {t0})")),
        _ => {}
    }
    if times.iter().any(|t| !t.is_finite()) {
        return arg("time grid contains a non-finite value");
    }
    if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
        return arg(format!("time grid is not strictly increasing at {} -> {}", w[0], w[1]));
    }
    Ok(())
}

/// `0, dt, 2dt, …, t_max` computed as `k·dt`.
pub fn uniform_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && t_max >= 0.0 && t_max.is_finite()) {
        return arg(format!("grid needs dt > 0 and t_max >= 0 (got dt = {dt}, t_max = {t_max})"));
    }
    let n = (t_max / dt).round();
    if (n * dt - t_max).abs() > 1e-9 * t_max.max(1.0) {
        return arg(format!("t_max = {t_max} is not a multiple of dt = {dt}"));
    }
    Ok((0..=n as usize).map(|k| k as f64 * dt).collect())
}

/// `pointer ⊗ micro ⊗ E`.
pub fn apparatus_environment_layout(s: &MeasurementScenario) -> Result<Layout> {
    s.apparatus_layout()?
        .concat(&Layout::new(vec![Factor::new(ENVIRONMENT, s.d_e).with_role(Role::Environment)])?)
}

/// `H_A + H_E + λ(Π₁⊗V₁ + Π₂⊗V₂) + ηW` on `pointer ⊗ micro ⊗ E`.
///
/// Draw order is fixed (apparatus energies, environment energies, `V₁`,
/// `V₂`, `W`) and every term is drawn even when its prefactor is zero, so a
/// stream always maps to the same matrices.
pub fn assemble_hamiltonian(cfg: &EvolutionConfig, rng: &mut RngStream) -> Result<HermitianOperator> {
    cfg.validate()?;
    let s = &cfg.scenario;
    let (da, de) = (s.apparatus_dim(), s.d_e);
    let sector = s.d_m * de;
    let n = da * de;
    let w = cfg.level_spacing;

    let mut uniform = |k: usize| -> Vec<f64> { (0..k).map(|_| w * (2.0 * rng.gen::<f64>() - 1.0)).collect() };
    let ea = uniform(da);
    let ee = uniform(de);
    let v1 = gue_sample(sector, 1.0 / (sector as f64).sqrt(), rng)?;
    let v2 = gue_sample(sector, 1.0 / (sector as f64).sqrt(), rng)?;
    let leak = gue_sample(n, 1.0 / (n as f64).sqrt(), rng)?;

    let mut h = leak.matrix().scale(s.leak);
    for (i, v) in [v1, v2].iter().enumerate() {
        let mut block = h.view_mut((i * sector, i * sector), (sector, sector));
        block += v.matrix().scale(s.coupling);
    }
    for a in 0..da {
        for e in 0..de {
            h[(a * de + e, a * de + e)] += Complex64::new(ea[a] + ee[e], 0.0);
        }
    }
    HermitianOperator::new(h)
}

/// `I_S ⊗ H`, for checks on small instances.
pub fn embed_in_system(h: &HermitianOperator) -> Result<HermitianOperator> {
    let id = DMatrix::<Complex64>::identity(2, 2);
    HermitianOperator::new(id.kronecker(h.matrix()))
}

#[derive(Debug, Clone)]
enum Dynamics {
    /// `H` has no matrix elements between the pointer sectors; each branch
    /// evolves with its own block.
    Sectors { props: [Propagator; 2], coeffs: [DMatrix<Complex64>; 2] },
    Full { prop: Propagator, coeffs: DMatrix<Complex64> },
}

/// Exact evolution of one scenario under a fixed Hamiltonian.
#[derive(Debug, Clone)]
pub struct Evolution {
    alpha: [Complex64; 2],
    d_m: usize,
    d_e: usize,
    dynamics: Dynamics,
}

impl Evolution {
    pub fn new(cfg: &EvolutionConfig, rng: &mut RngStream) -> Result<Self> {
        let h = assemble_hamiltonian(cfg, rng)?;
        Self::with_hamiltonian(&cfg.scenario, &h)
    }

    /// `h` acts on `pointer ⊗ micro ⊗ E`.
    pub fn with_hamiltonian(s: &MeasurementScenario, h: &HermitianOperator) -> Result<Self> {
        s.validate()?;
        let (da, de) = (s.apparatus_dim(), s.d_e);
        let n = da * de;
        if h.dim() != n {
            return arg(format!("Hamiltonian dimension {} does not match apparatus ⊗ environment {n}", h.dim()));
        }
        let branches = apparatus_branches(s)?;
        let mut initial = DMatrix::<Complex64>::zeros(n, 2);
        for (i, b) in branches.iter().enumerate() {
            for (a, &z) in b.amplitudes().iter().enumerate() {
                initial[(a * de, i)] = z;
            }
        }

        let half = s.d_m * de;
        let m = h.matrix();
        let coupled = m.view((0, half), (half, half)).iter().any(|z| *z != Complex64::new(0.0, 0.0));
        let dynamics = if coupled {
            let prop = Propagator::new(h)?;
            let coeffs = prop.to_eigenbasis(&initial);
            Dynamics::Full { prop, coeffs }
        } else {
            let mut props = Vec::with_capacity(2);
            let mut coeffs = Vec::with_capacity(2);
            for i in 0..2 {
                let block = HermitianOperator::new(m.view((i * half, i * half), (half, half)).into_owned())?;
                let p = Propagator::new(&block)?;
                let start = initial.view((i * half, i), (half, 1)).into_owned();
                coeffs.push(p.to_eigenbasis(&start));
                props.push(p);
            }
            Dynamics::Sectors {
                props: [props.remove(0), props.remove(0)],
                coeffs: [coeffs.remove(0), coeffs.remove(0)],
            }
        };
        Ok(Self {
            alpha: s.alpha,
            d_m: s.d_m,
            d_e: de,
            dynamics,
        })
    }

    /// `Φ₁(t), Φ₂(t)` on `pointer ⊗ micro ⊗ E`.
    pub fn branches(&self, t: f64) -> [DVector<Complex64>; 2] {
        match &self.dynamics {
            Dynamics::Full { prop, coeffs } => {
                let out = prop.from_eigenbasis(coeffs, t);
                [out.column(0).into_owned(), out.column(1).into_owned()]
            }
            Dynamics::Sectors { props, coeffs } => {
                let half = self.d_m * self.d_e;
                let mut out = [DVector::zeros(2 * half), DVector::zeros(2 * half)];
                for i in 0..2 {
                    let v = props[i].from_eigenbasis(&coeffs[i], t);
                    out[i].rows_mut(i * half, half).copy_from(&v.column(0));
                }
                out
            }
        }
    }

    /// Branch vectors as `A × E` coefficient matrices.
    fn branch_matrices(&self, t: f64) -> [DMatrix<Complex64>; 2] {
        let da = 2 * self.d_m;
        self.branches(t)
            .map(|v| DMatrix::from_row_slice(da, self.d_e, v.as_slice()))
    }

    /// `ρ_SA(t)` on `S ⊗ pointer ⊗ micro`.
    pub fn state(&self, t: f64) -> Result<DensityOperator> {
        let x = self.branch_matrices(t);
        let da = 2 * self.d_m;
        let mut m = DMatrix::zeros(2 * da, 2 * da);
        for i in 0..2 {
            for j in 0..2 {
                let block = (&x[i] * x[j].adjoint()) * (self.alpha[i] * self.alpha[j].conj());
                m.view_mut((i * da, j * da), (da, da)).copy_from(&block);
            }
        }
        DensityOperator::new(m, self.system_apparatus_layout()?)
    }

    fn system_apparatus_layout(&self) -> Result<Layout> {
        crate::measurement::system_layout()?.concat(&crate::measurement::apparatus_layout(self.d_m)?)
    }

    /// `‖⟨s₁|ρ_SA(t)|s₂⟩‖₁ / |α₁α₂| = ‖Tr_E |Φ₁⟩⟨Φ₂|‖₁`.
    ///
    /// Written in the branch form it is defined even when one amplitude vanishes.
    pub fn coherence(&self, t: f64) -> f64 {
        let x = self.branch_matrices(t);
        trace_norm(&(&x[0] * x[1].adjoint()))
    }

    /// The global pure state on `S ⊗ pointer ⊗ micro ⊗ E`.
    pub fn global_state(&self, t: f64) -> Result<StateVector> {
        let phi = self.branches(t);
        let n = phi[0].len();
        let mut v = DVector::zeros(2 * n);
        for i in 0..2 {
            v.rows_mut(i * n, n).axpy(self.alpha[i], &phi[i], Complex64::new(0.0, 0.0));
        }
        let layout = self.system_apparatus_layout()?.concat(&Layout::new(vec![
            Factor::new(ENVIRONMENT, self.d_e).with_role(Role::Environment),
        ])?)?;
        let norm = v.norm();
        if (norm * norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("global state lost normalization: |ψ|² = {}", norm * norm)));
        }
        StateVector::normalized(v, layout)
    }

    /// `Tr(Πᵢ ρ_A(t))` for the two pointer sectors.
    pub fn pointer_populations(&self, t: f64) -> [f64; 2] {
        let phi = self.branches(t);
        let half = self.d_m * self.d_e;
        let mut p = [0.0; 2];
        for (i, v) in phi.iter().enumerate() {
            let w = self.alpha[i].norm_sqr();
            for (sector, pk) in p.iter_mut().enumerate() {
                *pk += w * v.rows(sector * half, half).norm_squared();
            }
        }
        p
    }
}

/// Solver REE, the classical correlation of its minimizer and their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationBudget {
    pub ree: f64,
    pub gap: f64,
    pub classical: f64,
    /// `ree / classical`; absent when the classical correlation vanishes.
    pub ratio: Option<f64>,
    /// `[max(0, ree − gap)/C, ree/C]`.
    pub ratio_interval: Option<[f64; 2]>,
    pub converged: bool,
    pub iterations: usize,
}

/// Correlation budget of a state on `S ⊗ A`, split as system versus apparatus.
pub fn correlation_budget(rho: &DensityOperator, settings: &SolverSettings) -> Result<CorrelationBudget> {
    let split = system_split(rho.layout())?;
    let report = closest_separable(rho, &split, settings)?;
    let classical = report.classical_correlation()?.value;
    let (lo, hi) = report.ree_interval();
    let ratio = (classical > MIN_CLASSICAL).then(|| report.ree.value / classical);
    Ok(CorrelationBudget {
        ree: report.ree.value,
        gap: report.duality_gap,
        classical,
        ratio,
        ratio_interval: ratio.map(|_| [lo / classical, hi / classical]),
        converged: report.converged,
        iterations: report.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub coherence: f64,
    pub negativity: f64,
    /// `½‖ρ_SA − pinch_S(ρ_SA)‖₁`.
    pub pinch_distance: f64,
    pub budget: Option<CorrelationBudget>,
}

/// Least-squares decay constants of `c(t)` before it first falls below 0.05.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// `c ≈ exp(−t/τ)`.
    pub exponential: f64,
    /// `c ≈ exp(−(t/τ)²)`.
    pub gaussian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    /// First `1/e` crossing of the coherence.
    pub tau: Option<f64>,
    pub fit: Option<DecayFit>,
    pub seed: u64,
    pub stream: u64,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn coherence(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.coherence).collect()
    }

    /// The row at the latest time that has a budget.
    pub fn late_budget(&self) -> Option<(&TrajectoryRow, &CorrelationBudget)> {
        self.rows.iter().rev().find_map(|r| r.budget.as_ref().map(|b| (r, b)))
    }
}

/// Evolve, record the coherence and negativity on every grid time and the
/// correlation budget on the scheduled ones.
///
/// The Hamiltonian is drawn from a substream of `rng` and each solver run from
/// another, so the record depends only on `(cfg, rng)`.
pub fn evolve_trajectory(cfg: &EvolutionConfig, rng: &RngStream) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let evo = Evolution::new(cfg, &mut rng.substream(HAMILTONIAN_STREAM))?;
    let scheduled = cfg.schedule.indices(cfg.times.len())?;
    let solver_rng = rng.substream(SOLVER_STREAM);

    let mut rows = Vec::with_capacity(cfg.times.len());
    for (k, &t) in cfg.times.iter().enumerate() {
        let rho = evo.state(t)?;
        let split = system_split(rho.layout())?;
        let budget = if scheduled.binary_search(&k).is_ok() {
            let settings = SolverSettings {
                rng: solver_rng.substream(k as u64),
                ..SolverSettings::default()
            };
            Some(correlation_budget(&rho, &settings)?)
        } else {
            None
        };
        rows.push(TrajectoryRow {
            t,
            coherence: evo.coherence(t),
            negativity: negativity(&rho, &split)?.value,
            pinch_distance: trace_distance(&rho, &rho.pinched(SYSTEM)?)?,
            budget,
        });
    }
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let coherence: Vec<f64> = rows.iter().map(|r| r.coherence).collect();
    Ok(TrajectoryRecord {
        tau: estimate_decoherence_time(&times, &coherence)?,
        fit: fit_decay(&times, &coherence),
        rows,
        seed: cfg.scenario.seed,
        stream: cfg.scenario.stream,
    })
}

/// First time `c(t) ≤ 1/e`, linearly interpolated between the bracketing grid points.
pub fn estimate_decoherence_time(times: &[f64], coherence: &[f64]) -> Result<Option<f64>> {
    if times.is_empty() {
        return arg("cannot estimate a decoherence time from an empty record");
    }
    if times.len() != coherence.len() {
        return arg(format!("{} times but {} coherence values", times.len(), coherence.len()));
    }
    let threshold = (-1.0f64).exp();
    let Some(k) = coherence.iter().position(|&c| c <= threshold) else {
        return Ok(None);
    };
    if k == 0 || coherence[k] == threshold {
        return Ok(Some(times[k]));
    }
    let (c0, c1) = (coherence[k - 1], coherence[k]);
    Ok(Some(times[k - 1] + (c0 - threshold) / (c0 - c1) * (times[k] - times[k - 1])))
}

/// Fits through the origin of `ln c` against `t` and `t²`.
pub fn fit_decay(times: &[f64], coherence: &[f64]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(coherence)
        .take_while(|(_, &c)| c >= 0.05)
        .filter(|(&t, &c)| t > 0.0 && c < 1.0)
        .map(|(&t, &c)| (t, c.ln()))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let (mut s_tt, mut s_tl, mut s_t4, mut s_t2l) = (0.0, 0.0, 0.0, 0.0);
    for &(t, l) in &pts {
        s_tt += t * t;
        s_tl += t * l;
        s_t4 += t.powi(4);
        s_t2l += t * t * l;
    }
    Some(DecayFit {
        exponential: -s_tt / s_tl,
        gaussian: (-s_t4 / s_t2l).sqrt(),
    })
}

fn one() -> Vec<f64> {
    vec![0.0]
}

fn equal_alpha() -> [Complex64; 2] {
    let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [a, a]
}

fn last() -> Schedule {
    Schedule::Last
}

/// Grid of sweep cells, each run for `seeds` independent seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub d_m: Vec<usize>,
    pub d_e: Vec<usize>,
    pub coupling: Vec<f64>,
    #[serde(default = "one")]
    pub leak: Vec<f64>,
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "equal_alpha", with = "complex_pair")]
    pub alpha: [Complex64; 2],
    pub times: Vec<f64>,
    #[serde(default)]
    pub level_spacing: f64,
    #[serde(default = "last")]
    pub schedule: Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub cell_id: usize,
    pub d_m: usize,
    pub d_e: usize,
    pub coupling: f64,
    pub leak: f64,
}

impl SweepSpec {
    /// Cells in row-major order over `(d_m, d_e, coupling, leak)`.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut out = Vec::new();
        for &d_m in &self.d_m {
            for &d_e in &self.d_e {
                for &coupling in &self.coupling {
                    for &leak in &self.leak {
                        out.push(SweepCell {
                            cell_id: out.len(),
                            d_m,
                            d_e,
                            coupling,
                            leak,
                        });
                    }
                }
            }
        }
        out
    }

    /// The configuration of one task. Its stream is keyed by `(master seed, cell, seed index)`.
    pub fn config(&self, cell: &SweepCell, seed_index: usize) -> Result<EvolutionConfig> {
        let scenario = MeasurementScenario::new(self.alpha, cell.d_m, cell.d_e, cell.coupling, cell.leak, self.master_seed)?
            .with_stream(mix_stream(cell.cell_id as u64, seed_index as u64));
        let cfg = EvolutionConfig {
            scenario,
            times: self.times.clone(),
            level_spacing: self.level_spacing,
            schedule: self.schedule.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks plus the capacity of every cell.
    pub fn validate(&self) -> Result<()> {
        for (name, len) in [
            ("d_m", self.d_m.len()),
            ("d_e", self.d_e.len()),
            ("coupling", self.coupling.len()),
            ("leak", self.leak.len()),
        ] {
            if len == 0 {
                return arg(format!("sweep list `{name}` is empty"));
            }
        }
        if self.seeds == 0 {
            return arg("sweep needs at least one seed per cell");
        }
        for cell in self.cells() {
            self.config(&cell, 0)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cell: SweepCell,
    pub seed_index: usize,
    pub record: std::result::Result<TrajectoryRecord, Error>,
}

/// One summary line per cell and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub seed_index: usize,
    pub tau: Option<f64>,
    /// Time of the late-time budget.
    pub t_late: Option<f64>,
    pub ree: Option<f64>,
    pub ree_gap: Option<f64>,
    pub classical_corr: Option<f64>,
    pub ratio: Option<f64>,
    /// At the final grid time.
    pub pinch_distance: Option<f64>,
    pub error: Option<String>,
}

impl SweepOutcome {
    pub fn summary(&self) -> SweepRow {
        let mut row = SweepRow {
            cell: self.cell,
            seed_index: self.seed_index,
            tau: None,
            t_late: None,
            ree: None,
            ree_gap: None,
            classical_corr: None,
            ratio: None,
            pinch_distance: None,
            error: None,
        };
        match &self.record {
            Err(e) => row.error = Some(e.to_string()),
            Ok(rec) => {
                row.tau = rec.tau;
                row.pinch_distance = rec.rows.last().map(|r| r.pinch_distance);
                if let Some((r, b)) = rec.late_budget() {
                    row.t_late = Some(r.t);
                    row.ree = Some(b.ree);
                    row.ree_gap = Some(b.gap);
                    row.classical_corr = Some(b.classical);
                    row.ratio = b.ratio;
                }
            }
        }
        row
    }
}

/// Run every `(cell, seed)` task in parallel; results come back in task order.
///
/// A failing task is recorded in its outcome and does not stop the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepOutcome>> {
    spec.validate()?;
    let tasks: Vec<(SweepCell, usize)> = spec
        .cells()
        .into_iter()
        .flat_map(|c| (0..spec.seeds).map(move |k| (c, k)))
        .collect();
    Ok(tasks
        .into_par_iter()
        .map(|(cell, seed_index)| {
            let record = spec
                .config(&cell, seed_index)
                .and_then(|cfg| evolve_trajectory(&cfg, &cfg.dynamics_rng()));
            SweepOutcome {
                cell,
                seed_index,
                record,
            }
        })
        .collect())
}
