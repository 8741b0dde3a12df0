//! Builders for the system–apparatus states of the measurement scheme.
//!
//! Layouts use fixed factor names: the two-level system `S`, the apparatus
//! split into a two-valued `pointer` and a `micro` factor of dimension `d_M`,
//! and the environment `E`. Pointer sector `i` is the span of
//! `|i⟩_pointer ⊗ |w⟩_micro`. Outcomes are labelled 1 and 2.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::measures::BipartiteSplit;
use crate::quantum::matrix_json::{complex_list, complex_pair};
use crate::quantum::{haar_random_state, DensityOperator, Factor, Layout, Role, RngStream, StateVector};

pub const SYSTEM: &str = "S";
pub const POINTER: &str = "pointer";
pub const MICRO: &str = "micro";
pub const ENVIRONMENT: &str = "E";

pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Largest matrix element tolerated where a block structure requires zero.
pub const BLOCK_TOL: f64 = 1e-10;
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-12;

/// Substream of the scenario's stream used for the sector vectors.
const SECTOR_STREAM: u64 = 0;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Everything that fixes one run of the measurement model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementScenario {
    /// System amplitudes `(α₁, α₂)`.
    #[serde(with = "complex_pair")]
    pub alpha: [Complex64; 2],
    /// Micro dimension per pointer sector.
    pub d_m: usize,
    pub d_e: usize,
    /// Pointer-conserving coupling strength λ.
    pub coupling: f64,
    /// Pointer-leak strength η.
    #[serde(default)]
    pub leak: f64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl MeasurementScenario {
    pub fn new(alpha: [Complex64; 2], d_m: usize, d_e: usize, coupling: f64, leak: f64, seed: u64) -> Result<Self> {
        let s = Self {
            alpha,
            d_m,
            d_e,
            coupling,
            leak,
            seed,
            stream: 0,
        };
        s.validate()?;
        Ok(s)
    }

    /// `α = (1/√2, 1/√2)`.
    pub fn equal_amplitudes(d_m: usize, d_e: usize, coupling: f64, seed: u64) -> Result<Self> {
        let a = c(std::f64::consts::FRAC_1_SQRT_2);
        Self::new([a, a], d_m, d_e, coupling, 0.0, seed)
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.alpha[0].norm_sqr() + self.alpha[1].norm_sqr();
        if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
            return arg(format!("amplitudes have squared norm {norm}, not 1"));
        }
        if self.d_m == 0 || self.d_e == 0 {
            return arg("micro and environment dimensions must be at least 1");
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return arg(format!("coupling must be finite and >= 0 (got {})", self.coupling));
        }
        if !(self.leak >= 0.0 && self.leak.is_finite()) {
            return arg(format!("leak must be finite and >= 0 (got {})", self.leak));
        }
        Ok(())
    }

    pub fn rng(&self) -> RngStream {
        RngStream::new(self.seed, self.stream)
    }

    /// Born weights `(|α₁|², |α₂|²)`.
    pub fn probabilities(&self) -> [f64; 2] {
        [self.alpha[0].norm_sqr(), self.alpha[1].norm_sqr()]
    }

    pub fn apparatus_dim(&self) -> usize {
        2 * self.d_m
    }

    pub fn apparatus_layout(&self) -> Result<Layout> {
        apparatus_layout(self.d_m)
    }

    /// `S ⊗ pointer ⊗ micro`.
    pub fn system_apparatus_layout(&self) -> Result<Layout> {
        system_layout()?.concat(&self.apparatus_layout()?)
    }
}

pub fn system_layout() -> Result<Layout> {
    Layout::new(vec![Factor::new(SYSTEM, 2).with_role(Role::System)])
}

/// `pointer ⊗ micro`, the apparatus.
pub fn apparatus_layout(d_m: usize) -> Result<Layout> {
    Layout::new(vec![
        Factor::new(POINTER, 2).with_role(Role::Pointer),
        Factor::new(MICRO, d_m).with_role(Role::Micro),
    ])
}

/// System versus everything else.
pub fn system_split(layout: &Layout) -> Result<BipartiteSplit> {
    BipartiteSplit::new(layout, &[SYSTEM])
}

/// `|i⟩_pointer ⊗ |m⟩_micro` for sector `i ∈ {0, 1}`.
fn in_sector(sector: usize, micro: &DVector<Complex64>, d_m: usize) -> Result<StateVector> {
    let mut v = DVector::zeros(2 * d_m);
    v.rows_mut(sector * d_m, d_m).copy_from(micro);
    StateVector::new(v, apparatus_layout(d_m)?)
}

/// The apparatus states `|a₁⟩, |a₂⟩`: Haar-random unit vectors in the two sectors.
pub fn apparatus_branches(s: &MeasurementScenario) -> Result<[StateVector; 2]> {
    s.validate()?;
    let mut rng = s.rng().substream(SECTOR_STREAM);
    let m1 = haar_random_state(s.d_m, &mut rng)?;
    let m2 = haar_random_state(s.d_m, &mut rng)?;
    Ok([
        in_sector(0, m1.amplitudes(), s.d_m)?,
        in_sector(1, m2.amplitudes(), s.d_m)?,
    ])
}

#[derive(Debug, Clone)]
pub struct Premeasurement {
    /// `α₁|s₁⟩|a₁⟩ + α₂|s₂⟩|a₂⟩`.
    pub psi: StateVector,
    pub rho: DensityOperator,
    pub branches: [StateVector; 2],
}

/// The entangled system–apparatus state right after the measurement interaction.
pub fn build_premeasurement_state(s: &MeasurementScenario) -> Result<Premeasurement> {
    let branches = apparatus_branches(s)?;
    let layout = s.system_apparatus_layout()?;
    let da = s.apparatus_dim();
    let mut v = DVector::zeros(2 * da);
    for i in 0..2 {
        v.rows_mut(i * da, da).axpy(s.alpha[i], branches[i].amplitudes(), c(0.0));
    }
    let psi = StateVector::new(v, layout)?;
    Ok(Premeasurement {
        rho: psi.projector(),
        psi,
        branches,
    })
}

/// Maximally mixed state on pointer sector `outcome` (1 or 2).
pub fn default_pointer_state(d_m: usize, outcome: usize) -> Result<DensityOperator> {
    let sector = sector_index(outcome)?;
    let mut p = vec![0.0; 2 * d_m];
    for w in 0..d_m {
        p[sector * d_m + w] = 1.0 / d_m as f64;
    }
    DensityOperator::diagonal(&p, apparatus_layout(d_m)?)
}

fn sector_index(outcome: usize) -> Result<usize> {
    match outcome {
        1 | 2 => Ok(outcome - 1),
        _ => arg(format!("outcome must be 1 or 2 (got {outcome})")),
    }
}

/// Largest matrix element of `m` outside the diagonal block of `sector`.
fn outside_sector(m: &DMatrix<Complex64>, sector: usize, d_m: usize) -> f64 {
    let inside = |k: usize| k / d_m == sector;
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !(inside(i) && inside(j)) {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// `|α₁|²|s₁⟩⟨s₁|⊗M₁ + |α₂|²|s₂⟩⟨s₂|⊗M₂`, the decohered state before read-out.
///
/// `m1` and `m2` live on the apparatus and must be supported on sectors 1 and 2.
pub fn build_preselection_state(
    s: &MeasurementScenario,
    m1: &DensityOperator,
    m2: &DensityOperator,
) -> Result<DensityOperator> {
    s.validate()?;
    let da = s.apparatus_dim();
    let mut out = DMatrix::zeros(2 * da, 2 * da);
    let p = s.probabilities();
    for (i, m) in [m1, m2].into_iter().enumerate() {
        if m.dim() != da {
            return arg(format!(
                "pointer state {} has dimension {}, apparatus has {da}",
                i + 1,
                m.dim()
            ));
        }
        let leak = outside_sector(m.matrix(), i, s.d_m);
        if leak > BLOCK_TOL {
            return arg(format!(
                "pointer state {} has weight {leak:e} outside its sector",
                i + 1
            ));
        }
        out.view_mut((i * da, i * da), (da, da)).copy_from(&m.matrix().scale(p[i]));
    }
    DensityOperator::new(out, s.system_apparatus_layout()?)
}

/// Pre-selection state with maximally mixed pointer states.
pub fn build_default_preselection(s: &MeasurementScenario) -> Result<DensityOperator> {
    build_preselection_state(s, &default_pointer_state(s.d_m, 1)?, &default_pointer_state(s.d_m, 2)?)
}

/// The factor the outcome refers to: the one tagged `System`, else the one named `S`.
fn system_factor(layout: &Layout) -> Result<&Factor> {
    layout
        .factor_with_role(Role::System)
        .map_or_else(|| layout.factor(SYSTEM), Ok)
}

/// Condition a block-diagonal state on system outcome 1 or 2.
///
/// Returns the outcome probability and the normalized conditional state
/// `|sᵢ⟩⟨sᵢ| ⊗ Mᵢ` on the same layout.
pub fn postselect(rho_bar: &DensityOperator, outcome: usize) -> Result<(f64, DensityOperator)> {
    let sector = sector_index(outcome)?;
    let layout = rho_bar.layout();
    let sys = system_factor(layout)?;
    if sys.dim != 2 {
        return arg(format!("system factor `{}` has dimension {}, expected 2", sys.name, sys.dim));
    }
    let pos = layout.position(&sys.name)?;
    let n = rho_bar.dim();
    let digit: Vec<usize> = (0..n).map(|k| layout.digits(k)[pos]).collect();
    let m = rho_bar.matrix();
    let mut coherence: f64 = 0.0;
    let mut block = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if digit[i] != digit[j] {
                coherence = coherence.max(m[(i, j)].norm());
            } else if digit[i] == sector {
                block[(i, j)] = m[(i, j)];
            }
        }
    }
    if coherence > BLOCK_TOL {
        return arg(format!(
            "state keeps system coherences of size {coherence:e}; post-selection needs the decohered form"
        ));
    }
    let p = block.trace().re;
    if !(p >= MIN_OUTCOME_PROBABILITY) {
        return Err(Error::DegenerateOutcome(p.max(0.0)));
    }
    let state = DensityOperator::from_unnormalized(block, layout.clone())?;
    Ok((p, state))
}

/// Amplitude tables of a superposition of the two pointer sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerSuperpositionSpec {
    /// Amplitudes on `|λ₁; u⟩`.
    #[serde(with = "complex_list")]
    pub alpha: Vec<Complex64>,
    /// Amplitudes on `|λ₂; v⟩`.
    #[serde(with = "complex_list")]
    pub beta: Vec<Complex64>,
}

impl PointerSuperpositionSpec {
    pub fn new(alpha: Vec<Complex64>, beta: Vec<Complex64>) -> Result<Self> {
        let s = Self { alpha, beta };
        s.validate()?;
        Ok(s)
    }

    /// Haar-random amplitudes over both sectors.
    pub fn random(d_m: usize, rng: &mut RngStream) -> Result<Self> {
        let v = haar_random_state(2 * d_m, rng)?;
        let a = v.amplitudes().as_slice();
        Self::new(a[..d_m].to_vec(), a[d_m..].to_vec())
    }

    pub fn d_m(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.alpha.len() != self.beta.len() {
            return arg(format!(
                "amplitude tables need equal nonzero lengths (got {} and {})",
                self.alpha.len(),
                self.beta.len()
            ));
        }
        let norm: f64 = self.alpha.iter().chain(&self.beta).map(|z| z.norm_sqr()).sum();
        if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
            return arg(format!("amplitude tables have squared norm {norm}, not 1"));
        }
        Ok(())
    }

    fn amplitudes(&self) -> DVector<Complex64> {
        DVector::from_iterator(2 * self.d_m(), self.alpha.iter().chain(&self.beta).copied())
    }
}

/// `|ξ⟩ = Σ_u α_u|λ₁;u⟩ + Σ_v β_v|λ₂;v⟩` on `pointer ⊗ micro`.
pub fn build_pointer_superposition(spec: &PointerSuperpositionSpec) -> Result<StateVector> {
    spec.validate()?;
    StateVector::new(spec.amplitudes(), apparatus_layout(spec.d_m())?)
}

/// `Σ_u |α_u|² P(λ₁;u) + Σ_v |β_v|² P(λ₂;v)`, the fully dephased mixture.
pub fn pointer_mixture(spec: &PointerSuperpositionSpec) -> Result<DensityOperator> {
    spec.validate()?;
    let p: Vec<f64> = spec.amplitudes().iter().map(|z| z.norm_sqr()).collect();
    DensityOperator::diagonal(&p, apparatus_layout(spec.d_m())?)
}

/// Average of `|ξ'⟩⟨ξ'|` over `n` realizations, each multiplying every basis
/// amplitude by an independent uniform phase.
pub fn dephase_pointer_superposition(xi: &StateVector, n: usize, rng: &mut RngStream) -> Result<DensityOperator> {
    if n == 0 {
        return arg("dephasing needs at least one realization");
    }
    let d = xi.dim();
    // Accumulate E[z zᴴ] over the phase vectors, then weight |ξ⟩⟨ξ| elementwise.
    let mut corr = DMatrix::<Complex64>::zeros(d, d);
    let mut z = DVector::<Complex64>::zeros(d);
    for _ in 0..n {
        for zk in z.iter_mut() {
            *zk = Complex64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU);
        }
        corr.ger(c(1.0), &z, &z.conjugate(), c(1.0));
    }
    let a = xi.amplitudes();
    let m = DMatrix::from_fn(d, d, |j, k| {
        if j == k {
            c(a[j].norm_sqr())
        } else {
            a[j] * a[k].conj() * corr[(j, k)] / n as f64
        }
    });
    DensityOperator::new(m, xi.layout().clone())
}

pub const PARTICLE_1: &str = "p1";
pub const PARTICLE_2: &str = "p2";

/// Singlet pair with one particle coupled to the apparatus.
#[derive(Debug, Clone)]
pub struct EprScenario {
    /// `(|+−⟩ − |−+⟩)/√2` on `p1 ⊗ p2`, with `|+⟩` the first basis state.
    pub singlet: DensityOperator,
    /// `(|+−⟩|a₁⟩ − |−+⟩|a₂⟩)/√2` on `p1 ⊗ p2 ⊗ pointer ⊗ micro`.
    pub premeasurement: DensityOperator,
    /// `½|+−⟩⟨+−|⊗M₁ + ½|−+⟩⟨−+|⊗M₂` with maximally mixed `Mᵢ`.
    pub preselection: DensityOperator,
    /// 1 or 2.
    pub measured: usize,
}

impl EprScenario {
    /// The two particles versus the apparatus.
    pub fn split(&self) -> Result<BipartiteSplit> {
        BipartiteSplit::new(self.preselection.layout(), &[PARTICLE_1, PARTICLE_2])
    }
}

/// Build the singlet and its measured versions for particle 1 or 2.
///
/// The measured particle carries the `System` role. Sector 1 records the
/// branch `|+−⟩`: outcome `−` on particle 2, or outcome `+` on particle 1.
pub fn build_epr_scenario(measured: usize, d_m: usize, rng: &mut RngStream) -> Result<EprScenario> {
    sector_index(measured)?;
    if d_m == 0 {
        return arg("micro dimension must be at least 1");
    }
    let factors = [PARTICLE_1, PARTICLE_2]
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let f = Factor::new(name, 2);
            if k + 1 == measured {
                f.with_role(Role::System)
            } else {
                f
            }
        })
        .collect();
    let pair = Layout::new(factors)?;
    let layout = pair.concat(&apparatus_layout(d_m)?)?;

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut s = DVector::zeros(4);
    s[1] = c(h);
    s[2] = c(-h);
    let singlet = StateVector::new(s.clone(), pair)?;

    let a1 = haar_random_state(d_m, rng)?;
    let a2 = haar_random_state(d_m, rng)?;
    let branches = [in_sector(0, a1.amplitudes(), d_m)?, in_sector(1, a2.amplitudes(), d_m)?];
    let da = 2 * d_m;
    let mut v = DVector::zeros(4 * da);
    v.rows_mut(da, da).axpy(s[1], branches[0].amplitudes(), c(0.0));
    v.rows_mut(2 * da, da).axpy(s[2], branches[1].amplitudes(), c(0.0));
    let premeasurement = StateVector::new(v, layout.clone())?.projector();

    let mut m = DMatrix::zeros(4 * da, 4 * da);
    for (pair_index, outcome) in [(1, 1), (2, 2)] {
        let mi = default_pointer_state(d_m, outcome)?;
        m.view_mut((pair_index * da, pair_index * da), (da, da))
            .copy_from(&mi.matrix().scale(0.5));
    }
    let preselection = DensityOperator::new(m, layout)?;

    Ok(EprScenario {
        singlet: singlet.projector(),
        premeasurement,
        preselection,
        measured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{chsh_max, coherence_block_norm, mutual_information, ppt_check};
    use crate::quantum::state::max_abs;
    use crate::quantum::trace_distance;
    use crate::separability::{ree, SolverSettings};

    fn binary_entropy(p: f64) -> f64 {
        [p, 1.0 - p].iter().filter(|&&x| x > 0.0).map(|x| -x * x.ln()).sum()
    }

    fn scenario(a1: f64, d_m: usize, seed: u64) -> MeasurementScenario {
        let a2 = (1.0 - a1 * a1).sqrt();
        MeasurementScenario::new([c(a1), Complex64::new(0.0, a2)], d_m, 8, 1.0, 0.0, seed).unwrap()
    }

    #[test]
    fn scenario_validation() {
        assert!(MeasurementScenario::new([c(1.0), c(0.1)], 2, 2, 1.0, 0.0, 0).is_err());
        assert!(MeasurementScenario::new([c(1.0), c(0.0)], 0, 2, 1.0, 0.0, 0).is_err());
        assert!(MeasurementScenario::new([c(1.0), c(0.0)], 2, 0, 1.0, 0.0, 0).is_err());
        assert!(MeasurementScenario::new([c(1.0), c(0.0)], 2, 2, -1.0, 0.0, 0).is_err());
        assert!(MeasurementScenario::new([c(1.0), c(0.0)], 2, 2, 1.0, f64::NAN, 0).is_err());
        let s = scenario(0.6, 3, 1);
        assert_eq!(s.apparatus_dim(), 6);
        assert_eq!(s.system_apparatus_layout().unwrap().dims(), vec![2, 2, 3]);
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = scenario(0.6, 3, 9).with_stream(4);
        let text = serde_json::to_string(&s).unwrap();
        let back: MeasurementScenario = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn branches_are_orthogonal_sector_states() {
        let s = scenario(0.6, 4, 3);
        let [a1, a2] = apparatus_branches(&s).unwrap();
        assert!(a1.inner(&a2).norm() == 0.0);
        assert!(outside_sector(&a1.projector().into_matrix(), 0, 4) == 0.0);
        assert!(outside_sector(&a2.projector().into_matrix(), 1, 4) == 0.0);
        // Same scenario, same draw.
        assert_eq!(apparatus_branches(&s).unwrap()[0], a1);
    }

    #[test]
    fn unentangled_when_second_amplitude_vanishes() {
        let s = scenario(1.0, 2, 5);
        let pre = build_premeasurement_state(&s).unwrap();
        assert_eq!(coherence_block_norm(&pre.rho, SYSTEM, 0, 1).unwrap().value, 0.0);
        let split = system_split(pre.rho.layout()).unwrap();
        let (v, _) = ree(&pre.rho, &split, &SolverSettings::default()).unwrap();
        assert!(v.value <= 1e-4, "{v:?}");
    }

    #[test]
    fn equal_amplitudes_give_half_coherence() {
        let s = MeasurementScenario::equal_amplitudes(4, 8, 1.0, 2).unwrap();
        let pre = build_premeasurement_state(&s).unwrap();
        let cb = coherence_block_norm(&pre.rho, SYSTEM, 0, 1).unwrap().value;
        assert!((cb - 0.5).abs() < 1e-12, "{cb}");
    }

    #[test]
    fn pure_output_ree_is_the_branch_entropy() {
        for (a1, seed) in [(0.6, 1), (0.9, 2), (std::f64::consts::FRAC_1_SQRT_2, 3)] {
            let s = scenario(a1, 2, seed);
            let pre = build_premeasurement_state(&s).unwrap();
            let split = system_split(pre.rho.layout()).unwrap();
            let (v, _) = ree(&pre.rho, &split, &SolverSettings::with_seed(seed, 0)).unwrap();
            let expect = binary_entropy(a1 * a1);
            assert!((v.value - expect).abs() <= 1e-3, "{} vs {expect}", v.value);
        }
    }

    #[test]
    fn preselection_has_the_decohered_form() {
        let s = scenario(0.6, 3, 4);
        let rho = build_default_preselection(&s).unwrap();
        let rs = rho.partial_trace(&[SYSTEM]).unwrap();
        assert!((rs.matrix()[(0, 0)].re - 0.36).abs() < 1e-15);
        assert!((rs.matrix()[(1, 1)].re - 0.64).abs() < 1e-15);
        assert_eq!(coherence_block_norm(&rho, SYSTEM, 0, 1).unwrap().value, 0.0);
        assert!(ppt_check(&rho, &system_split(rho.layout()).unwrap()).unwrap());
    }

    #[test]
    fn preselection_rejects_states_outside_their_sector() {
        let s = scenario(0.6, 2, 4);
        let m1 = default_pointer_state(2, 1).unwrap();
        let m2 = default_pointer_state(2, 2).unwrap();
        assert!(matches!(build_preselection_state(&s, &m2, &m1), Err(Error::Argument(_))));
        let wide = DensityOperator::maximally_mixed(apparatus_layout(2).unwrap());
        assert!(build_preselection_state(&s, &m1, &wide).is_err());
        let small = DensityOperator::maximally_mixed(apparatus_layout(1).unwrap());
        assert!(build_preselection_state(&s, &small, &m2).is_err());
    }

    #[test]
    fn preselection_is_the_pinch_of_the_premeasurement_state() {
        let s = scenario(0.8, 4, 11);
        let pre = build_premeasurement_state(&s).unwrap();
        let rho_bar = build_preselection_state(&s, &pre.branches[0].projector(), &pre.branches[1].projector()).unwrap();
        let pinch = pre.rho.pinched(SYSTEM).unwrap();
        let diff = max_abs(&(rho_bar.matrix() - pinch.matrix()));
        assert!(diff <= 1e-12, "{diff}");
    }

    #[test]
    fn postselection_reproduces_born_weights() {
        let s = scenario(0.6, 3, 4);
        let rho = build_default_preselection(&s).unwrap();
        let (p1, r1) = postselect(&rho, 1).unwrap();
        let (p2, r2) = postselect(&rho, 2).unwrap();
        assert!((p1 - 0.36).abs() <= 1e-10 && (p2 - 0.64).abs() <= 1e-10);
        assert!((p1 + p2 - 1.0).abs() <= 1e-10);
        let split = system_split(rho.layout()).unwrap();
        for r in [&r1, &r2] {
            assert!((r.trace() - 1.0).abs() < 1e-12);
            assert!(mutual_information(r, &split).unwrap().value <= 1e-4);
            assert!(ree(r, &split, &SolverSettings::default()).unwrap().0.value <= 1e-4);
        }
        assert!(matches!(postselect(&rho, 0), Err(Error::Argument(_))));
        assert!(matches!(postselect(&rho, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn postselection_deterministic_and_degenerate_outcomes() {
        let s = scenario(1.0, 2, 4);
        let rho = build_default_preselection(&s).unwrap();
        let (p, _) = postselect(&rho, 1).unwrap();
        assert_eq!(p, 1.0);
        assert!(matches!(postselect(&rho, 2), Err(Error::DegenerateOutcome(_))));
    }

    #[test]
    fn postselection_refuses_coherent_input() {
        let s = scenario(0.6, 2, 4);
        let pre = build_premeasurement_state(&s).unwrap();
        assert!(matches!(postselect(&pre.rho, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn pointer_superposition_basis_and_norm() {
        let mut alpha = vec![c(0.0); 3];
        alpha[1] = c(1.0);
        let spec = PointerSuperpositionSpec::new(alpha, vec![c(0.0); 3]).unwrap();
        let xi = build_pointer_superposition(&spec).unwrap();
        assert_eq!(xi, StateVector::basis(apparatus_layout(3).unwrap(), 1).unwrap());

        let spec = PointerSuperpositionSpec::random(4, &mut RngStream::new(3, 0)).unwrap();
        let xi = build_pointer_superposition(&spec).unwrap();
        assert!((xi.amplitudes().norm() - 1.0).abs() < 1e-12);

        assert!(PointerSuperpositionSpec::new(vec![c(1.0)], vec![c(1.0)]).is_err());
        assert!(PointerSuperpositionSpec::new(vec![c(1.0)], vec![]).is_err());
    }

    #[test]
    fn pointer_reduced_state_matches_brute_force() {
        let spec = PointerSuperpositionSpec::random(4, &mut RngStream::new(8, 1)).unwrap();
        let xi = build_pointer_superposition(&spec).unwrap();
        let rp = xi.projector().partial_trace(&[POINTER]).unwrap();
        let mut off = c(0.0);
        for u in 0..4 {
            off += spec.alpha[u] * spec.beta[u].conj();
        }
        assert!((rp.matrix()[(0, 1)] - off).norm() < 1e-14);
    }

    #[test]
    fn dephasing_leaves_diagonal_input_alone() {
        let xi = StateVector::basis(apparatus_layout(2).unwrap(), 3).unwrap();
        for n in [1, 7] {
            let r = dephase_pointer_superposition(&xi, n, &mut RngStream::new(1, 0)).unwrap();
            assert_eq!(r, xi.projector());
        }
        assert!(dephase_pointer_superposition(&xi, 0, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn dephasing_converges_to_the_mixture() {
        let mut rng = RngStream::new(21, 0);
        let spec = PointerSuperpositionSpec::random(4, &mut rng).unwrap();
        let xi = build_pointer_superposition(&spec).unwrap();
        let n = 10_000;
        let r = dephase_pointer_superposition(&xi, n, &mut rng).unwrap();
        assert!((r.trace() - 1.0).abs() < 1e-12);
        let target = pointer_mixture(&spec).unwrap();
        let off = max_abs(&(r.matrix() - target.matrix()));
        assert!(off <= 5e-2, "{off}");
        let td = trace_distance(&r, &target).unwrap();
        assert!(td <= 3.0 / (n as f64).sqrt(), "{td}");
    }

    #[test]
    fn epr_preselection_form() {
        for measured in [1, 2] {
            let e = build_epr_scenario(measured, 2, &mut RngStream::new(5, 0)).unwrap();
            let half = c(0.5);
            let d = e.preselection.dim();
            let m = e.preselection.matrix();
            // Branch weights read back from the particle-pair diagonal.
            let pair = e.preselection.partial_trace(&[PARTICLE_1, PARTICLE_2]).unwrap();
            let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0), half, half, c(0.0)]));
            assert!(max_abs(&(pair.matrix() - expect)) <= 1e-12);
            // |+−⟩ pairs with sector 1, |−+⟩ with sector 2, each maximally mixed.
            let da = 4;
            for i in 0..d {
                for j in 0..d {
                    let bi = i / da;
                    let si = (i % da) / 2;
                    let want = if i == j && ((bi == 1 && si == 0) || (bi == 2 && si == 1)) { 0.25 } else { 0.0 };
                    assert!((m[(i, j)] - c(want)).norm() <= 1e-12, "{i} {j}");
                }
            }
            for p in [PARTICLE_1, PARTICLE_2] {
                let r = e.singlet.partial_trace(&[p]).unwrap();
                let diff = max_abs(&(r.matrix() - DMatrix::identity(2, 2).scale(0.5).map(c)));
                assert!(diff <= 1e-15);
            }
            assert!((chsh_max(&e.singlet).unwrap().value - 2.0 * 2f64.sqrt()).abs() <= 1e-9);
            assert!(chsh_max(&pair).unwrap().value <= 2.0 + 1e-9);
            let sys = e.preselection.layout().factor_with_role(Role::System).unwrap();
            assert_eq!(sys.name, if measured == 1 { PARTICLE_1 } else { PARTICLE_2 });
            // Reading out the measured particle leaves the other one anticorrelated.
            let (p, _) = postselect(&e.preselection, 1).unwrap();
            assert!((p - 0.5).abs() <= 1e-12);
            // The decohered state is the pinch of the premeasurement state up to the Mᵢ choice.
            let pinch = e.premeasurement.pinched(&sys.name).unwrap();
            assert_eq!(
                coherence_block_norm(&pinch, &sys.name, 0, 1).unwrap().value,
                0.0
            );
        }
        assert!(build_epr_scenario(3, 2, &mut RngStream::new(5, 0)).is_err());
    }
}
