//! Closest separable state under relative entropy.
//!
//! The solver minimizes `f(σ) = −Tr ρ ln σ_ε` over mixtures of product pure
//! states, where `σ_ε = (1−ε)σ + ε I/d`. Frank–Wolfe steps (plain, away and
//! pairwise) alternate with an L-BFGS refinement of the atoms themselves; the
//! duality gap from the linear oracle certifies the result. All internal work
//! happens with side A's factors first and results are permuted back to the
//! input's factor order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{arg, Error, Result};
use crate::lbfgs;
use crate::measures::{product_of_marginals, quantum_relative_entropy, BipartiteSplit, MeasureValue};
use crate::quantum::layout::{Layout, Role};
use crate::quantum::random::{haar_random_state, RngStream};
use crate::quantum::spectral::eigh_unchecked;
use crate::quantum::state::{DensityOperator, StateVector};

/// Largest total dimension accepted by default.
pub const DEFAULT_MAX_DIM: usize = 64;
const WEIGHT_TOL: f64 = 1e-10;
const MIN_WEIGHT: f64 = 1e-15;
const SAME_ATOM: f64 = 1e-12;
const TIE_MARGIN: f64 = 1e-9;
/// Frank–Wolfe iterations between local refinements of the whole ensemble.
const POLISH_EVERY: usize = 25;

/// One term `w |x⟩⟨x| ⊗ |y⟩⟨y|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductTerm {
    pub weight: f64,
    pub a: StateVector,
    pub b: StateVector,
}

/// Explicit separable state as a weighted list of product pure states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductEnsemble {
    entries: Vec<ProductTerm>,
    split: BipartiteSplit,
}

impl ProductEnsemble {
    /// Each `a` must be laid out over `split.side_a` (in that order) and each `b` over `split.side_b`.
    pub fn new(entries: Vec<ProductTerm>, split: BipartiteSplit) -> Result<Self> {
        let first = entries.first().ok_or_else(|| Error::Argument("empty product ensemble".into()))?;
        if first.a.layout().names() != split.side_a || first.b.layout().names() != split.side_b {
            return arg(format!(
                "ensemble components must be laid out as {:?} | {:?}",
                split.side_a, split.side_b
            ));
        }
        let (la, lb) = (first.a.layout().clone(), first.b.layout().clone());
        let mut total = 0.0;
        for (k, e) in entries.iter().enumerate() {
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return arg(format!("ensemble weight {k} is {}", e.weight));
            }
            if *e.a.layout() != la || *e.b.layout() != lb {
                return arg(format!("ensemble entry {k} has a different layout"));
            }
            for v in [&e.a, &e.b] {
                if (v.amplitudes().norm() - 1.0).abs() > WEIGHT_TOL {
                    return arg(format!("ensemble entry {k} has a non-unit component"));
                }
            }
            total += e.weight;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return arg(format!("ensemble weights sum to {total}, not 1"));
        }
        Ok(Self { entries, split })
    }

    pub fn entries(&self) -> &[ProductTerm] {
        &self.entries
    }

    pub fn split(&self) -> &BipartiteSplit {
        &self.split
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Side A's factors followed by side B's.
    pub fn layout(&self) -> Result<Layout> {
        let e = &self.entries[0];
        e.a.layout().concat(e.b.layout())
    }
}

/// `Σ wₖ |xₖ yₖ⟩⟨xₖ yₖ|` with side A's factors first.
pub fn assemble_ensemble_state(e: &ProductEnsemble) -> Result<DensityOperator> {
    let layout = e.layout()?;
    let d = layout.total_dim();
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    let mut total = 0.0;
    for t in &e.entries {
        let v = t.a.amplitudes().kronecker(t.b.amplitudes());
        m.ger(Complex64::new(t.weight, 0.0), &v, &v.conjugate(), Complex64::new(1.0, 0.0));
        total += t.weight;
    }
    if (total - 1.0).abs() > WEIGHT_TOL {
        return arg(format!("ensemble weights sum to {total}, not 1"));
    }
    Ok(DensityOperator::from_parts(m, layout))
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Atom budget; `None` means `(d_A d_B)²`.
    pub ensemble_size: Option<usize>,
    pub max_iterations: usize,
    /// Stop once the Frank–Wolfe duality gap (nats) is below this.
    pub gap_tolerance: f64,
    pub inner_restarts: usize,
    /// Weight `ε` of the maximally mixed admixture.
    pub regularization: f64,
    pub max_dim: usize,
    pub rng: RngStream,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            ensemble_size: None,
            max_iterations: 5000,
            gap_tolerance: 1e-6,
            inner_restarts: 8,
            regularization: 1e-9,
            max_dim: DEFAULT_MAX_DIM,
            rng: RngStream::new(0, 0),
        }
    }
}

impl SolverSettings {
    pub fn with_seed(seed: u64, stream: u64) -> Self {
        Self {
            rng: RngStream::new(seed, stream),
            ..Self::default()
        }
    }

    fn validate(&self, d: usize) -> Result<usize> {
        if d > self.max_dim {
            return Err(Error::Capacity {
                requested: d,
                max: self.max_dim,
            });
        }
        if !(self.gap_tolerance > 0.0) {
            return arg("gap tolerance must be positive");
        }
        if !(self.regularization > 0.0 && self.regularization < 1.0) {
            return arg("regularization must lie in (0, 1)");
        }
        let budget = d * d;
        let k = self.ensemble_size.unwrap_or(budget);
        if k < budget {
            return arg(format!("ensemble size {k} is below the rank budget {budget}"));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    /// `σ_ε` in the input's factor order; equals the assembled ensemble.
    pub closest_state: DensityOperator,
    pub ensemble: ProductEnsemble,
    /// `S(ρ‖σ*)` in nats.
    pub ree: MeasureValue,
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `f(σₜ)` for every iterate, starting with the initial point.
    pub objective_history: Vec<f64>,
}

impl SolverReport {
    /// Certified bracket on the true REE: the gap bounds how far the value can sit above the optimum.
    pub fn ree_interval(&self) -> (f64, f64) {
        (
            (self.ree.value - self.duality_gap.max(0.0)).max(0.0),
            self.ree.value,
        )
    }

    /// `S(σ*‖σ*_A ⊗ σ*_B)`.
    pub fn classical_correlation(&self) -> Result<MeasureValue> {
        let prod = product_of_marginals(&self.closest_state, self.ensemble.split())?;
        quantum_relative_entropy(&self.closest_state, &prod)
    }
}

#[derive(Debug, Clone)]
struct Atom {
    w: f64,
    x: DVector<Complex64>,
    y: DVector<Complex64>,
    v: DVector<Complex64>,
}

impl Atom {
    fn new(w: f64, x: DVector<Complex64>, y: DVector<Complex64>) -> Self {
        let v = x.kronecker(&y);
        Self { w, x, y, v }
    }
}

fn mixture(atoms: &[Atom], d: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(d, d);
    for a in atoms {
        m.ger(Complex64::new(a.w, 0.0), &a.v, &a.v.conjugate(), Complex64::new(1.0, 0.0));
    }
    m
}

fn regularize(sigma: &DMatrix<Complex64>, eps: f64) -> DMatrix<Complex64> {
    let d = sigma.nrows();
    let mut s = sigma.scale(1.0 - eps);
    for i in 0..d {
        s[(i, i)] += Complex64::new(eps / d as f64, 0.0);
    }
    s
}

/// `−Tr ρ ln σ_ε`.
fn objective(rho: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>, eps: f64) -> f64 {
    let eig = eigh_unchecked(&regularize(sigma, eps));
    let mut f = 0.0;
    for (k, &l) in eig.values.iter().enumerate() {
        let u = eig.vectors.column(k);
        let w = u.dotc(&(rho * u)).re;
        f -= w * l.max(f64::MIN_POSITIVE).ln();
    }
    f
}

/// `(ln a − ln b)/(a − b)`, with `1/a` on the diagonal.
fn log_divided_difference(a: f64, b: f64) -> f64 {
    if a == b {
        return 1.0 / a;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((hi - lo) / lo).ln_1p() / (hi - lo)
}

/// Derivative of `ln` at `σ_ε` applied to `ρ`. The gradient of `f` is `−(1−ε)` times this.
fn log_derivative(rho: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>, eps: f64) -> DMatrix<Complex64> {
    objective_and_derivative(rho, sigma, eps).1
}

fn objective_and_derivative(rho: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>, eps: f64) -> (f64, DMatrix<Complex64>) {
    let eig = eigh_unchecked(&regularize(sigma, eps));
    let u = &eig.vectors;
    let mut t = u.adjoint() * rho * u;
    let l = eig.values.map(|x| x.max(f64::MIN_POSITIVE));
    let f = -(0..l.len()).map(|k| t[(k, k)].re * l[k].ln()).sum::<f64>();
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            t[(i, j)] *= log_divided_difference(l[i], l[j]);
        }
    }
    (f, u * t * u.adjoint())
}

/// Objective and gradient over unnormalized atom factors `uₖ ⊗ vₖ`, with
/// `σ = Σ |uₖvₖ⟩⟨uₖvₖ| / Σ ‖uₖ‖²‖vₖ‖²`. Parameters are `[re, im]` pairs, all
/// `u` blocks first.
fn factored_objective(rho: &DMatrix<Complex64>, theta: &[f64], k: usize, da: usize, db: usize, eps: f64) -> (f64, Vec<f64>) {
    let z = |i: usize| Complex64::new(theta[2 * i], theta[2 * i + 1]);
    let us: Vec<DVector<Complex64>> = (0..k).map(|a| DVector::from_fn(da, |i, _| z(a * da + i))).collect();
    let vs: Vec<DVector<Complex64>> = (0..k).map(|a| DVector::from_fn(db, |i, _| z(k * da + a * db + i))).collect();
    let zs: Vec<DVector<Complex64>> = us.iter().zip(&vs).map(|(u, v)| u.kronecker(v)).collect();
    let d = da * db;
    let mut big = DMatrix::<Complex64>::zeros(d, d);
    for zk in &zs {
        big.ger(Complex64::new(1.0, 0.0), zk, &zk.conjugate(), Complex64::new(1.0, 0.0));
    }
    let total = big.trace().re;
    if !(total > 0.0) {
        return (f64::INFINITY, vec![0.0; theta.len()]);
    }
    let sigma = big.unscale(total);
    let (f, m) = objective_and_derivative(rho, &sigma, eps);
    let c = (&m * &sigma).trace().re;
    let scale = -2.0 * (1.0 - eps) / total;
    let mut grad = vec![0.0; theta.len()];
    for a in 0..k {
        let mz = &m * &zs[a];
        let nu = us[a].norm_squared();
        let nv = vs[a].norm_squared();
        for i in 0..da {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..db {
                acc += mz[i * db + b] * vs[a][b].conj();
            }
            let gi = (acc - us[a][i] * (c * nv)) * scale;
            let p = a * da + i;
            grad[2 * p] = gi.re;
            grad[2 * p + 1] = gi.im;
        }
        for b in 0..db {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..da {
                acc += mz[i * db + b] * us[a][i].conj();
            }
            let gb = (acc - vs[a][b] * (c * nu)) * scale;
            let p = k * da + a * db + b;
            grad[2 * p] = gb.re;
            grad[2 * p + 1] = gb.im;
        }
    }
    (f, grad)
}

/// Local refinement of all atoms and weights together. Returns the refined
/// atoms when they lower the objective below `f`.
fn polish(rho: &DMatrix<Complex64>, atoms: &[Atom], da: usize, db: usize, eps: f64, f: f64) -> Option<(Vec<Atom>, f64)> {
    let k = atoms.len();
    let mut theta = Vec::with_capacity(2 * k * (da + db));
    for a in atoms {
        for z in a.x.iter().map(|z| z * a.w.sqrt()) {
            theta.extend([z.re, z.im]);
        }
    }
    for a in atoms {
        for z in a.y.iter() {
            theta.extend([z.re, z.im]);
        }
    }
    let out = lbfgs::minimize(|t| factored_objective(rho, t, k, da, db, eps), theta, lbfgs::Options::default());
    if !(out.cost < f) {
        return None;
    }
    let t = &out.x;
    let z = |i: usize| Complex64::new(t[2 * i], t[2 * i + 1]);
    let mut refined = Vec::with_capacity(k);
    for a in 0..k {
        let u = DVector::from_fn(da, |i, _| z(a * da + i));
        let v = DVector::from_fn(db, |i, _| z(k * da + a * db + i));
        let (nu, nv) = (u.norm(), v.norm());
        if nu > 0.0 && nv > 0.0 {
            refined.push(Atom::new((nu * nv).powi(2), u.unscale(nu), v.unscale(nv)));
        }
    }
    prune(&mut refined);
    Some((refined, out.cost))
}

fn quad(m: &DMatrix<Complex64>, v: &DVector<Complex64>) -> f64 {
    v.dotc(&(m * v)).re
}

fn top_eigenvector(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    let eig = eigh_unchecked(m);
    eig.vectors.column(m.nrows() - 1).into_owned()
}

/// `(I ⊗ ⟨y|) M (I ⊗ |y⟩)`.
fn contract_b(m: &DMatrix<Complex64>, y: &DVector<Complex64>, da: usize, db: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(da, da, |a, a2| {
        let mut s = Complex64::new(0.0, 0.0);
        for b in 0..db {
            let yb = y[b].conj();
            if yb == Complex64::new(0.0, 0.0) {
                continue;
            }
            for b2 in 0..db {
                s += yb * m[(a * db + b, a2 * db + b2)] * y[b2];
            }
        }
        s
    })
}

/// `(⟨x| ⊗ I) M (|x⟩ ⊗ I)`.
fn contract_a(m: &DMatrix<Complex64>, x: &DVector<Complex64>, da: usize, db: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(db, db, |b, b2| {
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..da {
            let xa = x[a].conj();
            if xa == Complex64::new(0.0, 0.0) {
                continue;
            }
            for a2 in 0..da {
                s += xa * m[(a * db + b, a2 * db + b2)] * x[a2];
            }
        }
        s
    })
}

/// Alternating maximization of `⟨xy|M|xy⟩` from a given `y`.
fn ascend(m: &DMatrix<Complex64>, mut y: DVector<Complex64>, da: usize, db: usize) -> (f64, DVector<Complex64>, DVector<Complex64>) {
    let mut x = top_eigenvector(&contract_b(m, &y, da, db));
    let mut best = f64::NEG_INFINITY;
    for _ in 0..200 {
        y = top_eigenvector(&contract_a(m, &x, da, db));
        x = top_eigenvector(&contract_b(m, &y, da, db));
        let val = quad(m, &x.kronecker(&y));
        if val <= best + 1e-13 * val.abs().max(1.0) {
            best = best.max(val);
            break;
        }
        best = val;
    }
    (best, x, y)
}

/// Best product state for the linear subproblem.
fn linear_oracle(
    m: &DMatrix<Complex64>,
    da: usize,
    db: usize,
    hint: Option<&Atom>,
    restarts: usize,
    rng: &mut RngStream,
) -> (f64, DVector<Complex64>, DVector<Complex64>) {
    let mut starts = Vec::with_capacity(restarts + 2);
    // Schmidt pair of the top eigenvector.
    let top = top_eigenvector(m);
    let c = DMatrix::from_fn(da, db, |a, b| top[a * db + b]);
    let svd = c.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let k = svd.singular_values.imax();
    starts.push(vt.row(k).transpose());
    if let Some(h) = hint {
        starts.push(h.y.clone());
    }
    for _ in 0..restarts {
        starts.push(haar_random_state(db, rng).expect("db >= 1").amplitudes().clone());
    }
    // Random starts must beat the deterministic ones by a clear margin, so ties
    // among degenerate maximizers resolve the same way for every seed.
    let deterministic = starts.len() - restarts;
    let mut best = (f64::NEG_INFINITY, DVector::zeros(da), DVector::zeros(db));
    for (k, y) in starts.into_iter().enumerate() {
        let cand = ascend(m, y, da, db);
        let margin = if k < deterministic { 0.0 } else { TIE_MARGIN * cand.0.abs().max(1.0) };
        if cand.0 > best.0 + margin {
            best = cand;
        }
    }
    best
}

/// Minimize `h` on `[0, hi]` by golden-section search, returning the best point seen
/// (endpoints included).
fn golden_section(h: impl Fn(f64) -> f64, hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    for _ in 0..200 {
        if (b - a) <= 1e-12 * hi.max(1e-300) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = h(d);
        }
    }
    let mut best = if fc < fd { (c, fc) } else { (d, fd) };
    let fh = h(hi);
    if fh < best.1 {
        best = (hi, fh);
    }
    best
}

/// Drop atoms by shifting weight along a null combination until at most `target` remain.
fn caratheodory(atoms: &mut Vec<Atom>, target: usize) {
    while atoms.len() > target {
        let n = atoms.len();
        // Gram matrix of the projectors: ⟨Pⱼ, Pₖ⟩ = |⟨vⱼ|vₖ⟩|².
        let gram = DMatrix::<f64>::from_fn(n, n, |j, k| atoms[j].v.dotc(&atoms[k].v).norm_sqr());
        let eig = gram.symmetric_eigen();
        let kmin = eig.eigenvalues.imin();
        let c = eig.eigenvectors.column(kmin).into_owned();
        let c = if c.sum() < 0.0 { -c } else { c };
        let mut t = f64::INFINITY;
        let mut drop = None;
        for (k, a) in atoms.iter().enumerate() {
            if c[k] > 1e-14 && a.w / c[k] < t {
                t = a.w / c[k];
                drop = Some(k);
            }
        }
        let Some(drop) = drop else { break };
        for (k, a) in atoms.iter_mut().enumerate() {
            a.w = (a.w - t * c[k]).max(0.0);
        }
        atoms.remove(drop);
        prune(atoms);
    }
}

fn prune(atoms: &mut Vec<Atom>) {
    atoms.retain(|a| a.w > MIN_WEIGHT);
    let total: f64 = atoms.iter().map(|a| a.w).sum();
    for a in atoms.iter_mut() {
        a.w /= total;
    }
}

fn add_atom(atoms: &mut Vec<Atom>, atom: Atom) {
    if let Some(existing) = atoms
        .iter_mut()
        .find(|a| a.v.dotc(&atom.v).norm_sqr() > 1.0 - SAME_ATOM)
    {
        existing.w += atom.w;
    } else {
        atoms.push(atom);
    }
}

fn basis(dim: usize, k: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(dim);
    v[k] = Complex64::new(1.0, 0.0);
    v
}

/// Pinched state over the system factor as product atoms, when the system
/// factor alone forms one side of the split.
fn pinch_atoms(rho: &DMatrix<Complex64>, layout: &Layout, split: &BipartiteSplit, da: usize, db: usize) -> Option<Vec<Atom>> {
    let sys = &layout.factor_with_role(Role::System)?.name;
    let system_first = if split.side_a == [sys.clone()] {
        true
    } else if split.side_b == [sys.clone()] {
        false
    } else {
        return None;
    };
    let mut atoms = Vec::new();
    let (ds, dr) = if system_first { (da, db) } else { (db, da) };
    for i in 0..ds {
        let block = DMatrix::from_fn(dr, dr, |r, r2| {
            if system_first {
                rho[(i * db + r, i * db + r2)]
            } else {
                rho[(r * db + i, r2 * db + i)]
            }
        });
        let eig = eigh_unchecked(&block);
        for (k, &l) in eig.values.iter().enumerate() {
            if l > 1e-14 {
                let other = eig.vectors.column(k).into_owned();
                let e = basis(ds, i);
                atoms.push(if system_first {
                    Atom::new(l, e, other)
                } else {
                    Atom::new(l, other, e)
                });
            }
        }
    }
    prune(&mut atoms);
    (!atoms.is_empty()).then_some(atoms)
}

fn maximally_mixed_atoms(da: usize, db: usize) -> Vec<Atom> {
    let w = 1.0 / (da * db) as f64;
    let mut atoms = Vec::with_capacity(da * db);
    for a in 0..da {
        for b in 0..db {
            atoms.push(Atom::new(w, basis(da, a), basis(db, b)));
        }
    }
    atoms
}

#[derive(Clone, Copy)]
enum Direction {
    Toward,
    Away(usize),
    /// Shift weight from the given atom to the new vertex.
    Pairwise(usize),
}

/// Frank–Wolfe search for the separable state closest to `rho` in relative entropy.
pub fn closest_separable(rho: &DensityOperator, split: &BipartiteSplit, settings: &SolverSettings) -> Result<SolverReport> {
    split.validate(rho.layout())?;
    let d = rho.dim();
    let k_max = settings.validate(d)?;
    let (da, db) = split.dims(rho.layout())?;
    let eps = settings.regularization;
    let mut rng = settings.rng.clone();

    let ordered = rho.permuted(&split.order())?;
    let r = ordered.matrix();
    let mut atoms = pinch_atoms(r, ordered.layout(), split, da, db).unwrap_or_else(|| maximally_mixed_atoms(da, db));
    let mut sigma = mixture(&atoms, d);
    let mut f = objective(r, &sigma, eps);
    let mut history = vec![f];
    let mut gap;
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let m = log_derivative(r, &sigma, eps);
        let values: Vec<f64> = atoms.iter().map(|a| quad(&m, &a.v)).collect();
        let best_atom = (0..atoms.len()).max_by(|&i, &j| values[i].total_cmp(&values[j]));
        let (top, x, y) = linear_oracle(&m, da, db, best_atom.map(|k| &atoms[k]), settings.inner_restarts, &mut rng);
        let tr_sigma_m = (&sigma * &m).trace().re;
        gap = (1.0 - eps) * (top - tr_sigma_m);
        if gap <= settings.gap_tolerance {
            converged = true;
            break;
        }
        if iterations >= settings.max_iterations {
            break;
        }

        let vertex = Atom::new(0.0, x, y);
        let (away_idx, away_val) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, kv| if kv.1 < acc.1 { kv } else { acc });
        let fw_gain = top - tr_sigma_m;
        let away_gain = tr_sigma_m - away_val;
        let mut candidates = vec![Direction::Pairwise(away_idx), Direction::Toward];
        if away_gain > fw_gain {
            candidates.push(Direction::Away(away_idx));
        }

        let s_proj = &vertex.v * vertex.v.adjoint();
        let mut best_step: Option<(Direction, f64, f64)> = None;
        for dir in candidates {
            let (delta, hi) = match dir {
                Direction::Toward => (&s_proj - &sigma, 1.0),
                Direction::Away(k) => {
                    let w = atoms[k].w;
                    if w >= 1.0 {
                        continue;
                    }
                    (&sigma - &atoms[k].v * atoms[k].v.adjoint(), w / (1.0 - w))
                }
                Direction::Pairwise(k) => (&s_proj - &atoms[k].v * atoms[k].v.adjoint(), atoms[k].w),
            };
            let h = |g: f64| objective(r, &(&sigma + delta.scale(g)), eps);
            let (g, fg) = golden_section(h, hi);
            if fg < f && g > 0.0 && best_step.as_ref().is_none_or(|b| fg < b.2) {
                best_step = Some((dir, g, fg));
            }
        }
        let stepped = best_step.is_some();
        if let Some((dir, g, _)) = best_step {
            match dir {
                Direction::Toward => {
                    for a in atoms.iter_mut() {
                        a.w *= 1.0 - g;
                    }
                    add_atom(&mut atoms, Atom { w: g, ..vertex.clone() });
                }
                Direction::Away(k) => {
                    let hi = atoms[k].w / (1.0 - atoms[k].w);
                    for a in atoms.iter_mut() {
                        a.w *= 1.0 + g;
                    }
                    atoms[k].w = if g >= hi { 0.0 } else { atoms[k].w - g };
                }
                Direction::Pairwise(k) => {
                    atoms[k].w = if g >= atoms[k].w { 0.0 } else { atoms[k].w - g };
                    add_atom(&mut atoms, Atom { w: g, ..vertex.clone() });
                }
            }
            prune(&mut atoms);
            if atoms.len() > k_max {
                caratheodory(&mut atoms, k_max);
            }
            sigma = mixture(&atoms, d);
            // Recomputed rather than reusing the line-search value so the history matches the stored iterate.
            let f_new = objective(r, &sigma, eps);
            f = f_new.min(f);
            history.push(f_new);
        }
        iterations += 1;
        if !stepped || iterations % POLISH_EVERY == 0 {
            if let Some((refined, _)) = polish(r, &atoms, da, db, eps, f) {
                let candidate = mixture(&refined, d);
                let f_new = objective(r, &candidate, eps);
                if f_new < f {
                    atoms = refined;
                    sigma = candidate;
                    f = f_new;
                    history.push(f_new);
                    continue;
                }
            }
        }
        if !stepped {
            break;
        }
    }

    // Report σ_ε itself: fold the maximally mixed admixture into the ensemble.
    for a in atoms.iter_mut() {
        a.w *= 1.0 - eps;
    }
    for mut extra in maximally_mixed_atoms(da, db) {
        extra.w *= eps;
        add_atom(&mut atoms, extra);
    }
    prune(&mut atoms);
    if atoms.len() > k_max {
        caratheodory(&mut atoms, k_max);
    }

    let ordered_layout = ordered.layout().clone();
    let la = ordered_layout.subset(&(0..split.side_a.len()).collect::<Vec<_>>())?;
    let lb = ordered_layout.subset(&(split.side_a.len()..ordered_layout.len()).collect::<Vec<_>>())?;
    let mut entries = Vec::with_capacity(atoms.len());
    for a in &atoms {
        entries.push(ProductTerm {
            weight: a.w,
            a: StateVector::normalized(a.x.clone(), la.clone())?,
            b: StateVector::normalized(a.y.clone(), lb.clone())?,
        });
    }
    let ensemble = ProductEnsemble::new(entries, split.clone())?;
    let closest_state = assemble_ensemble_state(&ensemble)?.permuted(&rho.layout().names())?;
    let ree = quantum_relative_entropy(rho, &closest_state)?;
    Ok(SolverReport {
        closest_state,
        ensemble,
        ree,
        duality_gap: gap,
        iterations,
        converged,
        objective_history: history,
    })
}

/// REE value together with the duality gap of the solve.
pub fn ree(rho: &DensityOperator, split: &BipartiteSplit, settings: &SolverSettings) -> Result<(MeasureValue, f64)> {
    let report = closest_separable(rho, split, settings)?;
    Ok((report.ree, report.duality_gap))
}

pub fn classical_correlation(rho: &DensityOperator, split: &BipartiteSplit, settings: &SolverSettings) -> Result<MeasureValue> {
    closest_separable(rho, split, settings)?.classical_correlation()
}

/// Closed form for pure inputs: the Schmidt-diagonal mixture and the entanglement entropy.
pub fn pure_state_oracle(psi: &StateVector, split: &BipartiteSplit) -> Result<(DensityOperator, MeasureValue)> {
    split.validate(psi.layout())?;
    let ordered = psi.permuted(&split.order())?;
    let (c, la, lb) = ordered.coefficient_matrix(&split.side_a)?;
    let svd = c.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let d = psi.dim();
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    let mut entropy = 0.0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let p = s * s;
        if p <= 0.0 {
            continue;
        }
        entropy -= p * p.ln();
        let v = u.column(k).kronecker(&vt.row(k).transpose());
        m.ger(Complex64::new(p, 0.0), &v, &v.conjugate(), Complex64::new(1.0, 0.0));
    }
    let closest = DensityOperator::from_parts(m, la.concat(&lb)?).permuted(&psi.layout().names())?;
    Ok((closest, MeasureValue::finite(entropy.max(0.0))))
}

/// [`pure_state_oracle`] for a density operator that must be pure.
pub fn pure_state_oracle_density(rho: &DensityOperator, split: &BipartiteSplit) -> Result<(DensityOperator, MeasureValue)> {
    let purity = rho.purity();
    if purity < 1.0 - 1e-10 {
        return arg(format!("oracle needs a pure state (purity {purity})"));
    }
    let v = top_eigenvector(rho.matrix());
    pure_state_oracle(&StateVector::normalized(v, rho.layout().clone())?, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ppt_check;
    use crate::quantum::random::random_density;
    use crate::quantum::state::trace_distance;
    use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn pair() -> Layout {
        Layout::qubit_pair("a", "b").unwrap()
    }

    fn split() -> BipartiteSplit {
        BipartiteSplit::halves(&pair()).unwrap()
    }

    fn qubit(amps: [f64; 2], name: &str) -> StateVector {
        StateVector::normalized(DVector::from_vec(vec![c(amps[0]), c(amps[1])]), Layout::single(name, 2).unwrap()).unwrap()
    }

    fn two_qubit(amps: [f64; 4]) -> StateVector {
        StateVector::normalized(DVector::from_iterator(4, amps.iter().map(|&x| c(x))), pair()).unwrap()
    }

    fn bell() -> StateVector {
        two_qubit([FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2])
    }

    fn classical_pair() -> DensityOperator {
        DensityOperator::diagonal(&[0.5, 0.0, 0.0, 0.5], pair()).unwrap()
    }

    fn random_ensemble(n: usize, da: usize, db: usize, rng: &mut RngStream) -> ProductEnsemble {
        let layout = Layout::from_dims(&[("a", da), ("b", db)]).unwrap();
        let split = BipartiteSplit::halves(&layout).unwrap();
        let raw: Vec<f64> = (0..n).map(|_| rng.next_u32() as f64 + 1.0).collect();
        let total: f64 = raw.iter().sum();
        let entries = raw
            .iter()
            .map(|w| ProductTerm {
                weight: w / total,
                a: haar_random_state(da, rng).unwrap().with_layout(Layout::single("a", da).unwrap()).unwrap(),
                b: haar_random_state(db, rng).unwrap().with_layout(Layout::single("b", db).unwrap()).unwrap(),
            })
            .collect();
        ProductEnsemble::new(entries, split).unwrap()
    }

    use rand::RngCore;

    fn assert_history_non_increasing(r: &SolverReport) {
        for w in r.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_term_ensemble() {
        let e = ProductEnsemble::new(
            vec![ProductTerm {
                weight: 1.0,
                a: qubit([1.0, 0.0], "a"),
                b: qubit([0.0, 1.0], "b"),
            }],
            split(),
        )
        .unwrap();
        let rho = assemble_ensemble_state(&e).unwrap();
        let expected = DensityOperator::diagonal(&[0.0, 1.0, 0.0, 0.0], pair()).unwrap();
        assert!(trace_distance(&rho, &expected).unwrap() < 1e-15);
    }

    #[test]
    fn two_term_ensemble() {
        let term = |k: usize| {
            let amps = if k == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            ProductTerm {
                weight: 0.5,
                a: qubit(amps, "a"),
                b: qubit(amps, "b"),
            }
        };
        let e = ProductEnsemble::new(vec![term(0), term(1)], split()).unwrap();
        let rho = assemble_ensemble_state(&e).unwrap();
        assert!(trace_distance(&rho, &classical_pair()).unwrap() < 1e-15);
    }

    #[test]
    fn ensemble_validation() {
        let t = |w: f64| ProductTerm {
            weight: w,
            a: qubit([1.0, 0.0], "a"),
            b: qubit([1.0, 0.0], "b"),
        };
        assert!(ProductEnsemble::new(vec![t(0.7)], split()).is_err());
        assert!(ProductEnsemble::new(vec![t(1.5), t(-0.5)], split()).is_err());
        assert!(ProductEnsemble::new(vec![], split()).is_err());
        let swapped = BipartiteSplit {
            side_a: vec!["b".into()],
            side_b: vec!["a".into()],
        };
        assert!(ProductEnsemble::new(vec![t(1.0)], swapped).is_err());
    }

    #[test]
    fn random_ensembles_are_ppt() {
        let mut rng = RngStream::new(11, 0);
        for k in 0..200 {
            let (da, db) = if k % 2 == 0 { (2, 2) } else { (2, 3) };
            let e = random_ensemble(1 + k % 7, da, db, &mut rng);
            let rho = assemble_ensemble_state(&e).unwrap();
            assert!(ppt_check(&rho, e.split()).unwrap());
        }
    }

    #[test]
    fn bell_pair_closest_state() {
        let settings = SolverSettings {
            gap_tolerance: 1e-4,
            ..SolverSettings::with_seed(1, 0)
        };
        let r = closest_separable(&bell().projector(), &split(), &settings).unwrap();
        assert!(r.converged);
        assert!(trace_distance(&r.closest_state, &classical_pair()).unwrap() < 1e-2);
        assert!((r.ree.value - LN_2).abs() < 1e-3);
        assert!(ppt_check(&r.closest_state, &split()).unwrap());
        assert_history_non_increasing(&r);
    }

    #[test]
    fn separable_input_has_zero_ree() {
        let mut rng = RngStream::new(12, 0);
        for k in 0..5 {
            let e = random_ensemble(3, 2, 3, &mut rng);
            let rho = assemble_ensemble_state(&e).unwrap();
            let r = closest_separable(&rho, e.split(), &SolverSettings::with_seed(2, k)).unwrap();
            assert!(r.ree.value <= 1e-4, "ree {}", r.ree.value);
            assert!(r.duality_gap >= -1e-9);
            assert_history_non_increasing(&r);
        }
    }

    /// `Σ pᵢ |i⟩⟨i| ⊗ Mᵢ` with the system factor tagged.
    fn classical_quantum(p: &[f64], ms: &[DensityOperator]) -> DensityOperator {
        let ds = p.len();
        let dm = ms[0].dim();
        let layout = Layout::from_dims(&[("s", ds), ("m", dm)]).unwrap().with_role("s", Role::System).unwrap();
        let mut out = DMatrix::zeros(ds * dm, ds * dm);
        for i in 0..ds {
            out.view_mut((i * dm, i * dm), (dm, dm)).copy_from(&ms[i].matrix().scale(p[i]));
        }
        DensityOperator::new(out, layout).unwrap()
    }

    #[test]
    fn classical_quantum_input_is_its_own_closest_state() {
        let mut rng = RngStream::new(13, 0);
        let ms: Vec<_> = (0..2).map(|_| random_density(Layout::single("m", 3).unwrap(), &mut rng)).collect();
        let rho = classical_quantum(&[0.3, 0.7], &ms);
        let s = BipartiteSplit::new(rho.layout(), &["s"]).unwrap();
        let r = closest_separable(&rho, &s, &SolverSettings::default()).unwrap();
        assert!(trace_distance(&r.closest_state, &rho).unwrap() < 1e-3);
        assert!(r.ree.value <= 1e-4);
        // The tagged system factor on side B is handled the same way.
        let s = BipartiteSplit::new(rho.layout(), &["m"]).unwrap();
        let r = closest_separable(&rho, &s, &SolverSettings::default()).unwrap();
        assert!(r.ree.value <= 1e-4);
    }

    #[test]
    fn unequal_schmidt_weights() {
        let (a, b) = (0.8f64, 0.2f64);
        let psi = two_qubit([a.sqrt(), 0.0, 0.0, b.sqrt()]);
        let expected = -(a * a.ln() + b * b.ln());
        assert!((expected - 0.5004).abs() < 1e-4);
        let (v, gap) = ree(&psi.projector(), &split(), &SolverSettings::default()).unwrap();
        assert!((v.value - expected).abs() < 1e-3);
        assert!(gap < 1e-5);
    }

    #[test]
    fn product_state_is_unentangled_and_uncorrelated() {
        let psi = qubit([0.6, 0.8], "a").tensor(&qubit([1.0, 1.0], "b")).unwrap();
        let (v, _) = ree(&psi.projector(), &split(), &SolverSettings::default()).unwrap();
        assert!(v.value <= 1e-4);
        let cc = classical_correlation(&psi.projector(), &split(), &SolverSettings::default()).unwrap();
        assert!(cc.value.abs() <= 1e-4);
    }

    #[test]
    fn classical_correlation_examples() {
        let cc = classical_correlation(&bell().projector(), &split(), &SolverSettings::default()).unwrap();
        assert!((cc.value - LN_2).abs() < 1e-2);
        let ms = [
            DensityOperator::diagonal(&[1.0, 0.0], Layout::single("m", 2).unwrap()).unwrap(),
            DensityOperator::diagonal(&[0.0, 1.0], Layout::single("m", 2).unwrap()).unwrap(),
        ];
        let rho = classical_quantum(&[0.5, 0.5], &ms);
        let s = BipartiteSplit::halves(rho.layout()).unwrap();
        let cc = classical_correlation(&rho, &s, &SolverSettings::default()).unwrap();
        assert!((cc.value - LN_2).abs() < 1e-3);
    }

    #[test]
    fn oracle_examples() {
        let (closest, v) = pure_state_oracle(&bell(), &split()).unwrap();
        assert!((v.value - LN_2).abs() < 1e-14);
        assert!(trace_distance(&closest, &classical_pair()).unwrap() < 1e-14);

        let prod = qubit([0.6, 0.8], "a").tensor(&qubit([1.0, -1.0], "b")).unwrap();
        let (closest, v) = pure_state_oracle(&prod, &split()).unwrap();
        assert!(v.value.abs() < 1e-14);
        assert!(trace_distance(&closest, &prod.projector()).unwrap() < 1e-14);

        let (closest, _) = pure_state_oracle_density(&bell().projector(), &split()).unwrap();
        assert!(trace_distance(&closest, &classical_pair()).unwrap() < 1e-12);
        assert!(pure_state_oracle_density(&classical_pair(), &split()).is_err());
    }

    #[test]
    fn oracle_respects_factor_order() {
        // Side A listed second in the layout.
        let mut rng = RngStream::new(14, 0);
        let layout = Layout::from_dims(&[("b", 3), ("a", 2)]).unwrap();
        let psi = haar_random_state(6, &mut rng).unwrap().with_layout(layout.clone()).unwrap();
        let s = BipartiteSplit::new(&layout, &["a"]).unwrap();
        let (closest, v) = pure_state_oracle(&psi, &s).unwrap();
        assert_eq!(closest.layout(), &layout);
        let r = closest_separable(&psi.projector(), &s, &SolverSettings::default()).unwrap();
        assert!((r.ree.value - v.value).abs() < 2e-3);
        assert!(trace_distance(&r.closest_state, &closest).unwrap() < 2e-2);
    }

    #[test]
    fn capacity_and_settings_errors() {
        let big = DensityOperator::maximally_mixed(Layout::from_dims(&[("a", 8), ("b", 9)]).unwrap());
        let s = BipartiteSplit::halves(big.layout()).unwrap();
        assert!(matches!(
            closest_separable(&big, &s, &SolverSettings::default()),
            Err(Error::Capacity { requested: 72, max: 64 })
        ));
        let rho = bell().projector();
        let small = SolverSettings {
            ensemble_size: Some(3),
            ..SolverSettings::default()
        };
        assert!(closest_separable(&rho, &split(), &small).is_err());
        let bad = SolverSettings {
            gap_tolerance: 0.0,
            ..SolverSettings::default()
        };
        assert!(closest_separable(&rho, &split(), &bad).is_err());
    }

    #[test]
    fn budget_exhaustion_returns_best_iterate() {
        let mut rng = RngStream::new(15, 0);
        let rho = random_density(Layout::from_dims(&[("a", 2), ("b", 3)]).unwrap(), &mut rng);
        let s = BipartiteSplit::halves(rho.layout()).unwrap();
        let settings = SolverSettings {
            max_iterations: 1,
            gap_tolerance: 1e-12,
            ..SolverSettings::default()
        };
        let r = closest_separable(&rho, &s, &settings).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.duality_gap > 1e-12);
        assert!(ppt_check(&r.closest_state, &s).unwrap());
        assert_history_non_increasing(&r);
    }

    #[test]
    fn report_serializes() {
        let r = closest_separable(&bell().projector(), &split(), &SolverSettings::default()).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["ree"]["value"].as_f64().unwrap() > 0.69);
        assert!(json["ensemble"]["entries"].as_array().unwrap().len() == r.ensemble.len());
        let (lo, hi) = r.ree_interval();
        assert!(lo <= hi && hi == r.ree.value);
    }
}
