//! Scalar information measures on density operators.
//!
//! Entropies and relative entropies are in nats. A relative entropy whose
//! first argument leaks out of the second argument's support is reported as a
//! non-finite [`MeasureValue`] rather than an error.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::quantum::layout::Layout;
use crate::quantum::spectral::{eigh_unchecked, support_cutoff};
use crate::quantum::state::{DensityOperator, PSD_TOL};

/// Weight of the first argument outside the second's support above which the
/// relative entropy is declared infinite.
pub const LEAK_TOL: f64 = 1e-8;

/// Two complementary, nonempty groups of factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteSplit {
    pub side_a: Vec<String>,
    pub side_b: Vec<String>,
}

impl BipartiteSplit {
    /// `side_a` as given; side B is every other factor of `layout`, in layout order.
    pub fn new<S: AsRef<str>>(layout: &Layout, side_a: &[S]) -> Result<Self> {
        layout.positions(side_a)?;
        let side_a: Vec<String> = side_a.iter().map(|s| s.as_ref().to_string()).collect();
        let side_b: Vec<String> = layout
            .names()
            .into_iter()
            .filter(|n| !side_a.iter().any(|a| a == n))
            .map(str::to_string)
            .collect();
        let split = Self { side_a, side_b };
        split.validate(layout)?;
        Ok(split)
    }

    /// Split of a two-factor layout into its factors.
    pub fn halves(layout: &Layout) -> Result<Self> {
        if layout.len() != 2 {
            return arg("halves() needs a layout with exactly two factors");
        }
        Self::new(layout, &[layout.names()[0]])
    }

    pub fn validate(&self, layout: &Layout) -> Result<()> {
        if self.side_a.is_empty() || self.side_b.is_empty() {
            return arg("both sides of a bipartite split must be nonempty");
        }
        let mut all: Vec<&str> = self.side_a.iter().chain(&self.side_b).map(String::as_str).collect();
        layout.positions(&all)?;
        all.sort_unstable();
        if all.len() != layout.len() {
            return arg(format!(
                "split {:?} | {:?} does not cover layout {:?}",
                self.side_a,
                self.side_b,
                layout.names()
            ));
        }
        Ok(())
    }

    /// Factor order with side A first.
    pub fn order(&self) -> Vec<&str> {
        self.side_a.iter().chain(&self.side_b).map(String::as_str).collect()
    }

    pub fn dims(&self, layout: &Layout) -> Result<(usize, usize)> {
        let da = layout.positions(&self.side_a)?.iter().map(|&p| layout.factors()[p].dim).product();
        let db = layout.positions(&self.side_b)?.iter().map(|&p| layout.factors()[p].dim).product();
        Ok((da, db))
    }
}

/// A real-valued measure; `finite == false` means +∞ (support violation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    pub value: f64,
    pub finite: bool,
}

impl MeasureValue {
    pub fn finite(value: f64) -> Self {
        Self { value, finite: true }
    }

    pub fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            finite: false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.finite
    }

    /// The value, or `None` when infinite.
    pub fn get(&self) -> Option<f64> {
        self.finite.then_some(self.value)
    }
}

fn same_dims(rho: &DensityOperator, sigma: &DensityOperator) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return arg(format!(
            "dimension mismatch: {} vs {}",
            rho.dim(),
            sigma.dim()
        ));
    }
    Ok(())
}

fn entropy_of(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(0.0_f64, f64::max);
    let cutoff = crate::quantum::spectral::SUPPORT_TOL * max;
    -values.filter(|&l| l > cutoff).map(|l| l * l.ln()).sum::<f64>()
}

pub fn von_neumann_entropy(rho: &DensityOperator) -> MeasureValue {
    let eig = eigh_unchecked(rho.matrix());
    MeasureValue::finite(entropy_of(eig.values.iter().copied()).max(0.0))
}

/// `S(ρ‖σ) = Tr ρ ln ρ − Tr ρ ln σ`.
pub fn quantum_relative_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> Result<MeasureValue> {
    same_dims(rho, sigma)?;
    let er = eigh_unchecked(rho.matrix());
    let es = eigh_unchecked(sigma.matrix());
    let cut = support_cutoff(&es.values);

    // ⟨w_k|ρ|w_k⟩ in σ's eigenbasis.
    let rotated = es.vectors.adjoint() * rho.matrix() * &es.vectors;
    let mut leak = 0.0;
    let mut cross = 0.0;
    for (k, &mu) in es.values.iter().enumerate() {
        let w = rotated[(k, k)].re;
        if mu > cut {
            cross += w * mu.ln();
        } else {
            leak += w;
        }
    }
    if leak > LEAK_TOL {
        return Ok(MeasureValue::infinite());
    }
    let neg_entropy = -entropy_of(er.values.iter().copied());
    let value = neg_entropy - cross;
    debug_assert!(value > -1e-8, "relative entropy {value} is negative");
    Ok(MeasureValue::finite(value.max(0.0)))
}

/// `ρ_A ⊗ ρ_B` arranged in `rho`'s factor order.
pub fn product_of_marginals(rho: &DensityOperator, split: &BipartiteSplit) -> Result<DensityOperator> {
    split.validate(rho.layout())?;
    let ra = rho.partial_trace(&split.side_a)?.permuted(&split.side_a)?;
    let rb = rho.partial_trace(&split.side_b)?.permuted(&split.side_b)?;
    ra.tensor(&rb)?.permuted(&rho.layout().names())
}

/// `S(ρ_A) + S(ρ_B) − S(ρ)`.
pub fn mutual_information(rho: &DensityOperator, split: &BipartiteSplit) -> Result<MeasureValue> {
    split.validate(rho.layout())?;
    let sa = von_neumann_entropy(&rho.partial_trace(&split.side_a)?).value;
    let sb = von_neumann_entropy(&rho.partial_trace(&split.side_b)?).value;
    let s = von_neumann_entropy(rho).value;
    Ok(MeasureValue::finite((sa + sb - s).max(0.0)))
}

/// Transpose over the factors of `side_b`, in place of the layout.
pub fn partial_transpose(rho: &DensityOperator, split: &BipartiteSplit) -> Result<DMatrix<Complex64>> {
    split.validate(rho.layout())?;
    let layout = rho.layout();
    let dims = layout.dims();
    let b_pos = layout.positions(&split.side_b)?;
    let n = rho.dim();
    // Split every flat index into the contribution of B factors and the rest.
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let b_part: Vec<usize> = (0..n)
        .map(|i| {
            let d = layout.digits(i);
            b_pos.iter().map(|&p| d[p] * strides[p]).sum()
        })
        .collect();
    let m = rho.matrix();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let ia = i - b_part[i];
        for j in 0..n {
            let ja = j - b_part[j];
            out[(ia + b_part[j], ja + b_part[i])] = m[(i, j)];
        }
    }
    Ok(out)
}

/// Sum of magnitudes of the negative eigenvalues of the partial transpose.
pub fn negativity(rho: &DensityOperator, split: &BipartiteSplit) -> Result<MeasureValue> {
    let pt = partial_transpose(rho, split)?;
    let eig = eigh_unchecked(&pt);
    let neg: f64 = eig.values.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    // An empty float sum is −0.
    Ok(MeasureValue::finite(neg + 0.0))
}

/// True iff the partial transpose has no eigenvalue below `−1e-10`.
pub fn ppt_check(rho: &DensityOperator, split: &BipartiteSplit) -> Result<bool> {
    let pt = partial_transpose(rho, split)?;
    Ok(eigh_unchecked(&pt).values.min() >= -PSD_TOL)
}

/// Sum of singular values.
pub fn trace_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().sum()
}

/// Trace norm of the block `⟨i|ρ|j⟩` of `system_factor`, acting on the other factors.
pub fn coherence_block_norm(
    rho: &DensityOperator,
    system_factor: &str,
    i: usize,
    j: usize,
) -> Result<MeasureValue> {
    let block = coherence_block(rho, system_factor, i, j)?;
    Ok(MeasureValue::finite(trace_norm(&block)))
}

/// The block `⟨i|ρ|j⟩` over `system_factor`, remaining factors in layout order.
pub fn coherence_block(
    rho: &DensityOperator,
    system_factor: &str,
    i: usize,
    j: usize,
) -> Result<DMatrix<Complex64>> {
    if i == j {
        return arg("coherence block needs two distinct indices");
    }
    let layout = rho.layout();
    let ds = layout.factor(system_factor)?.dim;
    if i >= ds || j >= ds {
        return arg(format!(
            "indices ({i}, {j}) out of range for factor `{system_factor}` of dimension {ds}"
        ));
    }
    let mut order = vec![system_factor];
    order.extend(layout.names().into_iter().filter(|&n| n != system_factor));
    let p = rho.permuted(&order)?;
    let dr = rho.dim() / ds;
    Ok(p.matrix().view((i * dr, j * dr), (dr, dr)).into_owned())
}

fn pauli(k: usize) -> DMatrix<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match k {
        0 => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        1 => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Two-qubit correlation matrix `T_ij = Tr ρ (σ_i ⊗ σ_j)`.
pub fn correlation_matrix(rho: &DensityOperator) -> Result<Matrix3<f64>> {
    if rho.layout().dims() != [2, 2] {
        return arg(format!(
            "CHSH needs exactly two qubit factors (got dims {:?})",
            rho.layout().dims()
        ));
    }
    let mut t = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            let op = pauli(a).kronecker(&pauli(b));
            t[(a, b)] = (rho.matrix() * op).trace().re;
        }
    }
    Ok(t)
}

/// Largest CHSH value over measurement settings: `2·sqrt(t₁ + t₂)` with `t₁ ≥ t₂`
/// the two largest eigenvalues of `TᵀT`.
pub fn chsh_max(rho: &DensityOperator) -> Result<MeasureValue> {
    let t = correlation_matrix(rho)?;
    let m = t.transpose() * t;
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(MeasureValue::finite(2.0 * (ev[0] + ev[1]).max(0.0).sqrt()))
}

/// Relative entropy between two pointer mixtures in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distinguishability {
    pub forward: MeasureValue,
    pub backward: MeasureValue,
    /// `½[S(m1‖m2) + S(m2‖m1)]`, infinite if either direction is.
    pub symmetric: MeasureValue,
}

pub fn pointer_distinguishability(m1: &DensityOperator, m2: &DensityOperator) -> Result<Distinguishability> {
    same_dims(m1, m2)?;
    let forward = quantum_relative_entropy(m1, m2)?;
    let backward = quantum_relative_entropy(m2, m1)?;
    let symmetric = match (forward.get(), backward.get()) {
        (Some(f), Some(b)) => MeasureValue::finite(0.5 * (f + b)),
        _ => MeasureValue::infinite(),
    };
    Ok(Distinguishability {
        forward,
        backward,
        symmetric,
    })
}
