use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::layout::{Layout, MAX_TOTAL_DIM};
use super::matrix_json;
use super::spectral::eigh_unchecked;
use crate::error::{arg, Error, Result};

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

fn capacity(requested: usize) -> Result<()> {
    if requested > MAX_TOTAL_DIM {
        return Err(Error::Capacity {
            requested,
            max: MAX_TOTAL_DIM,
        });
    }
    Ok(())
}

/// Largest entrywise deviation of `m` from its adjoint.
pub fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Pure state on a composite space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector {
    #[serde(with = "matrix_json::vector")]
    amplitudes: DVector<Complex64>,
    layout: Layout,
}

impl StateVector {
    pub fn new(amplitudes: DVector<Complex64>, layout: Layout) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return arg(format!(
                "state has {} amplitudes but layout dimension is {}",
                amplitudes.len(),
                layout.total_dim()
            ));
        }
        let norm = amplitudes.norm();
        if (norm * norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "squared norm {} differs from 1",
                norm * norm
            )));
        }
        Ok(Self { amplitudes, layout })
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: DVector<Complex64>, layout: Layout) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Self::new(amplitudes.unscale(norm), layout)
    }

    pub fn basis(layout: Layout, index: usize) -> Result<Self> {
        let n = layout.total_dim();
        if index >= n {
            return arg(format!("basis index {index} out of range for dimension {n}"));
        }
        let mut v = DVector::zeros(n);
        v[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes: v,
            layout,
        })
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Relabel the factors. Total dimension must match.
    pub fn with_layout(self, layout: Layout) -> Result<Self> {
        Self::new(self.amplitudes, layout)
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        capacity(self.dim().saturating_mul(other.dim()))?;
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
            layout,
        })
    }

    pub fn projector(&self) -> DensityOperator {
        DensityOperator::from_parts(
            &self.amplitudes * self.amplitudes.adjoint(),
            self.layout.clone(),
        )
    }

    /// Reorder the factors; `order` names every factor once.
    pub fn permuted<S: AsRef<str>>(&self, order: &[S]) -> Result<StateVector> {
        let pos = self.layout.full_order(order)?;
        let perm = self.layout.permutation(&pos);
        Ok(Self {
            amplitudes: DVector::from_fn(self.dim(), |i, _| self.amplitudes[perm[i]]),
            layout: self.layout.subset(&pos)?,
        })
    }

    /// Amplitudes as a `(kept) × (rest)` coefficient matrix, kept factors in layout order.
    pub fn coefficient_matrix<S: AsRef<str>>(
        &self,
        keep: &[S],
    ) -> Result<(DMatrix<Complex64>, Layout, Layout)> {
        let mut kept = self.layout.positions(keep)?;
        kept.sort_unstable();
        let rest: Vec<usize> = (0..self.layout.len()).filter(|p| !kept.contains(p)).collect();
        let order: Vec<usize> = kept.iter().chain(rest.iter()).copied().collect();
        let perm = self.layout.permutation(&order);
        let kept_layout = self.layout.subset(&kept)?;
        let dk = kept_layout.total_dim();
        let dr = self.dim() / dk;
        let m = DMatrix::from_fn(dk, dr, |k, r| self.amplitudes[perm[k * dr + r]]);
        let rest_layout = if rest.is_empty() {
            Layout::single("_", 1)?
        } else {
            self.layout.subset(&rest)?
        };
        Ok((m, kept_layout, rest_layout))
    }

    /// Reduced density operator on `keep`, computed directly from the amplitudes.
    pub fn reduced<S: AsRef<str>>(&self, keep: &[S]) -> Result<DensityOperator> {
        let (m, layout, _) = self.coefficient_matrix(keep)?;
        Ok(DensityOperator::from_parts(&m * m.adjoint(), layout))
    }
}

#[derive(Deserialize)]
struct RawDensity {
    #[serde(with = "matrix_json::matrix")]
    matrix: DMatrix<Complex64>,
    layout: Layout,
}

impl TryFrom<RawDensity> for DensityOperator {
    type Error = Error;

    fn try_from(raw: RawDensity) -> Result<Self> {
        DensityOperator::new(raw.matrix, raw.layout)
    }
}

/// Positive semidefinite, unit-trace operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDensity")]
pub struct DensityOperator {
    #[serde(with = "matrix_json::matrix")]
    matrix: DMatrix<Complex64>,
    layout: Layout,
}

impl DensityOperator {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(matrix: DMatrix<Complex64>, layout: Layout) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return arg(format!(
                "matrix is {}x{} but layout dimension is {n}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("matrix has non-finite entries".into()));
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (max deviation {defect:e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let matrix = hermitize(&matrix);
        let min = eigh_unchecked(&matrix).values.min();
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "not positive semidefinite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(Self { matrix, layout })
    }

    /// For operators that are valid by construction; only hermitizes.
    pub(crate) fn from_parts(matrix: DMatrix<Complex64>, layout: Layout) -> Self {
        debug_assert_eq!(matrix.nrows(), layout.total_dim());
        debug_assert!((matrix.trace().re - 1.0).abs() < 1e-8, "trace {}", matrix.trace());
        Self {
            matrix: hermitize(&matrix),
            layout,
        }
    }

    /// Positive matrix with nonzero trace, rescaled to unit trace.
    pub fn from_unnormalized(matrix: DMatrix<Complex64>, layout: Layout) -> Result<Self> {
        let tr = matrix.trace().re;
        if !(tr > 0.0) {
            return Err(Error::InvalidState(format!("trace {tr} is not positive")));
        }
        Self::new(hermitize(&matrix.unscale(tr)), layout)
    }

    pub fn maximally_mixed(layout: Layout) -> Self {
        let n = layout.total_dim();
        Self {
            matrix: DMatrix::identity(n, n).scale(1.0 / n as f64),
            layout,
        }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        psi.projector()
    }

    /// Diagonal state with the given probabilities.
    pub fn diagonal(probabilities: &[f64], layout: Layout) -> Result<Self> {
        let v = DVector::from_iterator(
            probabilities.len(),
            probabilities.iter().map(|&p| Complex64::new(p, 0.0)),
        );
        Self::new(DMatrix::from_diagonal(&v), layout)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn with_layout(self, layout: Layout) -> Result<Self> {
        if layout.total_dim() != self.dim() {
            return arg("relabelled layout must keep the total dimension");
        }
        Ok(Self {
            matrix: self.matrix,
            layout,
        })
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<DensityOperator> {
        capacity(self.dim().saturating_mul(other.dim()))?;
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self {
            matrix: self.matrix.kronecker(&other.matrix),
            layout,
        })
    }

    /// `p·self + (1−p)·other`.
    pub fn mix(&self, other: &DensityOperator, p: f64) -> Result<DensityOperator> {
        if self.layout != other.layout {
            return arg("mixing states on different layouts");
        }
        if !(0.0..=1.0).contains(&p) {
            return arg(format!("mixing weight {p} outside [0, 1]"));
        }
        Ok(Self {
            matrix: self.matrix.scale(p) + other.matrix.scale(1.0 - p),
            layout: self.layout.clone(),
        })
    }

    /// `U ρ U†` for a unitary `U` of matching dimension.
    pub fn conjugated(&self, u: &DMatrix<Complex64>) -> Result<DensityOperator> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return arg("unitary dimension does not match the state");
        }
        Ok(Self::from_parts(u * &self.matrix * u.adjoint(), self.layout.clone()))
    }

    /// Trace out every factor not named in `keep`. Kept factors stay in layout order.
    pub fn partial_trace<S: AsRef<str>>(&self, keep: &[S]) -> Result<DensityOperator> {
        let mut kept = self.layout.positions(keep)?;
        kept.sort_unstable();
        let dims = self.layout.dims();
        let traced: Vec<usize> = (0..dims.len()).filter(|p| !kept.contains(p)).collect();
        let dk: usize = kept.iter().map(|&p| dims[p]).product();
        let dt: usize = traced.iter().map(|&p| dims[p]).product();

        // Flat index -> (kept index, traced index).
        let n = self.dim();
        let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::with_capacity(dk); dt];
        for i in 0..n {
            let digits = self.layout.digits(i);
            let k = kept.iter().fold(0, |acc, &p| acc * dims[p] + digits[p]);
            let t = traced.iter().fold(0, |acc, &p| acc * dims[p] + digits[p]);
            groups[t].push((i, k));
        }
        let mut out = DMatrix::<Complex64>::zeros(dk, dk);
        for g in &groups {
            for &(i, ki) in g {
                for &(j, kj) in g {
                    out[(ki, kj)] += self.matrix[(i, j)];
                }
            }
        }
        let layout = if kept.is_empty() {
            Layout::single("_", 1)?
        } else {
            self.layout.subset(&kept)?
        };
        Ok(Self::from_parts(out, layout))
    }

    /// Reorder the factors; `order` names every factor once.
    pub fn permuted<S: AsRef<str>>(&self, order: &[S]) -> Result<DensityOperator> {
        let pos = self.layout.full_order(order)?;
        let perm = self.layout.permutation(&pos);
        let n = self.dim();
        Ok(Self {
            matrix: DMatrix::from_fn(n, n, |i, j| self.matrix[(perm[i], perm[j])]),
            layout: self.layout.subset(&pos)?,
        })
    }

    /// Block-diagonalize over the basis of `factor`, removing every coherence
    /// between distinct basis states of that factor.
    pub fn pinched(&self, factor: &str) -> Result<DensityOperator> {
        let pos = self.layout.position(factor)?;
        let n = self.dim();
        let digit: Vec<usize> = (0..n).map(|i| self.layout.digits(i)[pos]).collect();
        let m = DMatrix::from_fn(n, n, |i, j| {
            if digit[i] == digit[j] {
                self.matrix[(i, j)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Ok(Self::from_parts(m, self.layout.clone()))
    }
}

/// Hermitian operator (energy units, ħ = 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermitianOperator {
    #[serde(with = "matrix_json::matrix")]
    matrix: DMatrix<Complex64>,
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return arg("Hermitian operator must be square");
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL * max_abs(&matrix).max(1.0) {
            return arg(format!("matrix is not Hermitian (deviation {defect:e})"));
        }
        Ok(Self {
            matrix: hermitize(&matrix),
        })
    }

    pub(crate) fn from_parts(matrix: DMatrix<Complex64>) -> Self {
        Self { matrix }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Operand kinds that support the tensor product.
pub trait TensorProduct: Sized {
    fn tensor_with(&self, other: &Self) -> Result<Self>;
}

impl TensorProduct for StateVector {
    fn tensor_with(&self, other: &Self) -> Result<Self> {
        self.tensor(other)
    }
}

impl TensorProduct for DensityOperator {
    fn tensor_with(&self, other: &Self) -> Result<Self> {
        self.tensor(other)
    }
}

pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> Result<T> {
    a.tensor_with(b)
}

/// `½‖a − b‖₁` for Hermitian `a`, `b`.
pub fn trace_distance(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return arg("trace distance between operators of different dimension");
    }
    let diff = a.matrix() - b.matrix();
    Ok(0.5 * eigh_unchecked(&diff).values.iter().map(|l| l.abs()).sum::<f64>())
}
