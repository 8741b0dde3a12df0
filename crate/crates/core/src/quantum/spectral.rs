//! Hermitian eigendecomposition, spectral matrix functions and exact propagation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::state::{
    hermiticity_defect, hermitize, max_abs, DensityOperator, HermitianOperator, StateVector,
    HERMITIAN_TOL,
};
use crate::error::{arg, Error, Result};

/// Eigenvalues below this fraction of the largest one are treated as exact zeros by `log`.
pub const SUPPORT_TOL: f64 = 1e-12;
/// Eigenvalues more negative than this make `log` a domain error.
pub const NEGATIVE_TOL: f64 = 1e-10;

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
///
/// Ordering inside degenerate eigenspaces is whatever the decomposition
/// routine returns and is not part of the contract.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl Eigh {
    /// `V f(Λ) V†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<Complex64> {
        self.map_complex(|l| Complex64::new(f(l), 0.0))
    }

    pub fn map_complex(&self, f: impl Fn(f64) -> Complex64) -> DMatrix<Complex64> {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let fl = f(l);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= fl;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Anything that exposes a Hermitian matrix.
pub trait Hermitian {
    fn hermitian_matrix(&self) -> &DMatrix<Complex64>;
}

impl Hermitian for HermitianOperator {
    fn hermitian_matrix(&self) -> &DMatrix<Complex64> {
        self.matrix()
    }
}

impl Hermitian for DensityOperator {
    fn hermitian_matrix(&self) -> &DMatrix<Complex64> {
        self.matrix()
    }
}

impl Hermitian for DMatrix<Complex64> {
    fn hermitian_matrix(&self) -> &DMatrix<Complex64> {
        self
    }
}

/// Decomposition without the hermiticity check; the input is symmetrized first.
pub(crate) fn eigh_unchecked(m: &DMatrix<Complex64>) -> Eigh {
    let n = m.nrows();
    if n == 0 {
        return Eigh {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Eigh { values, vectors }
}

pub fn hermitian_eig<H: Hermitian + ?Sized>(h: &H) -> Result<Eigh> {
    let m = h.hermitian_matrix();
    if m.nrows() != m.ncols() {
        return arg("eigendecomposition needs a square matrix");
    }
    let defect = hermiticity_defect(m);
    if defect > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return arg(format!("matrix is not Hermitian (deviation {defect:e})"));
    }
    Ok(eigh_unchecked(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFunction {
    /// Natural log on the support; eigenvalues below the support tolerance map to 0.
    Log,
    Exp,
}

pub fn matrix_function_hermitian<H: Hermitian + ?Sized>(
    h: &H,
    f: MatrixFunction,
) -> Result<DMatrix<Complex64>> {
    let eig = hermitian_eig(h)?;
    match f {
        MatrixFunction::Exp => Ok(eig.map(f64::exp)),
        MatrixFunction::Log => {
            let min = eig.values.min();
            if min < -NEGATIVE_TOL {
                return Err(Error::Domain(format!(
                    "log of an operator with eigenvalue {min:e}"
                )));
            }
            let cutoff = support_cutoff(&eig.values);
            Ok(eig.map(|l| if l > cutoff { l.ln() } else { 0.0 }))
        }
    }
}

/// Eigenvalues at or below the returned value lie outside the support.
pub fn support_cutoff(values: &DVector<f64>) -> f64 {
    SUPPORT_TOL * values.max().max(0.0)
}

/// `exp(−iHt)` for many `t` from one eigendecomposition of `H`.
#[derive(Debug, Clone)]
pub struct Propagator {
    eig: Eigh,
}

impl Propagator {
    pub fn new(h: &HermitianOperator) -> Result<Self> {
        Ok(Self {
            eig: hermitian_eig(h)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.eig.dim()
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.eig.values
    }

    /// Evolve the columns of `states` (each a vector in the propagator's space).
    pub fn evolve_columns(&self, states: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
        self.from_eigenbasis(&self.to_eigenbasis(states), t)
    }

    /// Expansion coefficients of the columns of `states` in the energy eigenbasis.
    pub fn to_eigenbasis(&self, states: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        self.eig.vectors.adjoint() * states
    }

    /// Evolve eigenbasis coefficients by `t` and map back to the original basis.
    pub fn from_eigenbasis(&self, coeffs: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
        let mut coeffs = coeffs.clone();
        for (k, &e) in self.eig.values.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -e * t);
            for z in coeffs.row_mut(k).iter_mut() {
                *z *= phase;
            }
        }
        &self.eig.vectors * coeffs
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return arg(format!(
                "state dimension {} does not match Hamiltonian dimension {}",
                psi.dim(),
                self.dim()
            ));
        }
        let col = DMatrix::from_column_slice(psi.dim(), 1, psi.amplitudes().as_slice());
        let out = self.evolve_columns(&col, t);
        StateVector::normalized(out.column(0).into_owned(), psi.layout().clone())
    }
}

/// `exp(−iHt)|ψ⟩`.
pub fn evolve(psi: &StateVector, h: &HermitianOperator, t: f64) -> Result<StateVector> {
    if psi.dim() != h.dim() {
        return arg(format!(
            "state dimension {} does not match Hamiltonian dimension {}",
            psi.dim(),
            h.dim()
        ));
    }
    Propagator::new(h)?.evolve(psi, t)
}
