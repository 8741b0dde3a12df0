use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// Largest total Hilbert-space dimension any operator may have.
pub const MAX_TOTAL_DIM: usize = 4096;

/// Physical role of a tensor factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Pointer,
    Micro,
    Environment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

impl Factor {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
            role: None,
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = Some(role);
        self
    }
}

/// Ordered tensor factors of a composite space.
///
/// Basis indices are row-major over the factors: the first factor is the
/// slowest-varying digit, matching the Kronecker product convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Factor>", into = "Vec<Factor>")]
pub struct Layout {
    factors: Vec<Factor>,
}

impl TryFrom<Vec<Factor>> for Layout {
    type Error = crate::Error;

    fn try_from(factors: Vec<Factor>) -> Result<Self> {
        Layout::new(factors)
    }
}

impl From<Layout> for Vec<Factor> {
    fn from(layout: Layout) -> Self {
        layout.factors
    }
}

impl Layout {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return arg("layout needs at least one factor");
        }
        let mut seen = HashSet::new();
        let mut total: usize = 1;
        for f in &factors {
            if f.dim == 0 {
                return arg(format!("factor `{}` has dimension 0", f.name));
            }
            if !seen.insert(f.name.as_str()) {
                return arg(format!("duplicate factor name `{}`", f.name));
            }
            total = total.saturating_mul(f.dim);
        }
        if total > MAX_TOTAL_DIM {
            return Err(crate::Error::Capacity {
                requested: total,
                max: MAX_TOTAL_DIM,
            });
        }
        Ok(Self { factors })
    }

    /// Layout from `(name, dim)` pairs without roles.
    pub fn from_dims(dims: &[(&str, usize)]) -> Result<Self> {
        Self::new(dims.iter().map(|&(n, d)| Factor::new(n, d)).collect())
    }

    pub fn single(name: &str, dim: usize) -> Result<Self> {
        Self::from_dims(&[(name, dim)])
    }

    /// Two qubits named `a` and `b`.
    pub fn qubit_pair(a: &str, b: &str) -> Result<Self> {
        Self::from_dims(&[(a, 2), (b, 2)])
    }

    pub fn with_role(mut self, name: &str, role: Role) -> Result<Self> {
        let pos = self.position(name)?;
        self.factors[pos].role = Some(role);
        Ok(self)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.dim).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        match self.factors.iter().position(|f| f.name == name) {
            Some(p) => Ok(p),
            None => arg(format!(
                "unknown factor `{name}` (layout has {:?})",
                self.names()
            )),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factors.iter().any(|f| f.name == name)
    }

    pub fn factor(&self, name: &str) -> Result<&Factor> {
        Ok(&self.factors[self.position(name)?])
    }

    /// First factor carrying `role`.
    pub fn factor_with_role(&self, role: Role) -> Option<&Factor> {
        self.factors.iter().find(|f| f.role == Some(role))
    }

    /// Positions of the named factors, in the order given.
    pub fn positions<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(names.len());
        for n in names {
            let p = self.position(n.as_ref())?;
            if out.contains(&p) {
                return arg(format!("factor `{}` listed twice", n.as_ref()));
            }
            out.push(p);
        }
        Ok(out)
    }

    /// Sub-layout made of the factors at `positions`, in that order.
    pub fn subset(&self, positions: &[usize]) -> Result<Layout> {
        Layout::new(positions.iter().map(|&p| self.factors[p].clone()).collect())
    }

    pub fn concat(&self, other: &Layout) -> Result<Layout> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Layout::new(factors)
    }

    /// Split a flat basis index into per-factor digits.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for (k, f) in self.factors.iter().enumerate().rev() {
            out[k] = index % f.dim;
            index /= f.dim;
        }
        out
    }

    /// `perm[new] = old` for reordering factors into `order` (positions).
    pub(crate) fn permutation(&self, order: &[usize]) -> Vec<usize> {
        let dims = self.dims();
        let total = self.total_dim();
        let mut old_strides = vec![1usize; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            old_strides[k] = old_strides[k + 1] * dims[k + 1];
        }
        let new_dims: Vec<usize> = order.iter().map(|&p| dims[p]).collect();
        let mut perm = Vec::with_capacity(total);
        let mut digits = vec![0usize; order.len()];
        for _ in 0..total {
            let old: usize = digits
                .iter()
                .zip(order)
                .map(|(&d, &p)| d * old_strides[p])
                .sum();
            perm.push(old);
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < new_dims[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        perm
    }

    /// Resolve `order` (a full reordering of factor names) into positions.
    pub(crate) fn full_order<S: AsRef<str>>(&self, order: &[S]) -> Result<Vec<usize>> {
        let pos = self.positions(order)?;
        if pos.len() != self.factors.len() {
            return arg(format!(
                "reordering must name every factor exactly once (got {} of {})",
                pos.len(),
                self.factors.len()
            ));
        }
        Ok(pos)
    }
}
