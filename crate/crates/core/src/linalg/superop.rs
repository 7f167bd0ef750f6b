use nalgebra::{DMatrix, DVector};

use super::matrix::{unvec, vec, ComplexMatrix};
use super::{C64, ONE, ZERO};
use crate::error::{HomLieError, Result};

/// A linear map on `M_N(C)` represented as an `N^2 x N^2` matrix acting on
/// column-major vectorizations.
///
/// Operators that are diagonal in the matrix-unit basis are kept as their
/// diagonal; everything else is stored dense.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator {
    dim: usize,
    repr: Repr,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Diagonal(Vec<C64>),
    Dense(DMatrix<C64>),
}

impl SuperOperator {
    pub fn identity(dim: usize) -> Self {
        Self { dim, repr: Repr::Diagonal(vec![ONE; dim * dim]) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, repr: Repr::Diagonal(vec![ZERO; dim * dim]) }
    }

    /// Diagonal superoperator; `entries[k]` acts on the `k`-th vec coordinate.
    pub fn from_diagonal(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(HomLieError::DimMismatch { expected: dim * dim, found: entries.len() });
        }
        if !entries.iter().all(|z| z.is_finite()) {
            return Err(HomLieError::NonFinite { context: "SuperOperator" });
        }
        Ok(Self { dim, repr: Repr::Diagonal(entries) })
    }

    pub fn from_dense(dim: usize, m: DMatrix<C64>) -> Result<Self> {
        let n2 = dim * dim;
        if m.nrows() != n2 || m.ncols() != n2 {
            return Err(HomLieError::DimMismatch { expected: n2, found: m.nrows().max(m.ncols()) });
        }
        if !m.iter().all(|z| z.is_finite()) {
            return Err(HomLieError::NonFinite { context: "SuperOperator" });
        }
        Ok(Self { dim, repr: Repr::Dense(m) })
    }

    /// Assembles the superoperator of `action` column by column, applying it
    /// to every matrix unit `E_jk` in vec order.
    pub fn from_action(
        dim: usize,
        mut action: impl FnMut(&ComplexMatrix) -> Result<ComplexMatrix>,
    ) -> Result<Self> {
        let n2 = dim * dim;
        let mut diag = vec![ZERO; n2];
        // off-diagonal entries (row, col, value), densified only if present
        let mut off: Vec<(usize, usize, C64)> = Vec::new();
        for col in 0..n2 {
            let (j, k) = (col % dim, col / dim);
            let image = action(&ComplexMatrix::matrix_unit(dim, j, k))?;
            if image.dim() != dim {
                return Err(HomLieError::DimMismatch { expected: dim, found: image.dim() });
            }
            for (row, &z) in image.as_slice().iter().enumerate() {
                if z == ZERO {
                    continue;
                }
                if row == col {
                    diag[col] = z;
                } else {
                    off.push((row, col, z));
                }
            }
        }
        if off.is_empty() {
            return Self::from_diagonal(dim, diag);
        }
        let mut m = DMatrix::from_element(n2, n2, ZERO);
        for (k, z) in diag.into_iter().enumerate() {
            m[(k, k)] = z;
        }
        for (r, c, z) in off {
            m[(r, c)] = z;
        }
        Self::from_dense(dim, m)
    }

    /// Matrix dimension `N` (the superoperator is `N^2 x N^2`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.repr, Repr::Diagonal(_))
    }

    pub fn diagonal_entries(&self) -> Option<&[C64]> {
        match &self.repr {
            Repr::Diagonal(d) => Some(d),
            Repr::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.repr {
            Repr::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Repr::Dense(m) => m.clone(),
        }
    }

    pub fn apply_vec(&self, v: &DVector<C64>) -> DVector<C64> {
        match &self.repr {
            Repr::Diagonal(d) => DVector::from_iterator(v.len(), d.iter().zip(v.iter()).map(|(a, b)| a * b)),
            Repr::Dense(m) => m * v,
        }
    }

    pub fn apply(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        if a.dim() != self.dim {
            return Err(HomLieError::DimMismatch { expected: self.dim, found: a.dim() });
        }
        unvec(&self.apply_vec(&vec(a)))
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let repr = match (&self.repr, &other.repr) {
            (Repr::Diagonal(a), Repr::Diagonal(b)) => {
                Repr::Diagonal(a.iter().zip(b).map(|(x, y)| x * y).collect())
            }
            (Repr::Diagonal(a), Repr::Dense(m)) => {
                let mut out = m.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= a[i];
                }
                Repr::Dense(out)
            }
            (Repr::Dense(m), Repr::Diagonal(b)) => {
                let mut out = m.clone();
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    col *= b[j];
                }
                Repr::Dense(out)
            }
            (Repr::Dense(a), Repr::Dense(b)) => Repr::Dense(a * b),
        };
        Ok(Self { dim: self.dim, repr })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let repr = match (&self.repr, &other.repr) {
            (Repr::Diagonal(a), Repr::Diagonal(b)) => {
                Repr::Diagonal(a.iter().zip(b).map(|(x, y)| x - y).collect())
            }
            _ => Repr::Dense(self.to_dense() - other.to_dense()),
        };
        Ok(Self { dim: self.dim, repr })
    }

    pub fn scale(&self, s: C64) -> Self {
        let repr = match &self.repr {
            Repr::Diagonal(d) => Repr::Diagonal(d.iter().map(|z| z * s).collect()),
            Repr::Dense(m) => Repr::Dense(m * s),
        };
        Self { dim: self.dim, repr }
    }

    /// Spectral norm on the vectorized (Frobenius) space.
    pub fn op_norm(&self) -> f64 {
        match &self.repr {
            Repr::Diagonal(d) => d.iter().map(|z| z.norm()).fold(0.0, f64::max),
            Repr::Dense(m) => {
                if m.nrows() == 1 {
                    m[(0, 0)].norm()
                } else {
                    m.clone().singular_values().max()
                }
            }
        }
    }

    /// Largest singular value by power iteration on `S* S`.
    pub fn power_norm(&self, iterations: usize, tol: f64) -> f64 {
        if let Repr::Diagonal(d) = &self.repr {
            return d.iter().map(|z| z.norm()).fold(0.0, f64::max);
        }
        let n2 = self.dim * self.dim;
        let adj = self.to_dense().adjoint();
        // deterministic, non-degenerate start vector
        let mut v = DVector::from_fn(n2, |k, _| C64::new(1.0 + (k as f64) * 1e-3, 0.5 / (1.0 + k as f64)));
        v /= C64::new(v.norm(), 0.0);
        let mut sigma = 0.0_f64;
        for _ in 0..iterations {
            let w = &adj * self.apply_vec(&v);
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm.sqrt();
            v = w / C64::new(norm, 0.0);
            let done = (next - sigma).abs() <= tol * next;
            sigma = next;
            if done {
                break;
            }
        }
        sigma
    }

    pub fn frobenius_norm(&self) -> f64 {
        match &self.repr {
            Repr::Diagonal(d) => d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            Repr::Dense(m) => m.norm(),
        }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            Err(HomLieError::DimMismatch { expected: self.dim, found: other.dim })
        } else {
            Ok(())
        }
    }
}
