use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector};

use super::{C64, ONE, ZERO};
use crate::error::{HomLieError, Result};

/// A dense square complex matrix, an element of the algebra `M_N(C)`.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    data: DMatrix<C64>,
}

impl ComplexMatrix {
    /// Wraps a square, finite nalgebra matrix.
    pub fn from_dmatrix(data: DMatrix<C64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(HomLieError::DimMismatch {
                expected: data.nrows(),
                found: data.ncols(),
            });
        }
        if data.nrows() == 0 {
            return Err(HomLieError::InvalidArgument("matrix dimension must be >= 1".into()));
        }
        if !data.iter().all(|z| z.is_finite()) {
            return Err(HomLieError::NonFinite { context: "ComplexMatrix" });
        }
        Ok(Self { data })
    }

    pub(crate) fn from_dmatrix_unchecked(data: DMatrix<C64>) -> Self {
        debug_assert_eq!(data.nrows(), data.ncols());
        Self { data }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        Self { data: DMatrix::from_element(dim, dim, ZERO) }
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        Self { data: DMatrix::identity(dim, dim) }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        Self { data: DMatrix::from_fn(dim, dim, f) }
    }

    /// Builds a matrix from row slices.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(HomLieError::DimMismatch { expected: n, found: bad.len() });
        }
        Self::from_dmatrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Real-valued convenience constructor, row-major input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> =
            rows.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, |i, j| if i == j { entries[i] } else { ZERO })
    }

    /// The matrix unit `E_jk` (one in row `j`, column `k`).
    pub fn matrix_unit(dim: usize, j: usize, k: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.data[(j, k)] = ONE;
        m
    }

    /// Cyclic shift with `S[k, k+1 mod N] = 1`.
    pub fn cyclic_shift(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if j == (i + 1) % dim { ONE } else { ZERO })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.data[(i, j)] = value;
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.data
    }

    /// Column-major entry slice.
    pub fn as_slice(&self) -> &[C64] {
        self.data.as_slice()
    }

    pub fn adjoint(&self) -> Self {
        Self { data: self.data.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        Self { data: self.data.transpose() }
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { data: &self.data * s }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        let n = self.dim();
        if n == 1 {
            return self.data[(0, 0)].norm();
        }
        if self.is_diagonal() {
            return (0..n).map(|i| self.data[(i, i)].norm()).fold(0.0, f64::max);
        }
        self.data.clone().singular_values().max()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| i == j || self.data[(i, j)] == ZERO))
    }

    /// Trace inner product `<self, other> = tr(other* self)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.data.iter().zip(other.data.iter()).map(|(a, b)| b.conj() * a).sum()
    }

    /// `|U*U - I|` in operator norm.
    pub fn unitarity_defect(&self) -> f64 {
        let g = &self.adjoint() * self;
        (&g - &Self::identity(self.dim())).op_norm()
    }

    /// `|H - H*|` in operator norm.
    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).op_norm()
    }

    /// Matrix product that skips zero entries of the right factor.
    ///
    /// Superoperator assembly multiplies against matrix units and diagonal
    /// matrices, where this is O(N * nnz) instead of O(N^3).
    pub fn matmul(&self, rhs: &Self) -> Self {
        let n = self.dim();
        assert_eq!(n, rhs.dim(), "matmul dimension mismatch");
        let mut out = DMatrix::from_element(n, n, ZERO);
        let a = self.data.as_slice();
        for j in 0..n {
            for l in 0..n {
                let b = rhs.data[(l, j)];
                if b == ZERO {
                    continue;
                }
                let a_col = &a[l * n..(l + 1) * n];
                let mut out_col = out.column_mut(j);
                for (o, &x) in out_col.iter_mut().zip(a_col) {
                    *o += x * b;
                }
            }
        }
        Self { data: out }
    }

    pub fn try_matmul(&self, rhs: &Self) -> Result<Self> {
        check_dims(self, rhs)?;
        Ok(self.matmul(rhs))
    }
}

pub(crate) fn check_dims(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        Err(HomLieError::DimMismatch { expected: a.dim(), found: b.dim() })
    } else {
        Ok(())
    }
}

/// Column-major stacking of `m` into a vector of length `N^2`.
pub fn vec(m: &ComplexMatrix) -> DVector<C64> {
    DVector::from_column_slice(m.data.as_slice())
}

/// Inverse of [`vec`]. `v.len()` must be a perfect square.
pub fn unvec(v: &DVector<C64>) -> Result<ComplexMatrix> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n * n != v.len() || n == 0 {
        return Err(HomLieError::InvalidArgument(format!(
            "vector of length {} is not a vectorized square matrix",
            v.len()
        )));
    }
    Ok(ComplexMatrix { data: DMatrix::from_column_slice(n, n, v.as_slice()) })
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{}) {}", self.dim(), self.dim(), self.data)
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix { data: &self.data + &rhs.data }
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix { data: &self.data - &rhs.data }
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix { data: -&self.data }
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        self.data += &rhs.data;
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        self.data -= &rhs.data;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn vec_is_column_major() {
        let m = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let v: Vec<f64> = vec(&m).iter().map(|z| z.re).collect();
        assert_eq!(v, [1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec(&vec(&m)).unwrap(), m);
    }

    #[test]
    fn vec_identity_and_zero() {
        let v: Vec<f64> = vec(&ComplexMatrix::identity(2)).iter().map(|z| z.re).collect();
        assert_eq!(v, [1.0, 0.0, 0.0, 1.0]);
        assert!(vec(&ComplexMatrix::zeros(3)).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn unvec_rejects_non_square_length() {
        let v = DVector::from_element(5, ONE);
        assert!(unvec(&v).is_err());
    }

    #[test]
    fn op_norm_of_diagonal_is_max_modulus() {
        let m = ComplexMatrix::diagonal(&[c(3.0, 0.0), c(0.0, -4.0)]);
        assert!((m.op_norm() - 4.0).abs() < 1e-14);
        assert!((ComplexMatrix::identity(5).op_norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn op_norm_of_rank_one_is_product_of_norms() {
        // Rank-one u v*: the only nonzero singular value is |u| |v|, which a
        // brute-force Gram eigenvalue computation confirms below.
        let u = [c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 1.5)];
        let v = [c(0.3, -1.0), c(2.0, 0.5), c(-1.0, -1.0)];
        let m = ComplexMatrix::from_fn(3, |i, j| u[i] * v[j].conj());
        let nu: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        // trace of the Gram matrix equals the sum of squared singular values
        let gram = &m.adjoint() * &m;
        assert!((gram.trace().re.sqrt() - nu * nv).abs() < 1e-12);
        assert!((m.op_norm() - nu * nv).abs() < 1e-10 * nu * nv);
    }

    #[test]
    fn matmul_matches_nalgebra() {
        let a = ComplexMatrix::from_fn(4, |i, j| c(i as f64 - j as f64, (i * j) as f64 * 0.3));
        let b = ComplexMatrix::from_fn(4, |i, j| c((i + 2 * j) as f64, -(i as f64)));
        let expected = a.as_dmatrix() * b.as_dmatrix();
        assert!(((&a * &b).into_dmatrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_element(2, 2, c(f64::NAN, 0.0));
        assert!(ComplexMatrix::from_dmatrix(m).is_err());
    }

    #[test]
    fn cyclic_shift_layout() {
        let s = ComplexMatrix::cyclic_shift(3);
        assert_eq!(s.get(0, 1), ONE);
        assert_eq!(s.get(1, 2), ONE);
        assert_eq!(s.get(2, 0), ONE);
        assert_eq!(s.get(0, 0), ZERO);
    }
}
