use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, Schur};

use super::{SuperOperator, C64, ONE, ZERO};
use crate::error::{HomLieError, Result};

/// Eigenvectors of a diagonalizable superoperator.
#[derive(Clone, Debug)]
pub enum EigenBasis {
    /// Diagonal operator: eigenvector `k` is the vec unit vector `order[k]`.
    Permutation(Vec<usize>),
    /// Unit-norm right eigenvectors as columns, with their (pseudo-)inverse.
    Dense { vectors: DMatrix<C64>, inverse: DMatrix<C64> },
}

/// Eigenvalues sorted by (imaginary part, real part), eigenvectors, and
/// reconstruction diagnostics.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<C64>,
    pub basis: EigenBasis,
    /// 2-norm condition number of the eigenvector matrix.
    pub condition: f64,
    /// `|V Λ V⁻¹ - S|_F / |S|_F`.
    pub residual: f64,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Expansion coefficients `V⁻¹ x`.
    pub fn coefficients(&self, x: &DVector<C64>) -> DVector<C64> {
        match &self.basis {
            EigenBasis::Permutation(order) => DVector::from_iterator(order.len(), order.iter().map(|&k| x[k])),
            EigenBasis::Dense { inverse, .. } => inverse * x,
        }
    }

    /// Eigenvector `k` as a vec-space column.
    pub fn vector(&self, k: usize) -> DVector<C64> {
        match &self.basis {
            EigenBasis::Permutation(order) => {
                let mut v = DVector::from_element(order.len(), ZERO);
                v[order[k]] = ONE;
                v
            }
            EigenBasis::Dense { vectors, .. } => vectors.column(k).into_owned(),
        }
    }
}

fn spectral_order(a: &C64, b: &C64) -> Ordering {
    a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re))
}

/// Eigendecomposition of a superoperator.
pub fn eig(s: &SuperOperator) -> Result<EigenSystem> {
    if let Some(d) = s.diagonal_entries() {
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&i, &j| spectral_order(&d[i], &d[j]));
        return Ok(EigenSystem {
            eigenvalues: order.iter().map(|&k| d[k]).collect(),
            basis: EigenBasis::Permutation(order),
            condition: 1.0,
            residual: 0.0,
        });
    }
    eig_dense(&s.to_dense())
}

/// Schur form of `a + σI` with `σ = |a|_F`, shifted back. Deflation becomes
/// norm-relative, which rescues spectra with many zero eigenvalues.
fn shifted_schur(a: &DMatrix<C64>, max_iterations: usize) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    let sigma = C64::new(a.norm(), 0.0);
    let shifted = a + DMatrix::from_diagonal_element(n, n, sigma);
    let (q, mut t) = Schur::try_new(shifted, f64::EPSILON, max_iterations)
        .ok_or(HomLieError::EigNoConvergence { dim: n, max_iterations })?
        .unpack();
    for i in 0..n {
        t[(i, i)] -= sigma;
    }
    Ok((q, t))
}

pub(crate) fn eig_dense(a: &DMatrix<C64>) -> Result<EigenSystem> {
    let n = a.nrows();
    let max_iterations = 200 * n.max(1);
    let (q, t) = match Schur::try_new(a.clone(), f64::EPSILON, max_iterations) {
        Some(schur) => schur.unpack(),
        None => shifted_schur(a, max_iterations)?,
    };

    let diag: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);

    // Right eigenvectors of the triangular factor by back substitution.
    let mut y = DMatrix::from_element(n, n, ZERO);
    for k in 0..n {
        let lambda = diag[k];
        y[(k, k)] = ONE;
        for j in (0..k).rev() {
            let mut acc = ZERO;
            for l in j + 1..=k {
                acc += t[(j, l)] * y[(l, k)];
            }
            let mut denom = diag[j] - lambda;
            if denom.norm() < smin {
                denom = C64::new(smin, 0.0);
            }
            y[(j, k)] = -acc / denom;
        }
    }
    let mut vectors = q * y;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= C64::new(norm, 0.0);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| spectral_order(&diag[i], &diag[j]));
    let eigenvalues: Vec<C64> = order.iter().map(|&k| diag[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);

    let svd = vectors.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin_v = svd.singular_values.min();
    let condition = if smin_v > 0.0 { smax / smin_v } else { f64::INFINITY };

    let inverse = match vectors.clone().try_inverse() {
        Some(inv) if inv.iter().all(|z| z.is_finite()) => inv,
        _ => vectors
            .clone()
            .pseudo_inverse(f64::EPSILON * smax)
            .unwrap_or_else(|_| DMatrix::from_element(n, n, ZERO)),
    };

    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= eigenvalues[j];
    }
    let recon = scaled * &inverse;
    let a_norm = a.norm();
    let residual = (recon - a).norm() / if a_norm > 0.0 { a_norm } else { 1.0 };
    let residual = if residual.is_finite() { residual } else { f64::INFINITY };

    Ok(EigenSystem {
        eigenvalues,
        basis: EigenBasis::Dense { vectors, inverse },
        condition,
        residual,
    })
}
