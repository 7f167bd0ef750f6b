//! Dense complex linear algebra used by every other module.
//!
//! Matrices are stored column-major and vectorized column-major, so the
//! conjugation `A -> U A U*` acts on `vec(A)` as `conj(U) ⊗ U`.

mod eig;
mod expm;
mod matrix;
mod quadrature;
pub mod random;
mod superop;

pub use eig::{eig, EigenBasis, EigenSystem};
pub use expm::{expm, expm_dense, expm_matrix};
pub use matrix::{unvec, vec, ComplexMatrix};
pub use quadrature::{trapezoid_mean, trapezoid_weights, try_trapezoid_mean, UniformGrid};
pub use superop::SuperOperator;

pub use num_complex::Complex64 as C64;

/// Spectral norm (largest singular value) of `m`.
pub fn op_norm_estimate(m: &ComplexMatrix) -> f64 {
    m.op_norm()
}

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
