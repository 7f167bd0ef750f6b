use super::ComplexMatrix;
use crate::error::{HomLieError, Result};

/// Uniform grid of `steps` points on `[-r, r]`, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformGrid {
    pub r: f64,
    pub steps: usize,
}

impl UniformGrid {
    pub fn new(r: f64, steps: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(HomLieError::InvalidArgument(format!("half-width R must be positive, got {r}")));
        }
        if steps < 2 {
            return Err(HomLieError::InvalidArgument(format!("need at least 2 grid points, got {steps}")));
        }
        Ok(Self { r, steps })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.r / (self.steps - 1) as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        // endpoint pinned exactly
        if n + 1 == self.steps {
            self.r
        } else {
            -self.r + n as f64 * self.spacing()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps).map(|n| self.time(n))
    }
}

/// Weights `w_n` with `sum_n w_n f(t_n)` the composite trapezoid value of the
/// normalized mean `(1/2R) ∫ f`. They do not depend on `R`.
pub fn trapezoid_weights(steps: usize) -> Vec<f64> {
    assert!(steps >= 2);
    let m = (steps - 1) as f64;
    (0..steps)
        .map(|n| if n == 0 || n + 1 == steps { 0.5 / m } else { 1.0 / m })
        .collect()
}

/// Composite trapezoid value of `(1/2R) ∫_{-R}^{R} f(t) dt`.
pub fn trapezoid_mean(r: f64, steps: usize, mut f: impl FnMut(f64) -> ComplexMatrix) -> Result<ComplexMatrix> {
    try_trapezoid_mean(r, steps, |t| Ok(f(t)))
}

pub fn try_trapezoid_mean(
    r: f64,
    steps: usize,
    mut f: impl FnMut(f64) -> Result<ComplexMatrix>,
) -> Result<ComplexMatrix> {
    let grid = UniformGrid::new(r, steps)?;
    let weights = trapezoid_weights(steps);
    let mut acc: Option<ComplexMatrix> = None;
    for (t, w) in grid.times().zip(weights) {
        let term = f(t)?.scale_real(w);
        match acc.as_mut() {
            Some(a) => *a += &term,
            None => acc = Some(term),
        }
    }
    Ok(acc.expect("grid has at least two points"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    #[test]
    fn constant_integrand_is_reproduced() {
        let c = ComplexMatrix::from_fn(2, |i, j| C64::new(i as f64 + 1.0, j as f64 - 0.5));
        let m = trapezoid_mean(3.0, 11, |_| c.clone()).unwrap();
        assert!((&m - &c).frobenius_norm() < 1e-14);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let c = ComplexMatrix::identity(2);
        let m = trapezoid_mean(5.0, 101, |t| c.scale_real(t)).unwrap();
        assert!(m.frobenius_norm() < 1e-14);
    }

    #[test]
    fn full_periods_of_an_oscillation_average_to_small_value() {
        // Exact mean of e^{iωt} over whole periods is 0. The trapezoid rule
        // on a uniform grid sums the periodic integrand over a whole number of
        // periods, so only the endpoint mismatch of O(1/steps) in the weights
        // remains and it cancels because the endpoints carry equal values.
        let omega = 1.3;
        let r = 2.0 * std::f64::consts::PI * 3.0 / omega;
        let c = ComplexMatrix::identity(3);
        for steps in [64usize, 256, 1024] {
            let m = trapezoid_mean(r, steps, |t| c.scale(C64::from_polar(1.0, omega * t))).unwrap();
            let bound = 1.0 / (steps as f64).powi(2);
            assert!(m.op_norm() <= bound, "steps={steps} value={}", m.op_norm());
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(UniformGrid::new(0.0, 10).is_err());
        assert!(UniformGrid::new(1.0, 1).is_err());
    }
}
