//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 3, 5, 7, 9 or 13 (Higham's 2005 selection).

use nalgebra::DMatrix;

use super::{ComplexMatrix, SuperOperator, C64, ZERO};
use crate::error::{HomLieError, Result};

// 1-norm thresholds below which the degree-m approximant has backward error
// below the double precision unit roundoff.
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^{t s}` for a superoperator.
///
/// Diagonal superoperators are exponentiated entrywise; dense ones go through
/// [`expm_dense`].
pub fn expm(s: &SuperOperator, t: f64) -> Result<SuperOperator> {
    if !t.is_finite() {
        return Err(HomLieError::InvalidArgument(format!("time must be finite, got {t}")));
    }
    match s.diagonal_entries() {
        Some(d) => {
            let out: Vec<C64> = d.iter().map(|z| (z * t).exp()).collect();
            if !out.iter().all(|z| z.is_finite()) {
                let norm = d.iter().map(|z| z.norm()).fold(0.0, f64::max) * t.abs();
                return Err(HomLieError::ExpmOverflow { norm });
            }
            SuperOperator::from_diagonal(s.dim(), out)
        }
        None => {
            let m = s.to_dense() * C64::new(t, 0.0);
            SuperOperator::from_dense(s.dim(), expm_dense(&m)?)
        }
    }
}

/// `e^{t m}` for an `N x N` matrix.
pub fn expm_matrix(m: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let scaled = m.as_dmatrix() * C64::new(t, 0.0);
    ComplexMatrix::from_dmatrix(expm_dense(&scaled)?)
}

/// Exponential of a dense square matrix.
pub fn expm_dense(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if !a.iter().all(|z| z.is_finite()) {
        return Err(HomLieError::NonFinite { context: "expm argument" });
    }
    let norm = norm1(a);
    let ident = DMatrix::<C64>::identity(n, n);
    if norm == 0.0 {
        return Ok(ident);
    }

    let result = if norm <= THETA_3 {
        pade_low(a, &PADE_3)?
    } else if norm <= THETA_5 {
        pade_low(a, &PADE_5)?
    } else if norm <= THETA_7 {
        pade_low(a, &PADE_7)?
    } else if norm <= THETA_9 {
        pade_low(a, &PADE_9)?
    } else {
        let squarings = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        let scaled = a * C64::new(0.5f64.powi(squarings), 0.0);
        let mut x = pade_13(&scaled)?;
        for _ in 0..squarings {
            x = &x * &x;
            if !x.iter().all(|z| z.is_finite()) {
                return Err(HomLieError::ExpmOverflow { norm });
            }
        }
        x
    };

    if !result.iter().all(|z| z.is_finite()) {
        return Err(HomLieError::ExpmOverflow { norm });
    }
    Ok(result)
}

fn norm1(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Degree 3..9: U = A Σ b_{2k+1} A^{2k}, V = Σ b_{2k} A^{2k}.
fn pade_low(a: &DMatrix<C64>, b: &[f64]) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::<C64>::identity(n, n);
    let mut u_inner = DMatrix::from_element(n, n, ZERO);
    let mut v = DMatrix::from_element(n, n, ZERO);
    for k in 0..b.len() / 2 {
        if k > 0 {
            power = &power * &a2;
        }
        v += &power * real(b[2 * k]);
        u_inner += &power * real(b[2 * k + 1]);
    }
    let u = a * u_inner;
    solve_pade(&u, &v)
}

fn pade_13(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let b = &PADE_13;
    let n = a.nrows();
    let ident = DMatrix::<C64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_high = &a6 * real(b[13]) + &a4 * real(b[11]) + &a2 * real(b[9]);
    let u_inner = &a6 * u_high + &a6 * real(b[7]) + &a4 * real(b[5]) + &a2 * real(b[3]) + &ident * real(b[1]);
    let u = a * u_inner;

    let v_high = &a6 * real(b[12]) + &a4 * real(b[10]) + &a2 * real(b[8]);
    let v = &a6 * v_high + &a6 * real(b[6]) + &a4 * real(b[4]) + &a2 * real(b[2]) + &ident * real(b[0]);
    solve_pade(&u, &v)
}

/// Solves (V - U) X = V + U.
fn solve_pade(u: &DMatrix<C64>, v: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or(HomLieError::ExpmOverflow { norm: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{random_matrix, seeded_rng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Truncated Taylor series in extended steps; reference for small norms.
    fn taylor(a: &DMatrix<C64>, terms: usize) -> DMatrix<C64> {
        let n = a.nrows();
        let mut sum = DMatrix::<C64>::identity(n, n);
        let mut term = DMatrix::<C64>::identity(n, n);
        for k in 1..terms {
            term = &term * a / real(k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn zero_time_is_identity() {
        let mut rng = seeded_rng(1);
        let m = random_matrix(4, &mut rng);
        assert_eq!(expm_matrix(&m, 0.0).unwrap(), ComplexMatrix::identity(4));
        let s = SuperOperator::from_action(2, |x| Ok(&random_matrix(2, &mut seeded_rng(2)) * x)).unwrap();
        assert_eq!(expm(&s, 0.0).unwrap().to_dense(), DMatrix::<C64>::identity(4, 4));
    }

    #[test]
    fn diagonal_exponentiates_entrywise() {
        let mu = [c(0.3, 1.0), c(-2.0, 0.5), c(0.0, -3.0), c(1.0, 0.0)];
        let s = SuperOperator::from_diagonal(2, mu.to_vec()).unwrap();
        let dense = SuperOperator::from_dense(2, s.to_dense() + DMatrix::from_element(4, 4, ZERO)).unwrap();
        let t = 0.7;
        for e in [expm(&s, t).unwrap().to_dense(), expm_dense(&(dense.to_dense() * real(t))).unwrap()] {
            for k in 0..4 {
                assert!((e[(k, k)] - (mu[k] * t).exp()).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn nilpotent_block_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[ZERO, real(1.0), ZERO, ZERO]);
        let e = expm_dense(&a).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[real(1.0), real(1.0), ZERO, real(1.0)]);
        assert!((e - expected).norm() < 1e-15);
    }

    #[test]
    fn every_pade_degree_matches_taylor() {
        let mut rng = seeded_rng(11);
        let base = random_matrix(6, &mut rng).into_dmatrix();
        let base_norm = norm1(&base);
        // targets exercise degrees 3, 5, 7, 9 and 13 with and without squaring
        for target in [0.01, 0.2, 0.9, 2.0, 5.0, 12.0] {
            let a = &base * real(target / base_norm);
            let reference = if target < 3.0 {
                taylor(&a, 60)
            } else {
                // (e^{A/8})^8 with a long Taylor series for the small factor
                let small = taylor(&(&a / real(8.0)), 60);
                let s2 = &small * &small;
                let s4 = &s2 * &s2;
                &s4 * &s4
            };
            let got = expm_dense(&a).unwrap();
            let rel = (&got - &reference).norm() / reference.norm();
            assert!(rel < 1e-12, "target {target}: rel {rel:e}");
        }
    }

    #[test]
    fn overflow_is_an_error() {
        let a = DMatrix::from_element(2, 2, real(1.0e3));
        assert!(matches!(expm_dense(&a), Err(HomLieError::ExpmOverflow { .. })));
        let s = SuperOperator::from_diagonal(1, vec![real(800.0)]).unwrap();
        assert!(expm(&s, 1.0).is_err());
    }
}
