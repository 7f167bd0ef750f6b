//! Twisting maps, twisted brackets `[a, b]_α = α(ab - ba)`, and defect
//! evaluators for the Hom-Jacobi, Hom-Malcev and related identities.
//!
//! Defects returned by the `*_defect` functions are raw operator norms. The
//! sampled reports divide them by the product of the input norms (with
//! multiplicity), so one tolerance works across dimensions and scales.

use serde::Serialize;

use crate::error::{HomLieError, Result};
use crate::linalg::random::{random_matrix, seeded_rng, SeededRng};
use crate::linalg::{expm_matrix, ComplexMatrix, SuperOperator, C64};

/// Unitarity tolerance for [`TwistMap::unitary`].
pub const UNITARY_TOL: f64 = 1e-10;
/// Hermiticity tolerance for [`semigroup_bracket_family`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Constant `C` in `|[x,y]| <= C |x| |y|` for the operator norm.
pub const COMMUTATOR_CONSTANT: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub enum TwistKind {
    Identity,
    /// `a -> U a U*`.
    UnitaryConjugation(ComplexMatrix),
    /// `a -> a + tr(a) I`.
    TraceShift,
    Transpose,
    General(SuperOperator),
}

/// A bounded linear twisting map on `M_N(C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwistMap {
    kind: TwistKind,
    dim: usize,
}

impl TwistMap {
    pub fn identity(dim: usize) -> Self {
        Self { kind: TwistKind::Identity, dim }
    }

    pub fn unitary(u: ComplexMatrix) -> Result<Self> {
        let deviation = u.unitarity_defect();
        if deviation > UNITARY_TOL {
            return Err(HomLieError::NotUnitary { deviation });
        }
        Ok(Self { dim: u.dim(), kind: TwistKind::UnitaryConjugation(u) })
    }

    pub fn trace_shift(dim: usize) -> Self {
        Self { kind: TwistKind::TraceShift, dim }
    }

    pub fn transpose(dim: usize) -> Self {
        Self { kind: TwistKind::Transpose, dim }
    }

    pub fn general(s: SuperOperator) -> Self {
        Self { dim: s.dim(), kind: TwistKind::General(s) }
    }

    pub fn kind(&self) -> &TwistKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TwistKind::Identity => "identity",
            TwistKind::UnitaryConjugation(_) => "unitary",
            TwistKind::TraceShift => "trace-shift",
            TwistKind::Transpose => "transpose",
            TwistKind::General(_) => "general",
        }
    }

    /// Whether the map is an algebra automorphism (and so a bracket morphism).
    pub fn is_morphism(&self) -> bool {
        matches!(self.kind, TwistKind::Identity | TwistKind::UnitaryConjugation(_))
    }

    pub fn apply(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        if a.dim() != self.dim {
            return Err(HomLieError::DimMismatch { expected: self.dim, found: a.dim() });
        }
        Ok(match &self.kind {
            TwistKind::Identity => a.clone(),
            TwistKind::UnitaryConjugation(u) => &(u * a) * &u.adjoint(),
            TwistKind::TraceShift => {
                let mut out = a.clone();
                let tr = a.trace();
                for i in 0..self.dim {
                    out.set(i, i, out.get(i, i) + tr);
                }
                out
            }
            TwistKind::Transpose => a.transpose(),
            TwistKind::General(s) => s.apply(a)?,
        })
    }

    pub fn superoperator(&self) -> Result<SuperOperator> {
        match &self.kind {
            TwistKind::Identity => Ok(SuperOperator::identity(self.dim)),
            TwistKind::General(s) => Ok(s.clone()),
            _ => SuperOperator::from_action(self.dim, |a| self.apply(a)),
        }
    }

    /// Upper bound on the operator-norm-induced norm of the map.
    ///
    /// Exact for identity, conjugation and transpose; `1 + N` for the trace
    /// shift; `sqrt(N)` times the power-iteration Frobenius norm otherwise.
    pub fn norm_bound(&self) -> f64 {
        match &self.kind {
            TwistKind::Identity | TwistKind::UnitaryConjugation(_) | TwistKind::Transpose => 1.0,
            TwistKind::TraceShift => 1.0 + self.dim as f64,
            TwistKind::General(s) => (self.dim as f64).sqrt() * s.power_norm(20, 1e-8),
        }
    }
}

/// `ab - ba`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(&a.try_matmul(b)? - &b.matmul(a))
}

/// `α(ab - ba)`.
pub fn twisted_bracket(alpha: &TwistMap, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    alpha.apply(&commutator(a, b)?)
}

/// Hom-Jacobiator
/// `[α(x),[y,z]_α]_α + [α(y),[z,x]_α]_α + [α(z),[x,y]_α]_α`.
pub fn hom_jacobiator(
    alpha: &TwistMap,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    z: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let term = |u: &ComplexMatrix, v: &ComplexMatrix, w: &ComplexMatrix| -> Result<ComplexMatrix> {
        twisted_bracket(alpha, &alpha.apply(u)?, &twisted_bracket(alpha, v, w)?)
    };
    let mut j = term(x, y, z)?;
    j += &term(y, z, x)?;
    j += &term(z, x, y)?;
    Ok(j)
}

pub fn hom_jacobi_defect(alpha: &TwistMap, x: &ComplexMatrix, y: &ComplexMatrix, z: &ComplexMatrix) -> Result<f64> {
    Ok(hom_jacobiator(alpha, x, y, z)?.op_norm())
}

/// `|J_α(α(x), α(y), [x,z]_α) - [J_α(x,y,z), α²(x)]_α|`, both sides
/// evaluated literally.
pub fn hom_malcev_defect(alpha: &TwistMap, x: &ComplexMatrix, y: &ComplexMatrix, z: &ComplexMatrix) -> Result<f64> {
    let ax = alpha.apply(x)?;
    let ay = alpha.apply(y)?;
    let xz = twisted_bracket(alpha, x, z)?;
    let lhs = hom_jacobiator(alpha, &ax, &ay, &xz)?;
    let aax = alpha.apply(&ax)?;
    let rhs = twisted_bracket(alpha, &hom_jacobiator(alpha, x, y, z)?, &aax)?;
    Ok((&lhs - &rhs).op_norm())
}

/// Failure map `Φ(x,y) = α([x,y]) - [α(x), α(y)]`.
pub fn phi_failure(alpha: &TwistMap, x: &ComplexMatrix, y: &ComplexMatrix) -> Result<ComplexMatrix> {
    let lhs = twisted_bracket(alpha, x, y)?;
    let rhs = commutator(&alpha.apply(x)?, &alpha.apply(y)?)?;
    Ok(&lhs - &rhs)
}

/// `|Φ([x,y],z) + Φ([y,z],x) + Φ([z,x],y)|`.
pub fn cyclic_phi_defect(alpha: &TwistMap, x: &ComplexMatrix, y: &ComplexMatrix, z: &ComplexMatrix) -> Result<f64> {
    let mut sum = phi_failure(alpha, &commutator(x, y)?, z)?;
    sum += &phi_failure(alpha, &commutator(y, z)?, x)?;
    sum += &phi_failure(alpha, &commutator(z, x)?, y)?;
    Ok(sum.op_norm())
}

/// `[x,y]_t = α_t([x,y])` with `α_t` conjugation by `e^{itH}`.
pub fn semigroup_bracket_family(
    h: &ComplexMatrix,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    t: f64,
) -> Result<ComplexMatrix> {
    let deviation = h.hermiticity_defect();
    if deviation > HERMITIAN_TOL {
        return Err(HomLieError::NotHermitian { deviation });
    }
    let c = commutator(x, y)?;
    if t == 0.0 {
        return Ok(c);
    }
    let u = expm_matrix(&h.scale(C64::new(0.0, 1.0)), t)?;
    Ok(&(&u * &c) * &u.adjoint())
}

/// Outcome of a sampled identity check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    #[serde(rename = "identity")]
    pub identity_name: String,
    pub samples: usize,
    pub seed: u64,
    pub max_defect: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Index of the sample achieving `max_defect`.
    #[serde(skip)]
    pub worst_case: Option<usize>,
}

impl IdentityReport {
    /// Runs `defect` on `samples` draws from a generator seeded with `seed`.
    pub fn sample(
        name: impl Into<String>,
        samples: usize,
        seed: u64,
        tolerance: f64,
        mut defect: impl FnMut(&mut SeededRng) -> Result<f64>,
    ) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let mut max_defect = 0.0_f64;
        let mut worst_case = None;
        for k in 0..samples {
            let d = defect(&mut rng)?;
            // NaN counts as a failure
            let d = if d.is_nan() { f64::INFINITY } else { d };
            if worst_case.is_none() || d > max_defect {
                max_defect = d;
                worst_case = Some(k);
            }
        }
        Ok(Self {
            identity_name: name.into(),
            samples,
            seed,
            max_defect,
            tolerance,
            pass: max_defect <= tolerance,
            worst_case,
        })
    }

    pub fn vacuous(name: impl Into<String>, samples: usize, seed: u64, tolerance: f64) -> Self {
        Self {
            identity_name: name.into(),
            samples,
            seed,
            max_defect: 0.0,
            tolerance,
            pass: true,
            worst_case: None,
        }
    }
}

fn nonzero(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        1.0
    }
}

fn triple(dim: usize, rng: &mut SeededRng) -> [ComplexMatrix; 3] {
    [random_matrix(dim, rng), random_matrix(dim, rng), random_matrix(dim, rng)]
}

pub fn skew_symmetry_report(alpha: &TwistMap, samples: usize, seed: u64) -> Result<IdentityReport> {
    let n = alpha.dim();
    IdentityReport::sample("skew_symmetry", samples, seed, 0.0, |rng| {
        let (a, b) = (random_matrix(n, rng), random_matrix(n, rng));
        let sum = &twisted_bracket(alpha, &a, &b)? + &twisted_bracket(alpha, &b, &a)?;
        Ok(sum.op_norm())
    })
}

pub fn hom_jacobi_report(alpha: &TwistMap, samples: usize, seed: u64, tol: f64) -> Result<IdentityReport> {
    let n = alpha.dim();
    IdentityReport::sample("hom_jacobi", samples, seed, tol, |rng| {
        let [x, y, z] = triple(n, rng);
        let scale = x.op_norm() * y.op_norm() * z.op_norm();
        Ok(hom_jacobi_defect(alpha, &x, &y, &z)? / nonzero(scale))
    })
}

pub fn hom_malcev_report(alpha: &TwistMap, samples: usize, seed: u64, tol: f64) -> Result<IdentityReport> {
    let n = alpha.dim();
    IdentityReport::sample("hom_malcev", samples, seed, tol, |rng| {
        let [x, y, z] = triple(n, rng);
        let nx = x.op_norm();
        let scale = nx * nx * y.op_norm() * z.op_norm();
        Ok(hom_malcev_defect(alpha, &x, &y, &z)? / nonzero(scale))
    })
}

pub fn phi_failure_report(alpha: &TwistMap, samples: usize, seed: u64, tol: f64) -> Result<IdentityReport> {
    let n = alpha.dim();
    IdentityReport::sample("phi_failure", samples, seed, tol, |rng| {
        let (x, y) = (random_matrix(n, rng), random_matrix(n, rng));
        Ok(phi_failure(alpha, &x, &y)?.op_norm() / nonzero(x.op_norm() * y.op_norm()))
    })
}

pub fn cyclic_phi_report(alpha: &TwistMap, samples: usize, seed: u64, tol: f64) -> Result<IdentityReport> {
    let n = alpha.dim();
    IdentityReport::sample("cyclic_phi", samples, seed, tol, |rng| {
        let [x, y, z] = triple(n, rng);
        let scale = x.op_norm() * y.op_norm() * z.op_norm();
        Ok(cyclic_phi_defect(alpha, &x, &y, &z)? / nonzero(scale))
    })
}

/// Largest observed `|[x,y]_α| / (|α| |x| |y|)`; passes when it stays at or
/// below the commutator constant 2.
pub fn bracket_norm_bound_check(alpha: &TwistMap, samples: usize, seed: u64) -> Result<IdentityReport> {
    let n = alpha.dim();
    let alpha_norm = alpha.norm_bound();
    IdentityReport::sample("bracket_norm_bound", samples, seed, COMMUTATOR_CONSTANT, |rng| {
        let (x, y) = (random_matrix(n, rng), random_matrix(n, rng));
        let lhs = twisted_bracket(alpha, &x, &y)?.op_norm();
        Ok(lhs / nonzero(alpha_norm * x.op_norm() * y.op_norm()))
    })
}

/// Largest `| |[x,y]_α| - |[x,y]| |`, normalized by `|x| |y|`.
pub fn isometry_bracket_check(alpha: &TwistMap, samples: usize, seed: u64) -> Result<IdentityReport> {
    if !alpha.is_morphism() {
        return Err(HomLieError::NotIsometric { kind: alpha.name() });
    }
    let n = alpha.dim();
    IdentityReport::sample("isometry_bracket", samples, seed, 1e-10, |rng| {
        let (x, y) = (random_matrix(n, rng), random_matrix(n, rng));
        let twisted = twisted_bracket(alpha, &x, &y)?.op_norm();
        let plain = commutator(&x, &y)?.op_norm();
        Ok((twisted - plain).abs() / nonzero(x.op_norm() * y.op_norm()))
    })
}

/// Checks `|[x,y]_t - [x,y]_s| <= 2 |H| |[x,y]| |t - s|` on random samples
/// with `t, s` in `[-5, 5]`. The reported defect is the largest ratio of the
/// left side to the right side; the tolerance is 1.
pub fn semigroup_lipschitz_check(h: &ComplexMatrix, samples: usize, seed: u64) -> Result<IdentityReport> {
    let n = h.dim();
    let h_norm = h.op_norm();
    IdentityReport::sample("semigroup_lipschitz", samples, seed, 1.0 + 1e-10, |rng| {
        use rand::Rng;
        let (x, y) = (random_matrix(n, rng), random_matrix(n, rng));
        let t: f64 = rng.random_range(-5.0..5.0);
        let s: f64 = rng.random_range(-5.0..5.0);
        let lhs = (&semigroup_bracket_family(h, &x, &y, t)? - &semigroup_bracket_family(h, &x, &y, s)?).op_norm();
        let rhs = COMMUTATOR_CONSTANT * h_norm * commutator(&x, &y)?.op_norm() * (t - s).abs();
        Ok(if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY })
    })
}

/// Hom-Lie morphism defect of `φ`: the larger of
/// `|φ(α(x)) - β(φ(x))| / |x|` and `|φ([x,y]_α) - [φ(x), φ(y)]_β| / (|x| |y|)`.
///
/// Samples are drawn from the span of `domain` when given (random complex
/// normal combinations), otherwise from all of `M_N(C)`.
pub fn hom_lie_morphism_defect(
    phi: &SuperOperator,
    alpha: &TwistMap,
    beta: &TwistMap,
    domain: Option<&[ComplexMatrix]>,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<IdentityReport> {
    let n = phi.dim();
    for d in [alpha.dim(), beta.dim()] {
        if d != n {
            return Err(HomLieError::DimMismatch { expected: n, found: d });
        }
    }
    if let Some([]) = domain {
        return Ok(IdentityReport::vacuous("hom_lie_morphism", samples, seed, tol));
    }
    let draw = |rng: &mut SeededRng| -> ComplexMatrix {
        match domain {
            Some(basis) => span_sample(basis, rng),
            None => random_matrix(n, rng),
        }
    };
    IdentityReport::sample("hom_lie_morphism", samples, seed, tol, |rng| {
        let (x, y) = (draw(rng), draw(rng));
        let (px, py) = (phi.apply(&x)?, phi.apply(&y)?);
        let intertwine = (&phi.apply(&alpha.apply(&x)?)? - &beta.apply(&px)?).op_norm() / nonzero(x.op_norm());
        let bracket = (&phi.apply(&twisted_bracket(alpha, &x, &y)?)? - &twisted_bracket(beta, &px, &py)?)
            .op_norm()
            / nonzero(x.op_norm() * y.op_norm());
        Ok(intertwine.max(bracket))
    })
}

/// Random complex-normal combination of `basis`.
pub(crate) fn span_sample(basis: &[ComplexMatrix], rng: &mut SeededRng) -> ComplexMatrix {
    let mut acc = ComplexMatrix::zeros(basis[0].dim());
    for b in basis {
        acc += &b.scale(crate::linalg::random::complex_normal(rng));
    }
    acc
}

/// Pauli matrices `(σ_x, σ_y, σ_z)`.
pub fn pauli() -> [ComplexMatrix; 3] {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        ComplexMatrix::from_rows(&[vec![z, one], vec![one, z]]).expect("2x2"),
        ComplexMatrix::from_rows(&[vec![z, -i], vec![i, z]]).expect("2x2"),
        ComplexMatrix::from_rows(&[vec![one, z], vec![z, -one]]).expect("2x2"),
    ]
}
