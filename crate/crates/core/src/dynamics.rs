//! Inner twisted derivations `δ(a) = c·α(Xa - aX)`, their flows
//! `T(t) = e^{tδ}`, sampled orbits and orbit diagnostics.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{HomLieError, Result};
use crate::homalgebra::TwistMap;
use crate::linalg::{expm, trapezoid_weights, unvec, vec, ComplexMatrix, SuperOperator, UniformGrid, C64};
use crate::report::{fmt_float, CsvTable};

/// Default prefactor `i`, which gives Hermitian `X` a purely imaginary spectrum.
pub const DEFAULT_PREFACTOR: C64 = C64::new(0.0, 1.0);

/// A flow state whose norm exceeds this multiple of `|a|` aborts the flow.
pub const OVERFLOW_FACTOR: f64 = 1e12;

/// `δ(a) = prefactor · α(Xa - aX)` together with its superoperator.
#[derive(Clone, Debug)]
pub struct TwistedDerivation {
    alpha: TwistMap,
    x: ComplexMatrix,
    prefactor: C64,
    superop: SuperOperator,
}

/// Builds `δ = prefactor · ad_α(X)`, assembling the superoperator over the
/// matrix units.
pub fn build_derivation(alpha: TwistMap, x: ComplexMatrix, prefactor: C64) -> Result<TwistedDerivation> {
    if alpha.dim() != x.dim() {
        return Err(HomLieError::DimMismatch { expected: alpha.dim(), found: x.dim() });
    }
    if !prefactor.is_finite() {
        return Err(HomLieError::NonFinite { context: "prefactor" });
    }
    let superop = SuperOperator::from_action(x.dim(), |a| action(&alpha, &x, prefactor, a))?;
    Ok(TwistedDerivation { alpha, x, prefactor, superop })
}

fn action(alpha: &TwistMap, x: &ComplexMatrix, prefactor: C64, a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let inner = &x.try_matmul(a)? - &a.matmul(x);
    Ok(alpha.apply(&inner)?.scale(prefactor))
}

impl TwistedDerivation {
    pub fn alpha(&self) -> &TwistMap {
        &self.alpha
    }

    pub fn x(&self) -> &ComplexMatrix {
        &self.x
    }

    pub fn prefactor(&self) -> C64 {
        self.prefactor
    }

    pub fn superop(&self) -> &SuperOperator {
        &self.superop
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// `δ(a)` evaluated from the defining formula.
    pub fn apply(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        action(&self.alpha, &self.x, self.prefactor, a)
    }
}

/// Norm of a superoperator on the Frobenius space: exact up to 1024 x 1024,
/// power iteration beyond.
pub fn superop_norm(s: &SuperOperator) -> f64 {
    if s.is_diagonal() || s.dim() * s.dim() <= 1024 {
        s.op_norm()
    } else {
        s.power_norm(200, 1e-10)
    }
}

fn check_growth(t: f64, state: &ComplexMatrix, reference: f64) -> Result<()> {
    let norm = state.frobenius_norm();
    let limit = OVERFLOW_FACTOR * reference;
    if !norm.is_finite() || (reference > 0.0 && norm > limit) {
        return Err(HomLieError::FlowOverflow { t, norm, limit });
    }
    Ok(())
}

/// `T(t)a = unvec(e^{tδ} vec(a))`.
pub fn flow(delta: &TwistedDerivation, t: f64, a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.dim() != delta.dim() {
        return Err(HomLieError::DimMismatch { expected: delta.dim(), found: a.dim() });
    }
    let out = expm(&delta.superop, t)?.apply(a)?;
    check_growth(t, &out, a.frobenius_norm())?;
    Ok(out)
}

/// Visits `T(t_n)a` for every point of `grid`, in order.
///
/// Diagonal superoperators are evaluated pointwise; dense ones take one
/// exponential for the first point and one for the step, then advance by
/// the group law.
pub fn visit_flow(
    delta: &TwistedDerivation,
    a: &ComplexMatrix,
    grid: &UniformGrid,
    mut visit: impl FnMut(usize, f64, &ComplexMatrix) -> Result<()>,
) -> Result<()> {
    if a.dim() != delta.dim() {
        return Err(HomLieError::DimMismatch { expected: delta.dim(), found: a.dim() });
    }
    let reference = a.frobenius_norm();
    let va = vec(a);
    if let Some(d) = delta.superop.diagonal_entries() {
        let mut v = DVector::from_element(va.len(), C64::new(0.0, 0.0));
        for (n, t) in grid.times().enumerate() {
            for k in 0..va.len() {
                v[k] = (d[k] * t).exp() * va[k];
            }
            let state = unvec(&v)?;
            check_growth(t, &state, reference)?;
            visit(n, t, &state)?;
        }
        return Ok(());
    }
    // march outward from the grid point nearest t = 0 so rounding is not
    // carried through the whole interval
    let mid = grid.steps / 2;
    let forward = expm(&delta.superop, grid.spacing())?.to_dense();
    let backward = expm(&delta.superop, -grid.spacing())?.to_dense();
    let start = expm(&delta.superop, grid.time(mid))?.apply_vec(&va);
    let mut earlier = Vec::with_capacity(mid);
    let mut v = start.clone();
    for _ in 0..mid {
        v = &backward * &v;
        earlier.push(v.clone());
    }
    for (n, v) in earlier.iter().rev().enumerate() {
        let t = grid.time(n);
        let state = unvec(v)?;
        check_growth(t, &state, reference)?;
        visit(n, t, &state)?;
    }
    drop(earlier);
    let mut v = start;
    for n in mid..grid.steps {
        if n > mid {
            v = &forward * &v;
        }
        let t = grid.time(n);
        let state = unvec(&v)?;
        check_growth(t, &state, reference)?;
        visit(n, t, &state)?;
    }
    Ok(())
}

/// Trapezoid means `(1/2R) ∫ e^{-λt} T(t)a dt` for several `λ` from one pass
/// over the orbit.
pub fn weighted_means(
    delta: &TwistedDerivation,
    a: &ComplexMatrix,
    lambdas: &[C64],
    grid: &UniformGrid,
) -> Result<Vec<ComplexMatrix>> {
    let weights = trapezoid_weights(grid.steps);
    let mut acc = vec![ComplexMatrix::zeros(a.dim()); lambdas.len()];
    visit_flow(delta, a, grid, |n, t, state| {
        for (sum, &lambda) in acc.iter_mut().zip(lambdas) {
            *sum += &state.scale((-lambda * t).exp() * weights[n]);
        }
        Ok(())
    })?;
    Ok(acc)
}

/// `|αδ - δα| / |δ|` on the superoperator level (0 when `δ = 0`).
pub fn commutation_defect(delta: &TwistedDerivation) -> Result<f64> {
    let d = &delta.superop;
    let norm = superop_norm(d);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let a = delta.alpha.superoperator()?;
    let comm = a.compose(d)?.sub(&d.compose(&a)?)?;
    Ok(superop_norm(&comm) / norm)
}

/// A sampled orbit `t -> T(t)a`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSample {
    pub times: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
    /// Operator norms of the states.
    pub norms: Vec<f64>,
}

impl OrbitSample {
    pub fn from_states(times: Vec<f64>, states: Vec<ComplexMatrix>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(HomLieError::DimMismatch { expected: times.len(), found: states.len() });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HomLieError::InvalidArgument("orbit times must be strictly increasing".into()));
        }
        let norms = states.iter().map(|s| s.op_norm()).collect();
        Ok(Self { times, states, norms })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t, norm, re_entry, im_entry` for entry `(row, col)`.
    pub fn to_csv(&self, row: usize, col: usize) -> Result<CsvTable> {
        let mut table = CsvTable::new(&["t", "norm", "re_entry", "im_entry"]);
        for ((t, s), norm) in self.times.iter().zip(&self.states).zip(&self.norms) {
            if row >= s.dim() || col >= s.dim() {
                return Err(HomLieError::InvalidArgument(format!("entry ({row},{col}) out of range")));
            }
            let z = s.get(row, col);
            table.push(vec![fmt_float(*t), fmt_float(*norm), fmt_float(z.re), fmt_float(z.im)]);
        }
        Ok(table)
    }

    pub fn write_csv(&self, row: usize, col: usize, out: &mut impl Write) -> Result<()> {
        out.write_all(&self.to_csv(row, col)?.to_bytes()?)?;
        Ok(())
    }
}

/// Uniform samples of `T(t)a` on `[-t_max, t_max]`.
pub fn orbit(delta: &TwistedDerivation, a: &ComplexMatrix, t_max: f64, steps: usize) -> Result<OrbitSample> {
    let grid = UniformGrid::new(t_max, steps)?;
    let mut times = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    visit_flow(delta, a, &grid, |_, t, s| {
        times.push(t);
        states.push(s.clone());
        Ok(())
    })?;
    OrbitSample::from_states(times, states)
}

/// Iterates of the twist alone: `a, α(a), ..., α^{count-1}(a)` at times `0, 1, ...`.
pub fn twist_orbit(alpha: &TwistMap, a: &ComplexMatrix, count: usize) -> Result<OrbitSample> {
    let mut states = Vec::with_capacity(count);
    let mut cur = a.clone();
    for k in 0..count {
        if k > 0 {
            cur = alpha.apply(&cur)?;
        }
        states.push(cur.clone());
    }
    OrbitSample::from_states((0..count).map(|k| k as f64).collect(), states)
}

/// Size of a greedy first-fit `ε`-net over the orbit states (operator norm).
pub fn precompactness_estimate(o: &OrbitSample, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(HomLieError::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let mut centers: Vec<&ComplexMatrix> = Vec::new();
    for s in &o.states {
        // cheap Frobenius rejection before the SVD
        let covered = centers.iter().any(|c| {
            let diff = *c - s;
            let fro = diff.frobenius_norm();
            if fro <= eps {
                return true;
            }
            if fro > eps * (s.dim() as f64).sqrt() {
                return false;
            }
            diff.op_norm() <= eps
        });
        if !covered {
            centers.push(s);
        }
    }
    Ok(centers.len())
}
