//! Bohr-Fourier spectral decomposition of orbits `t -> T(t)a`: an exact
//! eigen-oracle, time-average estimators, frequency detection, the
//! almost-periodic / ergodic splitting and its stability checks.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::dynamics::{superop_norm, visit_flow, weighted_means, TwistedDerivation};
use crate::error::{HomLieError, Result};
use crate::homalgebra::{twisted_bracket, IdentityReport, TwistMap};
use crate::linalg::random::{complex_normal, SeededRng};
use crate::linalg::{eig, trapezoid_weights, unvec, vec, ComplexMatrix, EigenBasis, EigenSystem, SuperOperator, UniformGrid, C64};
use crate::report::{fmt_float, CsvTable, JsonComplex};

pub const DEFAULT_TOL_RE: f64 = 1e-8;
pub const DEFAULT_TOL_CLUSTER: f64 = 1e-8;
pub const DEFAULT_R: f64 = 200.0;
pub const DEFAULT_STEPS: usize = 4001;
/// Largest eigen-reconstruction residual accepted as diagonalizable.
pub const MAX_EIG_RESIDUAL: f64 = 1e-6;
/// Minimum number of quadrature points for a Bohr average.
pub const MIN_STEPS: usize = 64;
/// Modes lighter than this fraction of `|a|` are dropped from exact decompositions.
pub const NEGLIGIBLE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSource {
    Eig,
    Average,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeTag {
    Zero,
    Imaginary,
    Decaying,
    Growing,
}

impl ModeTag {
    pub fn classify(lambda: C64, tol_re: f64) -> Self {
        if lambda.norm() <= tol_re {
            ModeTag::Zero
        } else if lambda.re.abs() <= tol_re {
            ModeTag::Imaginary
        } else if lambda.re < 0.0 {
            ModeTag::Decaying
        } else {
            ModeTag::Growing
        }
    }

    /// Zero and imaginary modes make up the almost-periodic part.
    pub fn is_almost_periodic(self) -> bool {
        matches!(self, ModeTag::Zero | ModeTag::Imaginary)
    }
}

/// One spectral component `a_λ` with `T(t)a_λ = e^{λt}a_λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BohrMode {
    pub lambda: C64,
    pub coefficient: ComplexMatrix,
    /// Operator norm of the coefficient.
    pub magnitude: f64,
    pub source: ModeSource,
    pub tag: ModeTag,
}

impl BohrMode {
    pub fn new(lambda: C64, coefficient: ComplexMatrix, source: ModeSource, tol_re: f64) -> Self {
        let magnitude = coefficient.op_norm();
        Self { lambda, coefficient, magnitude, source, tag: ModeTag::classify(lambda, tol_re) }
    }
}

/// Modes sorted by descending magnitude, with the non-almost-periodic
/// remainder.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    pub modes: Vec<BohrMode>,
    /// `a - Σ` of the zero and imaginary coefficients for eig decompositions;
    /// `a - Σ` of all coefficients for averaged ones.
    pub residual: ComplexMatrix,
    /// `|a - Σ coefficients|` over every mode.
    pub reconstruction_error: f64,
    /// `Σ |a_λ|`.
    pub abs_sum: f64,
}

impl SpectralDecomposition {
    fn assemble(a: &ComplexMatrix, mut modes: Vec<BohrMode>, residual_from_all: bool) -> Self {
        modes.sort_by(|x, y| {
            y.magnitude
                .total_cmp(&x.magnitude)
                .then(x.lambda.im.total_cmp(&y.lambda.im))
                .then(x.lambda.re.total_cmp(&y.lambda.re))
        });
        let mut all = a.clone();
        let mut residual = a.clone();
        for m in &modes {
            all -= &m.coefficient;
            if residual_from_all || m.tag.is_almost_periodic() {
                residual -= &m.coefficient;
            }
        }
        let abs_sum = modes.iter().map(|m| m.magnitude).sum();
        Self { reconstruction_error: all.op_norm(), modes, residual, abs_sum }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn frequencies(&self) -> Vec<C64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    pub fn count(&self, tag: ModeTag) -> usize {
        self.modes.iter().filter(|m| m.tag == tag).count()
    }

    /// Modes ordered by `(Im λ, Re λ)`, the serialized order.
    pub fn modes_by_frequency(&self) -> Vec<&BohrMode> {
        let mut v: Vec<&BohrMode> = self.modes.iter().collect();
        v.sort_by(|x, y| x.lambda.im.total_cmp(&y.lambda.im).then(x.lambda.re.total_cmp(&y.lambda.re)));
        v
    }

    pub fn report(&self, prefactor: C64, seed: u64) -> DecompositionReport {
        DecompositionReport {
            modes: self
                .modes_by_frequency()
                .into_iter()
                .map(|m| ModeEntry { lambda: m.lambda.into(), magnitude: m.magnitude, tag: m.tag })
                .collect(),
            reconstruction_error: self.reconstruction_error,
            abs_sum: self.abs_sum,
            prefactor: prefactor.into(),
            seed,
        }
    }

    /// Coefficient matrices as CSV rows `mode, row, col, re, im`, modes
    /// numbered in serialized order.
    pub fn coefficients_csv(&self) -> CsvTable {
        let mut table = CsvTable::new(&["mode", "row", "col", "re", "im"]);
        for (k, m) in self.modes_by_frequency().into_iter().enumerate() {
            let n = m.coefficient.dim();
            for row in 0..n {
                for col in 0..n {
                    let z = m.coefficient.get(row, col);
                    table.push(vec![
                        k.to_string(),
                        row.to_string(),
                        col.to_string(),
                        fmt_float(z.re),
                        fmt_float(z.im),
                    ]);
                }
            }
        }
        table
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeEntry {
    pub lambda: JsonComplex,
    pub magnitude: f64,
    pub tag: ModeTag,
}

/// Serialized form of a [`SpectralDecomposition`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub modes: Vec<ModeEntry>,
    pub reconstruction_error: f64,
    pub abs_sum: f64,
    pub prefactor: JsonComplex,
    pub seed: u64,
}

/// Groups of indices whose values are chained within `tol`. `values` must be
/// sorted by imaginary part.
pub fn cluster_sorted(values: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if values[j].im - values[i].im > tol {
                break;
            }
            if (values[j] - values[i]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn mean(values: &[C64], idx: &[usize]) -> C64 {
    idx.iter().map(|&k| values[k]).sum::<C64>() / idx.len() as f64
}

/// Eigen-decomposition with a diagonalizability check.
pub fn diagonalize(s: &SuperOperator) -> Result<EigenSystem> {
    let sys = eig(s)?;
    if sys.residual > MAX_EIG_RESIDUAL || !sys.condition.is_finite() {
        return Err(defective(&sys, s));
    }
    Ok(sys)
}

fn defective(sys: &EigenSystem, s: &SuperOperator) -> HomLieError {
    // the Jordan cluster is the largest group of eigenvalues that coalesce
    // at a loose tolerance
    let loose = 1e-6 * superop_norm(s).max(1.0);
    let groups = cluster_sorted(&sys.eigenvalues, loose);
    let worst = groups.iter().max_by_key(|g| g.len()).cloned().unwrap_or_default();
    let min_singular = match &sys.basis {
        EigenBasis::Permutation(_) => 1.0,
        EigenBasis::Dense { vectors, .. } => vectors.clone().singular_values().min(),
    };
    HomLieError::Defective {
        cluster: if worst.is_empty() { C64::new(0.0, 0.0) } else { mean(&sys.eigenvalues, &worst) },
        multiplicity: worst.len(),
        min_singular,
        residual: sys.residual,
    }
}

/// Mode coefficients of `a` along clustered eigenvalues of `s`.
pub fn superop_modes(s: &SuperOperator, a: &ComplexMatrix, tol_re: f64, tol_cluster: f64) -> Result<SpectralDecomposition> {
    if a.dim() != s.dim() {
        return Err(HomLieError::DimMismatch { expected: s.dim(), found: a.dim() });
    }
    let sys = diagonalize(s)?;
    let coeffs = sys.coefficients(&vec(a));
    let n2 = coeffs.len();
    let cutoff = NEGLIGIBLE * a.op_norm();
    let mut modes = Vec::new();
    for group in cluster_sorted(&sys.eigenvalues, tol_cluster) {
        let mut v = DVector::from_element(n2, C64::new(0.0, 0.0));
        match &sys.basis {
            EigenBasis::Permutation(order) => {
                for &k in &group {
                    v[order[k]] = coeffs[k];
                }
            }
            EigenBasis::Dense { vectors, .. } => {
                for &k in &group {
                    v.axpy(coeffs[k], &vectors.column(k), C64::new(1.0, 0.0));
                }
            }
        }
        if v.iter().all(|z| *z == C64::new(0.0, 0.0)) {
            continue;
        }
        let mode = BohrMode::new(mean(&sys.eigenvalues, &group), unvec(&v)?, ModeSource::Eig, tol_re);
        if mode.magnitude > cutoff {
            modes.push(mode);
        }
    }
    Ok(SpectralDecomposition::assemble(a, modes, false))
}

/// Exact Bohr decomposition of `a` from the eigensystem of `δ`.
pub fn exact_modes(delta: &TwistedDerivation, a: &ComplexMatrix, tol_re: f64, tol_cluster: f64) -> Result<SpectralDecomposition> {
    superop_modes(delta.superop(), a, tol_re, tol_cluster)
}

fn check_average(r: f64, steps: usize) -> Result<UniformGrid> {
    if steps < MIN_STEPS {
        return Err(HomLieError::InvalidArgument(format!("Bohr averages need at least {MIN_STEPS} steps, got {steps}")));
    }
    UniformGrid::new(r, steps)
}

/// `(1/2R) ∫_{-R}^{R} e^{-λt} T(t)a dt` by the trapezoid rule.
pub fn bohr_coefficient(delta: &TwistedDerivation, a: &ComplexMatrix, lambda: C64, r: f64, steps: usize) -> Result<ComplexMatrix> {
    let grid = check_average(r, steps)?;
    Ok(weighted_means(delta, a, &[lambda], &grid)?.remove(0))
}

/// The `λ = 0` time mean.
pub fn mean_ergodic_projection(delta: &TwistedDerivation, a: &ComplexMatrix, r: f64, steps: usize) -> Result<ComplexMatrix> {
    bohr_coefficient(delta, a, C64::new(0.0, 0.0), r, steps)
}

/// One averaged coefficient per candidate frequency; the residual is `a`
/// minus their sum.
pub fn decompose_by_average(
    delta: &TwistedDerivation,
    a: &ComplexMatrix,
    candidates: &[C64],
    r: f64,
    steps: usize,
) -> Result<SpectralDecomposition> {
    let grid = check_average(r, steps)?;
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|x, y| x.im.total_cmp(&y.im).then(x.re.total_cmp(&y.re)));
    if cluster_sorted(&sorted, DEFAULT_TOL_CLUSTER).len() != sorted.len() {
        return Err(HomLieError::InvalidArgument("candidate frequencies must be pairwise distinct".into()));
    }
    let coeffs = weighted_means(delta, a, candidates, &grid)?;
    let modes = candidates
        .iter()
        .zip(coeffs)
        .map(|(&l, c)| BohrMode::new(l, c, ModeSource::Average, DEFAULT_TOL_RE))
        .collect();
    Ok(SpectralDecomposition::assemble(a, modes, true))
}

/// Scan range for [`detect_frequencies`]: `β = min, min + step, ..., ≤ max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl FrequencyGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.max >= self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(HomLieError::InvalidArgument(format!("bad frequency grid {self:?}")));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| self.min + k as f64 * self.step).collect())
    }
}

/// Hann-windowed averages `Σ w_n h(t_n) e^{-iβt_n} T(t_n)a / Σ w_n h(t_n)`
/// with `h(t) = (1 + cos(πt/R))/2`. A pure mode at `iβ` is returned exactly;
/// leakage from a mode at distance `Δ` falls off like `(ΔR)^{-3}`.
pub fn hann_means(delta: &TwistedDerivation, a: &ComplexMatrix, betas: &[f64], r: f64, steps: usize) -> Result<Vec<ComplexMatrix>> {
    let time_grid = check_average(r, steps)?;
    let weights = trapezoid_weights(steps);
    let hann = |t: f64| 0.5 * (1.0 + (std::f64::consts::PI * t / r).cos());
    let norm: f64 = time_grid.times().zip(&weights).map(|(t, w)| w * hann(t)).sum();

    // phases e^{-iβt} advance by a fixed rotation per step
    let h = time_grid.spacing();
    let mut acc = vec![ComplexMatrix::zeros(a.dim()); betas.len()];
    let mut phase: Vec<C64> = betas.iter().map(|&b| C64::new(0.0, -b * time_grid.time(0)).exp()).collect();
    let rot: Vec<C64> = betas.iter().map(|&b| C64::new(0.0, -b * h).exp()).collect();
    visit_flow(delta, a, &time_grid, |n, t, state| {
        let w = weights[n] * hann(t) / norm;
        for k in 0..betas.len() {
            // re-anchor the phase periodically against drift
            if n % 256 == 0 {
                phase[k] = C64::new(0.0, -betas[k] * t).exp();
            }
            acc[k] += &state.scale(phase[k] * w);
            phase[k] *= rot[k];
        }
        Ok(())
    })?;
    Ok(acc)
}

/// Imaginary frequencies `iβ` whose windowed coefficient exceeds `threshold`
/// in operator norm, sorted by `β`.
///
/// Hann-windowed averages are scanned over the grid, each local maximum
/// above `threshold/2` is refined with a parabola through its neighbours,
/// and the refined peak is kept when its windowed coefficient exceeds
/// `threshold`. Hann sidelobes stay below 3% of the neighbouring peak.
pub fn detect_frequencies(
    delta: &TwistedDerivation,
    a: &ComplexMatrix,
    grid: FrequencyGrid,
    r: f64,
    steps: usize,
    threshold: f64,
) -> Result<Vec<C64>> {
    let betas = grid.points()?;
    let mags: Vec<f64> = hann_means(delta, a, &betas, r, steps)?.iter().map(|m| m.op_norm()).collect();

    let mut peaks = Vec::new();
    for j in 0..betas.len() {
        let left = if j > 0 { mags[j - 1] } else { f64::NEG_INFINITY };
        let right = if j + 1 < betas.len() { mags[j + 1] } else { f64::NEG_INFINITY };
        if !(mags[j] >= left && mags[j] > right) || mags[j] <= 0.5 * threshold {
            continue;
        }
        let mut beta = betas[j];
        if j > 0 && j + 1 < betas.len() {
            let denom = left - 2.0 * mags[j] + right;
            if denom < 0.0 {
                beta += (0.5 * (left - right) / denom).clamp(-0.5, 0.5) * grid.step;
            }
        }
        peaks.push(beta);
    }
    if peaks.is_empty() {
        return Ok(Vec::new());
    }
    let confirmed = hann_means(delta, a, &peaks, r, steps)?;
    let mut out: Vec<C64> = peaks
        .into_iter()
        .zip(confirmed)
        .filter(|(_, c)| c.op_norm() > threshold)
        .map(|(b, _)| C64::new(0.0, b))
        .collect();
    out.sort_by(|x, y| x.im.total_cmp(&y.im));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceLabel {
    Ap,
    Erg,
}

/// Orthonormal basis (trace inner product) of a subspace of `M_N(C)`, kept as
/// the columns of an `N^2 x dim` matrix of vectorizations.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    pub label: SubspaceLabel,
    n: usize,
    q: DMatrix<C64>,
}

impl SubspaceBasis {
    /// Orthonormalizes the span of `columns` (vectorized matrices), dropping
    /// directions below `1e-10` of the largest singular value.
    pub fn from_columns(label: SubspaceLabel, n: usize, columns: DMatrix<C64>) -> Self {
        let q = orthonormal_span(columns, n * n);
        Self { label, n, q }
    }

    pub fn from_matrices(label: SubspaceLabel, n: usize, mats: &[ComplexMatrix]) -> Self {
        let mut cols = DMatrix::from_element(n * n, mats.len(), C64::new(0.0, 0.0));
        for (j, m) in mats.iter().enumerate() {
            cols.set_column(j, &vec(m));
        }
        Self::from_columns(label, n, cols)
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    pub fn matrix_dim(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &DMatrix<C64> {
        &self.q
    }

    pub fn basis(&self) -> Vec<ComplexMatrix> {
        self.q.column_iter().map(|c| unvec(&c.into_owned()).expect("square")).collect()
    }

    /// `|G - I|_F` for the Gram matrix `G`.
    pub fn gram_defect(&self) -> f64 {
        let k = self.dim();
        (self.q.adjoint() * &self.q - DMatrix::<C64>::identity(k, k)).norm()
    }

    /// Trace-norm distance from `x` to the span.
    pub fn projection_residual(&self, x: &ComplexMatrix) -> f64 {
        let v = vec(x);
        let coeffs = self.q.adjoint() * &v;
        (v - &self.q * coeffs).norm()
    }

    /// Random complex-normal combination of the basis.
    pub fn sample(&self, rng: &mut SeededRng) -> ComplexMatrix {
        let c = DVector::from_fn(self.dim(), |_, _| complex_normal(rng));
        unvec(&(&self.q * c)).expect("square")
    }
}

fn orthonormal_span(columns: DMatrix<C64>, rows: usize) -> DMatrix<C64> {
    if columns.ncols() == 0 {
        return DMatrix::from_element(rows, 0, C64::new(0.0, 0.0));
    }
    // unit vectors (the matrix-unit basis) need no factorization
    let mut units = Vec::with_capacity(columns.ncols());
    for c in columns.column_iter() {
        let nz: Vec<usize> = (0..c.len()).filter(|&i| c[i] != C64::new(0.0, 0.0)).collect();
        if nz.len() != 1 {
            units.clear();
            break;
        }
        units.push(nz[0]);
    }
    if units.len() == columns.ncols() {
        units.sort_unstable();
        units.dedup();
        let mut q = DMatrix::from_element(rows, units.len(), C64::new(0.0, 0.0));
        for (j, &i) in units.iter().enumerate() {
            q[(i, j)] = C64::new(1.0, 0.0);
        }
        return q;
    }
    let svd = columns.svd(true, false);
    let u = svd.u.expect("requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-10 * smax && smax > 0.0)
        .collect();
    DMatrix::from_fn(rows, keep.len(), |i, j| u[(i, keep[j])])
}

/// The almost-periodic span, the zero-mean span, eigenvalues outside both,
/// and the principal angles between the two spans.
#[derive(Clone, Debug)]
pub struct ApErgSplit {
    pub ap: SubspaceBasis,
    pub erg: SubspaceBasis,
    /// Eigenvalues with `Re λ > tol_re`, in spectral order.
    pub growing: Vec<C64>,
    /// Principal angles (radians, ascending) between `ap` and `erg`.
    pub principal_angles: Vec<f64>,
    /// Number of principal angles below `1e-8`.
    pub overlap_dim: usize,
}

/// Splits `M_N(C)` by eigenvalue class of `δ`: `ap` spans eigenvectors with
/// `|Re λ| ≤ tol_re`; `erg` spans those that are not at `λ = 0` and not
/// growing.
pub fn ap_erg_split(delta: &TwistedDerivation, tol_re: f64) -> Result<ApErgSplit> {
    split_superop(delta.superop(), tol_re)
}

/// [`ap_erg_split`] for an arbitrary superoperator.
pub fn split_superop(s: &SuperOperator, tol_re: f64) -> Result<ApErgSplit> {
    let n = s.dim();
    let sys = diagonalize(s)?;
    let mut ap_idx = Vec::new();
    let mut erg_idx = Vec::new();
    let mut growing = Vec::new();
    for (k, &l) in sys.eigenvalues.iter().enumerate() {
        match ModeTag::classify(l, tol_re) {
            ModeTag::Zero => ap_idx.push(k),
            ModeTag::Imaginary => {
                ap_idx.push(k);
                erg_idx.push(k);
            }
            ModeTag::Decaying => erg_idx.push(k),
            ModeTag::Growing => growing.push(l),
        }
    }
    let gather = |idx: &[usize]| {
        let mut cols = DMatrix::from_element(n * n, idx.len(), C64::new(0.0, 0.0));
        for (j, &k) in idx.iter().enumerate() {
            cols.set_column(j, &sys.vector(k));
        }
        cols
    };
    let ap = SubspaceBasis::from_columns(SubspaceLabel::Ap, n, gather(&ap_idx));
    let erg = SubspaceBasis::from_columns(SubspaceLabel::Erg, n, gather(&erg_idx));
    let principal_angles = principal_angles(&ap, &erg);
    let overlap_dim = principal_angles.iter().filter(|&&a| a < 1e-8).count();
    Ok(ApErgSplit { ap, erg, growing, principal_angles, overlap_dim })
}

/// Principal angles between two spans, ascending.
pub fn principal_angles(a: &SubspaceBasis, b: &SubspaceBasis) -> Vec<f64> {
    if a.dim() == 0 || b.dim() == 0 {
        return Vec::new();
    }
    let m = a.columns().adjoint() * b.columns();
    let mut angles: Vec<f64> = m
        .singular_values()
        .iter()
        .map(|&s| s.clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// Samples pairs from the span and reports the largest relative component of
/// `[a,b]_α`, `α(a)` and `δ(a)` orthogonal to it.
pub fn bracket_stability_check(
    delta: &TwistedDerivation,
    basis: &SubspaceBasis,
    alpha: &TwistMap,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<IdentityReport> {
    let name = "bracket_stability";
    if basis.dim() == 0 {
        return Ok(IdentityReport::vacuous(name, samples, seed, tol));
    }
    let dnorm = superop_norm(delta.superop());
    IdentityReport::sample(name, samples, seed, tol, |rng| {
        let (a, b) = (basis.sample(rng), basis.sample(rng));
        let (na, nb) = (a.frobenius_norm(), b.frobenius_norm());
        let bracket = basis.projection_residual(&twisted_bracket(alpha, &a, &b)?) / (na * nb);
        let twisted = basis.projection_residual(&alpha.apply(&a)?) / na;
        let derived = if dnorm > 0.0 { basis.projection_residual(&delta.apply(&a)?) / (dnorm * na) } else { 0.0 };
        Ok(bracket.max(twisted).max(derived))
    })
}

/// Relative component of `α(a)` orthogonal to the span, over sampled `a`.
pub fn twist_invariance_check(basis: &SubspaceBasis, alpha: &TwistMap, samples: usize, seed: u64, tol: f64) -> Result<IdentityReport> {
    let name = "twist_invariance";
    if basis.dim() == 0 {
        return Ok(IdentityReport::vacuous(name, samples, seed, tol));
    }
    IdentityReport::sample(name, samples, seed, tol, |rng| {
        let a = basis.sample(rng);
        Ok(basis.projection_residual(&alpha.apply(&a)?) / a.frobenius_norm())
    })
}

/// Number of random summation orders compared by [`permutation_invariance_check`].
pub const PERMUTATIONS: usize = 10;

/// Re-sums the modes in random orders and reports the largest pairwise
/// difference relative to `Σ |a_λ|`.
pub fn permutation_invariance_check(d: &SpectralDecomposition, seed: u64) -> Result<IdentityReport> {
    let name = "permutation_invariance";
    let tol = 1e-12;
    if d.is_empty() {
        return Ok(IdentityReport::vacuous(name, PERMUTATIONS, seed, tol));
    }
    let dim = d.modes[0].coefficient.dim();
    let scale = if d.abs_sum > 0.0 { d.abs_sum } else { 1.0 };
    let mut sums: Vec<ComplexMatrix> = Vec::with_capacity(PERMUTATIONS);
    let mut order: Vec<usize> = (0..d.len()).collect();
    IdentityReport::sample(name, PERMUTATIONS, seed, tol, |rng| {
        order.shuffle(rng);
        let mut s = ComplexMatrix::zeros(dim);
        for &k in &order {
            s += &d.modes[k].coefficient;
        }
        let worst = sums.iter().map(|p| (p - &s).op_norm()).fold(0.0, f64::max);
        sums.push(s);
        Ok(worst / scale)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_derivation, flow, DEFAULT_PREFACTOR};
    use crate::linalg::random::{random_matrix, seeded_rng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn lattice(n: usize, w: f64) -> TwistedDerivation {
        let x = ComplexMatrix::diagonal(&(0..n).map(|k| c(k as f64 * w, 0.0)).collect::<Vec<_>>());
        build_derivation(TwistMap::identity(n), x, DEFAULT_PREFACTOR).unwrap()
    }

    fn shift_modes(n: usize) -> (ComplexMatrix, ComplexMatrix) {
        let mut upper = ComplexMatrix::zeros(n);
        for k in 0..n - 1 {
            upper.set(k, k + 1, c(1.0, 0.0));
        }
        (upper, ComplexMatrix::matrix_unit(n, n - 1, 0))
    }

    #[test]
    fn lattice_shift_has_two_modes() {
        let (n, w) = (8, 2f64.sqrt() / 10.0);
        let d = lattice(n, w);
        let s = ComplexMatrix::cyclic_shift(n);
        let dec = exact_modes(&d, &s, DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER).unwrap();
        assert_eq!(dec.len(), 2);
        let (upper, corner) = shift_modes(n);
        let by_freq = dec.modes_by_frequency();
        assert!((by_freq[0].lambda - c(0.0, -w)).norm() < 1e-15);
        assert_eq!(by_freq[0].coefficient, upper);
        assert!((by_freq[1].lambda - c(0.0, (n - 1) as f64 * w)).norm() < 1e-14);
        assert_eq!(by_freq[1].coefficient, corner);
        assert!(dec.modes.iter().all(|m| m.tag == ModeTag::Imaginary));
        assert_eq!(dec.residual, ComplexMatrix::zeros(n));
        assert_eq!(dec.abs_sum, 2.0);
    }

    #[test]
    fn identity_is_a_zero_mode() {
        let d = lattice(4, 0.3);
        let dec = exact_modes(&d, &ComplexMatrix::identity(4), DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER).unwrap();
        assert_eq!(dec.len(), 1);
        assert_eq!(dec.modes[0].lambda, c(0.0, 0.0));
        assert_eq!(dec.modes[0].tag, ModeTag::Zero);
        assert_eq!(dec.modes[0].coefficient, ComplexMatrix::identity(4));
    }

    #[test]
    fn defective_operator_is_rejected() {
        let s = SuperOperator::from_dense(
            1,
            DMatrix::from_element(1, 1, c(0.0, 0.0)),
        )
        .unwrap();
        assert!(superop_modes(&s, &ComplexMatrix::identity(1), 1e-8, 1e-8).is_ok());
        // a Jordan block acting on M_2
        let mut m = DMatrix::from_element(4, 4, c(0.0, 0.0));
        m[(0, 1)] = c(1.0, 0.0);
        m[(2, 2)] = c(0.5, 0.0);
        m[(3, 3)] = c(-0.5, 0.0);
        let s = SuperOperator::from_dense(2, m).unwrap();
        match superop_modes(&s, &ComplexMatrix::identity(2), 1e-8, 1e-8) {
            Err(HomLieError::Defective { cluster, multiplicity, .. }) => {
                assert!(cluster.norm() < 1e-6);
                assert_eq!(multiplicity, 2);
            }
            other => panic!("expected defective error, got {other:?}"),
        }
    }

    #[test]
    fn eigenrelation_on_dense_modes() {
        let mut rng = seeded_rng(17);
        let u = crate::linalg::random::random_unitary(3, &mut rng);
        let x = crate::linalg::random::random_hermitian(3, &mut rng);
        let d = build_derivation(TwistMap::unitary(u).unwrap(), x, DEFAULT_PREFACTOR).unwrap();
        let a = random_matrix(3, &mut rng);
        let dec = exact_modes(&d, &a, DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER).unwrap();
        assert!(dec.reconstruction_error < 1e-10 * a.op_norm());
        for m in &dec.modes {
            for t in [0.1, 1.0, 5.0] {
                let lhs = flow(&d, t, &m.coefficient).unwrap();
                let rhs = m.coefficient.scale((m.lambda * t).exp());
                assert!((&lhs - &rhs).op_norm() <= 1e-8 * (m.magnitude + rhs.op_norm()));
            }
        }
        // triangle inequality between the AP part and the absolute sum
        assert!(dec.abs_sum >= (&a - &dec.residual).op_norm() - 1e-12);
    }

    #[test]
    fn coefficient_of_zero_generator_is_input() {
        let d = build_derivation(TwistMap::identity(3), ComplexMatrix::zeros(3), DEFAULT_PREFACTOR).unwrap();
        let a = random_matrix(3, &mut seeded_rng(1));
        let got = bohr_coefficient(&d, &a, c(0.0, 0.0), 10.0, 101).unwrap();
        assert!((&got - &a).op_norm() < 1e-13 * a.op_norm());
        assert!(bohr_coefficient(&d, &a, c(0.0, 0.0), 10.0, 10).is_err());
    }

    #[test]
    fn single_mode_coefficients() {
        // T(t)E_10 = e^{iωt}E_10
        let w = 0.9;
        let d = lattice(2, w);
        let e10 = ComplexMatrix::matrix_unit(2, 1, 0);
        let on = bohr_coefficient(&d, &e10, c(0.0, w), 50.0, 401).unwrap();
        assert!((&on - &e10).op_norm() < 1e-12);
        for r in [20.0, 80.0, 320.0] {
            let off = mean_ergodic_projection(&d, &e10, r, 4001).unwrap();
            assert!(off.op_norm() <= 2.0 / (w * r) + 1e-6, "R = {r}");
        }
    }

    #[test]
    fn mean_projection_extracts_zero_mode() {
        let d = lattice(3, 0.7);
        let mut a = ComplexMatrix::identity(3).scale(c(2.0, -1.0));
        a += &ComplexMatrix::matrix_unit(3, 0, 1);
        a += &ComplexMatrix::matrix_unit(3, 2, 1).scale(c(0.0, 3.0));
        let r = 400.0;
        let p = mean_ergodic_projection(&d, &a, r, 8001).unwrap();
        let target = ComplexMatrix::identity(3).scale(c(2.0, -1.0));
        // (1/2R)|∫ e^{iωt}| ≤ 1/(|ω|R) per oscillating component, weights 1 and 3
        let bound = (1.0 + 3.0) / (0.7 * r);
        assert!((&p - &target).op_norm() <= bound);
        let pp = mean_ergodic_projection(&d, &p, r, 8001).unwrap();
        assert!((&pp - &p).op_norm() <= bound);
    }

    #[test]
    fn averaged_decomposition_of_shift() {
        let (n, w) = (8, 2f64.sqrt() / 10.0);
        let d = lattice(n, w);
        let s = ComplexMatrix::cyclic_shift(n);
        let exact = exact_modes(&d, &s, DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER).unwrap();
        let cands = exact.frequencies();
        let mut last = f64::INFINITY;
        for r in [50.0, 100.0, 200.0, 400.0] {
            let avg = decompose_by_average(&d, &s, &cands, r, DEFAULT_STEPS).unwrap();
            assert!(avg.modes.iter().all(|m| m.source == ModeSource::Average));
            assert!(avg.reconstruction_error < last);
            last = avg.reconstruction_error;
        }
        let none = decompose_by_average(&d, &s, &[], 50.0, 101).unwrap();
        assert_eq!(none.residual, s);
        assert!(decompose_by_average(&d, &s, &[c(0.0, 1.0), c(0.0, 1.0)], 50.0, 101).is_err());
    }

    #[test]
    fn detection_examples() {
        let w = 0.6;
        let d = lattice(2, w);
        let e10 = ComplexMatrix::matrix_unit(2, 1, 0);
        let grid = FrequencyGrid { min: -2.0, max: 2.0, step: 0.01 };
        let found = detect_frequencies(&d, &e10, grid, 200.0, 4001, 0.05).unwrap();
        assert_eq!(found.len(), 1);
        assert!((found[0].im - w).abs() <= grid.step / 2.0);
        assert!(detect_frequencies(&d, &ComplexMatrix::zeros(2), grid, 200.0, 4001, 0.05).unwrap().is_empty());

        // two modes 4π/R apart
        let r = 200.0;
        let gap = 4.0 * std::f64::consts::PI / r;
        let x = ComplexMatrix::diagonal(&[c(0.0, 0.0), c(0.5, 0.0), c(0.5 + gap, 0.0)]);
        let d = build_derivation(TwistMap::identity(3), x, DEFAULT_PREFACTOR).unwrap();
        let mut a = ComplexMatrix::matrix_unit(3, 1, 0);
        a += &ComplexMatrix::matrix_unit(3, 2, 0);
        let grid = FrequencyGrid { min: 0.0, max: 1.0, step: gap / 8.0 };
        let found = detect_frequencies(&d, &a, grid, r, 4001, 0.3).unwrap();
        assert_eq!(found.len(), 2, "{found:?}");
        assert!((found[0].im - 0.5).abs() < grid.step);
        assert!((found[1].im - 0.5 - gap).abs() < grid.step);
        assert!(FrequencyGrid { min: 0.0, max: 1.0, step: 0.0 }.points().is_err());

        // sidelobes of a strong mode are not reported
        let s = ComplexMatrix::cyclic_shift(8);
        let d = lattice(8, 0.14142135623730951);
        let grid = FrequencyGrid { min: -1.1, max: 1.1, step: std::f64::consts::PI / (2.0 * r) };
        let found = detect_frequencies(&d, &s, grid, r, 4001, 0.05).unwrap();
        assert_eq!(found.len(), 2, "{found:?}");
    }

    #[test]
    fn hann_mean_recovers_pure_mode() {
        let d = lattice(2, 0.6);
        let e10 = ComplexMatrix::matrix_unit(2, 1, 0);
        let m = hann_means(&d, &e10, &[0.6, 0.0], 200.0, 4001).unwrap();
        assert!((&m[0] - &e10).op_norm() < 1e-12);
        // distance 0.6 is about 38 kernel widths: leakage of order (ΔR)^-3
        assert!(m[1].op_norm() < 1e-5);
    }

    #[test]
    fn lattice_split_overlaps() {
        let n = 4;
        let d = lattice(n, 0.37);
        let split = ap_erg_split(&d, DEFAULT_TOL_RE).unwrap();
        assert_eq!(split.ap.dim(), n * n);
        assert_eq!(split.erg.dim(), n * n - n);
        assert!(split.growing.is_empty());
        assert_eq!(split.overlap_dim, n * n - n);
        assert!(split.ap.gram_defect() < 1e-10 && split.erg.gram_defect() < 1e-10);

        let ap_check = bracket_stability_check(&d, &split.ap, d.alpha(), 50, 3, 1e-10).unwrap();
        assert!(ap_check.pass);
        let erg_check = bracket_stability_check(&d, &split.erg, d.alpha(), 50, 3, 1e-10).unwrap();
        assert!(!erg_check.pass);
        assert!(erg_check.max_defect > 1e-3);
    }

    #[test]
    fn zero_derivation_split() {
        let d = build_derivation(TwistMap::identity(3), ComplexMatrix::zeros(3), DEFAULT_PREFACTOR).unwrap();
        let split = ap_erg_split(&d, DEFAULT_TOL_RE).unwrap();
        assert_eq!(split.ap.dim(), 9);
        assert_eq!(split.erg.dim(), 0);
        let r = bracket_stability_check(&d, &split.erg, d.alpha(), 10, 1, 1e-10).unwrap();
        assert!(r.pass && r.max_defect == 0.0);
    }

    #[test]
    fn synthetic_general_split() {
        // eigenvalue i on a 2-dim eigenspace, -1 on the rest, in a skewed basis
        let mut rng = seeded_rng(77);
        let v = random_matrix(4, &mut rng).into_dmatrix();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, 1.0), c(0.0, 1.0), c(-1.0, 0.0), c(-1.0, 0.0)]));
        let s = SuperOperator::from_dense(2, &v * lam * v.clone().try_inverse().unwrap()).unwrap();
        let split = split_superop(&s, DEFAULT_TOL_RE).unwrap();
        assert_eq!(split.ap.dim(), 2);
        assert_eq!(split.erg.dim(), 4);
        assert!(split.growing.is_empty());
        assert_eq!(split.overlap_dim, 2);
        // ap is the i-eigenspace
        let dense = s.to_dense();
        for col in split.ap.columns().column_iter() {
            let r = &dense * col - col * c(0.0, 1.0);
            assert!(r.norm() < 1e-10);
        }
    }

    #[test]
    fn permutation_invariance() {
        let d = lattice(3, 0.5);
        let a = random_matrix(3, &mut seeded_rng(5));
        let dec = exact_modes(&d, &a, DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER).unwrap();
        let r = permutation_invariance_check(&dec, 9).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.samples, PERMUTATIONS);
        let empty = SpectralDecomposition::assemble(&a, Vec::new(), true);
        assert!(permutation_invariance_check(&empty, 1).unwrap().pass);
    }

    #[test]
    fn serialized_order_and_schema() {
        let (n, w) = (8, 2f64.sqrt() / 10.0);
        let d = lattice(n, w);
        let dec = exact_modes(&d, &ComplexMatrix::cyclic_shift(n), DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER).unwrap();
        let report = dec.report(DEFAULT_PREFACTOR, 42);
        let v = serde_json::to_value(&report).unwrap();
        let modes = v["modes"].as_array().unwrap();
        assert!(modes[0]["lambda"]["im"].as_f64().unwrap() < modes[1]["lambda"]["im"].as_f64().unwrap());
        assert_eq!(modes[0]["tag"], "imaginary");
        assert_eq!(v["prefactor"]["im"], 1.0);
        assert_eq!(v["seed"], 42);
        let csv = dec.coefficients_csv();
        assert_eq!(csv.header, ["mode", "row", "col", "re", "im"]);
        assert_eq!(csv.rows.len(), 2 * n * n);
    }

    #[test]
    fn clustering_merges_close_values() {
        let v = [c(0.0, -1.0), c(1.0, 0.0), c(1.0 + 1e-10, 0.0), c(0.0, 5e-9), c(0.0, 1.0)];
        let mut sorted = v.to_vec();
        sorted.sort_by(|x, y| x.im.total_cmp(&y.im).then(x.re.total_cmp(&y.re)));
        let groups = cluster_sorted(&sorted, 1e-8);
        assert_eq!(groups.len(), 4);
        assert!(groups.iter().any(|g| g.len() == 2));
    }
}
