//! Finite truncations of the standard examples: the Hermitian frequency
//! lattice, the conjugation-twisted shift experiment, UHF tensor shifts,
//! weighted shifts and the sheared Weyl algebra, plus the scaling study.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bohr::{cluster_sorted, exact_modes, ModeTag, DEFAULT_TOL_CLUSTER, DEFAULT_TOL_RE};
use crate::dynamics::{build_derivation, flow, TwistedDerivation, DEFAULT_PREFACTOR};
use crate::error::{HomLieError, Result};
use crate::homalgebra::{pauli, TwistMap};
use crate::linalg::random::{random_matrix, seeded_rng};
use crate::linalg::{eig, expm_matrix, ComplexMatrix, EigenSystem, UniformGrid, C64};
use crate::report::{fmt_float, CsvTable, JsonComplex};

const ONE: C64 = C64::new(1.0, 0.0);

/// A derivation, an initial element and what is known about its spectrum.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub delta: TwistedDerivation,
    pub a0: ComplexMatrix,
    pub expected_frequencies: Option<Vec<C64>>,
    pub provenance: String,
    pub notes: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub dim: usize,
    pub twist: &'static str,
    pub prefactor: JsonComplex,
    pub expected_frequencies: Option<Vec<JsonComplex>>,
    pub provenance: String,
    pub notes: String,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.a0.dim()
    }

    pub fn meta(&self) -> ScenarioMeta {
        ScenarioMeta {
            name: self.name.clone(),
            dim: self.dim(),
            twist: self.delta.alpha().name(),
            prefactor: self.delta.prefactor().into(),
            expected_frequencies: self.expected_frequencies.as_ref().map(|v| v.iter().map(|&z| z.into()).collect()),
            provenance: self.provenance.clone(),
            notes: self.notes.clone(),
        }
    }
}

fn real_diag(values: impl Iterator<Item = f64>) -> ComplexMatrix {
    ComplexMatrix::diagonal(&values.map(|v| C64::new(v, 0.0)).collect::<Vec<_>>())
}

fn phase_diag(values: impl Iterator<Item = f64>) -> ComplexMatrix {
    ComplexMatrix::diagonal(&values.map(|v| C64::new(0.0, v).exp()).collect::<Vec<_>>())
}

fn invalid(msg: String) -> HomLieError {
    HomLieError::InvalidArgument(msg)
}

/// `α = id`, `X = diag(kω)`, prefactor `i`, `a0 = S`: the orbit of `S` has
/// frequencies `-iω` and `i(N-1)ω`.
pub fn hermitian_lattice(n: usize, omega: f64) -> Result<Scenario> {
    if n < 2 {
        return Err(invalid(format!("lattice needs N >= 2, got {n}")));
    }
    if omega == 0.0 || !omega.is_finite() {
        return Err(invalid(format!("lattice needs a finite nonzero omega, got {omega}")));
    }
    let x = real_diag((0..n).map(|k| k as f64 * omega));
    let delta = build_derivation(TwistMap::identity(n), x, DEFAULT_PREFACTOR)?;
    Ok(Scenario {
        name: "hermitian".into(),
        delta,
        a0: ComplexMatrix::cyclic_shift(n),
        expected_frequencies: Some(vec![C64::new(0.0, -omega), C64::new(0.0, (n - 1) as f64 * omega)]),
        provenance: "derived: delta(E_jk) = i(x_j - x_k) E_jk with x_k = k omega".into(),
        notes: "a generic a0 has frequencies {i m omega : |m| <= N-1}".into(),
    })
}

/// Full frequency lattice `{imω : |m| ≤ N-1}` of the Hermitian lattice.
pub fn lattice_frequencies(n: usize, omega: f64) -> Vec<C64> {
    let m = n as i64 - 1;
    (-m..=m).map(|k| C64::new(0.0, k as f64 * omega)).collect()
}

/// `μ_jk = e^{2πi(j-k)ω}(e^{ijω} - e^{ikω})`.
pub fn sec8_mu(j: usize, k: usize, omega: f64) -> C64 {
    let (j, k) = (j as f64, k as f64);
    C64::new(0.0, 2.0 * PI * (j - k) * omega).exp() * (C64::new(0.0, j * omega).exp() - C64::new(0.0, k * omega).exp())
}

/// `α = Ad(diag(e^{2πikω}))`, `X = diag(e^{ikω})`, prefactor 1, `a0 = S`.
pub fn sec8(n: usize, omega: f64) -> Result<Scenario> {
    if n < 2 {
        return Err(invalid(format!("shift experiment needs N >= 2, got {n}")));
    }
    let u = phase_diag((0..n).map(|k| 2.0 * PI * k as f64 * omega));
    let x = phase_diag((0..n).map(|k| k as f64 * omega));
    let delta = build_derivation(TwistMap::unitary(u)?, x, ONE)?;
    Ok(Scenario {
        name: "sec8".into(),
        delta,
        a0: ComplexMatrix::cyclic_shift(n),
        expected_frequencies: Some((0..n).map(|k| sec8_mu(k, (k + 1) % n, omega)).collect()),
        provenance: "derived: closed form mu_{k,k+1 mod N} on the matrix units of S".into(),
        notes: "X is unitary, not hermitian, so the spectrum leaves the imaginary axis".into(),
    })
}

/// Published Bohr table for the `(0,1)` entry: `(β, c_re, c_im, |c|)`.
pub const TABLE1: [(f64, f64, f64, f64); 4] = [
    (0.141, 0.102, -0.181, 0.208),
    (0.282, -0.055, 0.098, 0.112),
    (0.424, 0.021, -0.037, 0.043),
    (0.565, -0.008, 0.014, 0.016),
];

/// Published significant-mode counts per `N` (threshold `1e-3`).
pub const FIG1_MODE_COUNTS: [(usize, usize); 4] = [(8, 4), (16, 7), (32, 10), (64, 11)];
/// Published maximal top-4 reconstruction errors per `N`.
pub const FIG1_MAX_ERRORS: [(usize, f64); 4] = [(8, 7e-4), (16, 3e-4), (32, 1.5e-4), (64, 7e-5)];
/// Published power-law exponent of the error decay.
pub const FIG1_BETA: f64 = 1.2;
/// Published bound on the top-4 reconstruction error of the `(0,1)` entry.
pub const FIG3_ERROR_BOUND: f64 = 8e-4;

/// Cyclic tensor permutation `P` with `P (b_0 ⊗ ... ⊗ b_{m-1}) P* = b_1 ⊗ ... ⊗ b_0`.
/// Site 0 is the most significant bit of the basis index.
pub fn tensor_shift(m: usize) -> ComplexMatrix {
    let dim = 1usize << m;
    let mut p = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        // site k of the image holds site k+1 of the source
        let image = ((i << 1) & (dim - 1)) | (i >> (m - 1));
        p.set(image, i, ONE);
    }
    p
}

/// Kronecker product.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim(), b.dim());
    ComplexMatrix::from_fn(na * nb, |i, j| a.get(i / nb, j / nb) * b.get(i % nb, j % nb))
}

pub fn kron_all(factors: &[ComplexMatrix]) -> ComplexMatrix {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = kron(&acc, f);
    }
    acc
}

pub const UHF_MAX_SITES: usize = 6;

/// `M_2^{⊗m}` with the cyclic tensor shift as twist, prefactor `i`, and
/// `X = σ_z^{⊗m}` (shift invariant) or `σ_z ⊗ I ⊗ ... ⊗ I`. The initial
/// element is `σ_x ⊗ I ⊗ ... ⊗ I`.
pub fn uhf(m: usize, shift_invariant: bool) -> Result<Scenario> {
    if !(2..=UHF_MAX_SITES).contains(&m) {
        return Err(invalid(format!("UHF truncation needs 2 <= m <= {UHF_MAX_SITES}, got {m}")));
    }
    let [sx, _, sz] = pauli();
    let id = ComplexMatrix::identity(2);
    let x_factors: Vec<ComplexMatrix> =
        (0..m).map(|k| if shift_invariant || k == 0 { sz.clone() } else { id.clone() }).collect();
    let a_factors: Vec<ComplexMatrix> = (0..m).map(|k| if k == 0 { sx.clone() } else { id.clone() }).collect();
    let delta = build_derivation(TwistMap::unitary(tensor_shift(m))?, kron_all(&x_factors), DEFAULT_PREFACTOR)?;
    Ok(Scenario {
        name: "uhf".into(),
        delta,
        a0: kron_all(&a_factors),
        expected_frequencies: None,
        provenance: "cyclic tensor shift on m sites".into(),
        notes: if shift_invariant {
            "X is shift invariant, so alpha commutes with delta".into()
        } else {
            "X is not shift invariant; alpha and delta do not commute".into()
        },
    })
}

/// Cyclic weighted shift `W e_n = w_n e_{n+1 mod N}`.
pub fn weighted_shift_matrix(weights: &[C64]) -> Result<ComplexMatrix> {
    let n = weights.len();
    if n < 2 {
        return Err(invalid(format!("weighted shift needs N >= 2, got {n}")));
    }
    let mut w = ComplexMatrix::zeros(n);
    for (k, &wk) in weights.iter().enumerate() {
        let modulus = wk.norm();
        if (modulus - 1.0).abs() > 1e-12 {
            return Err(HomLieError::NonUnimodularWeight { index: k, modulus });
        }
        w.set((k + 1) % n, k, wk);
    }
    Ok(w)
}

/// `α = Ad(W)` for a unimodular weighted shift. By default `X = diag(θn)`
/// with prefactor `i`; with `unitary_x`, `X = diag(e^{iθn})` with prefactor 1.
pub fn weighted_shift(theta: f64, weights: &[C64], unitary_x: bool) -> Result<Scenario> {
    let n = weights.len();
    let w = weighted_shift_matrix(weights)?;
    let (x, prefactor) = if unitary_x {
        (phase_diag((0..n).map(|k| theta * k as f64)), ONE)
    } else {
        (real_diag((0..n).map(|k| theta * k as f64)), DEFAULT_PREFACTOR)
    };
    let delta = build_derivation(TwistMap::unitary(w.clone())?, x, prefactor)?;
    Ok(Scenario {
        name: "weighted-shift".into(),
        delta,
        a0: w,
        expected_frequencies: None,
        provenance: "cyclic truncation of a unitary weighted shift".into(),
        notes: "W does not commute with diagonal X; the spectrum is computed, not predicted".into(),
    })
}

/// Truncated annihilation operator on `n` Fock levels, `a|k> = sqrt(k)|k-1>`.
pub fn annihilation(n: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(n);
    for k in 1..n {
        a.set(k - 1, k, C64::new((k as f64).sqrt(), 0.0));
    }
    a
}

/// Truncated canonical pair `(q, p)`.
pub fn canonical_pair(n: usize) -> (ComplexMatrix, ComplexMatrix) {
    let a = annihilation(n);
    let ad = a.adjoint();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let q = (&a + &ad).scale_real(s);
    let p = (&ad - &a).scale(C64::new(0.0, s));
    (q, p)
}

/// `X = ω₁p² + ω₂q²` on `n` levels.
pub fn weyl_hamiltonian(n: usize, omega1: f64, omega2: f64) -> ComplexMatrix {
    let (q, p) = canonical_pair(n);
    &(&p * &p).scale_real(omega1) + &(&q * &q).scale_real(omega2)
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a
/// Hermitian matrix.
pub fn hermitian_eigen(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let se = h.as_dmatrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(h.dim(), h.dim(), |i, j| se.eigenvectors[(i, order[j])]);
    Ok((values, ComplexMatrix::from_dmatrix(vectors)?))
}

/// `|e_j><e_k|` for eigenvectors of a Hermitian matrix.
pub fn eigen_outer(vectors: &ComplexMatrix, j: usize, k: usize) -> ComplexMatrix {
    let n = vectors.dim();
    ComplexMatrix::from_fn(n, |r, c| vectors.get(r, j) * vectors.get(c, k).conj())
}

pub const WEYL_MIN_LEVELS: usize = 4;

/// Truncated Weyl algebra: `α = Ad(V_ε)` with `V_ε = exp(iεp²/2)`,
/// `X = ω₁p² + ω₂q²`, prefactor `i`, and `a0 = |e_0><e_1|` for the two lowest
/// eigenvectors of `X`.
pub fn weyl(n_max: usize, omega1: f64, omega2: f64, eps: f64) -> Result<Scenario> {
    if n_max < WEYL_MIN_LEVELS {
        return Err(invalid(format!("Weyl truncation needs n_max >= {WEYL_MIN_LEVELS}, got {n_max}")));
    }
    if !(omega1 > 0.0 && omega2 > 0.0) || !omega1.is_finite() || !omega2.is_finite() {
        return Err(invalid(format!("Weyl frequencies must be positive, got {omega1}, {omega2}")));
    }
    if !eps.is_finite() {
        return Err(invalid(format!("shear must be finite, got {eps}")));
    }
    let (_, p) = canonical_pair(n_max);
    let v = expm_matrix(&(&p * &p).scale(C64::new(0.0, 0.5)), eps)?;
    let x = weyl_hamiltonian(n_max, omega1, omega2);
    let (energies, vectors) = hermitian_eigen(&x)?;
    let delta = build_derivation(TwistMap::unitary(v)?, x, DEFAULT_PREFACTOR)?;
    let expected = if eps == 0.0 { Some(vec![C64::new(0.0, energies[0] - energies[1])]) } else { None };
    Ok(Scenario {
        name: "weyl".into(),
        delta,
        a0: eigen_outer(&vectors, 0, 1),
        expected_frequencies: expected,
        provenance: "truncated Fock space; shear implemented by the metaplectic unitary exp(i eps p^2/2)".into(),
        notes: "modes supported on the top two Fock levels are truncation artifacts".into(),
    })
}

/// Fraction of the Frobenius weight of `m` outside the leading
/// `(n - excluded) x (n - excluded)` block.
pub fn boundary_weight(m: &ComplexMatrix, excluded: usize) -> f64 {
    let n = m.dim();
    let cut = n.saturating_sub(excluded);
    let total: f64 = m.as_slice().iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut outside = 0.0;
    for c in 0..n {
        for r in 0..n {
            if r >= cut || c >= cut {
                outside += m.get(r, c).norm_sqr();
            }
        }
    }
    outside / total
}

/// Number of top Fock levels treated as truncation boundary.
pub const WEYL_BOUNDARY_LEVELS: usize = 2;
/// Eigenvectors with more than this fraction of their weight on the
/// boundary levels are not interior.
pub const WEYL_BOUNDARY_TOL: f64 = 0.5;
pub const WEYL_CLUSTER_TOL: f64 = 1e-6;

/// Spectral summary of a Weyl scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeylSummary {
    pub eps: f64,
    pub interior_modes: usize,
    pub distinct_frequencies: usize,
    pub distinct_all: usize,
    pub max_abs_re: f64,
    pub commutation_defect: f64,
}

/// Eigenvalues of `δ` whose eigenvectors are interior (see
/// [`WEYL_BOUNDARY_TOL`]), in spectral order.
pub fn interior_spectrum(sys: &EigenSystem) -> Result<Vec<C64>> {
    let mut out = Vec::new();
    for k in 0..sys.len() {
        let v = crate::linalg::unvec(&sys.vector(k))?;
        if boundary_weight(&v, WEYL_BOUNDARY_LEVELS) <= WEYL_BOUNDARY_TOL {
            out.push(sys.eigenvalues[k]);
        }
    }
    Ok(out)
}

pub fn weyl_summary(s: &Scenario, eps: f64) -> Result<WeylSummary> {
    let sys = eig(s.delta.superop())?;
    let interior = interior_spectrum(&sys)?;
    let distinct = cluster_sorted(&interior, WEYL_CLUSTER_TOL).len();
    Ok(WeylSummary {
        eps,
        interior_modes: interior.len(),
        distinct_frequencies: distinct,
        distinct_all: cluster_sorted(&sys.eigenvalues, WEYL_CLUSTER_TOL).len(),
        max_abs_re: interior.iter().map(|z| z.re.abs()).fold(0.0, f64::max),
        commutation_defect: crate::dynamics::commutation_defect(&s.delta)?,
    })
}

/// Seed of the per-`N` job in the scaling study.
pub fn job_seed(master: u64, n: usize) -> u64 {
    master ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Time window and sampling of the reconstruction error.
pub const SCALING_T_MAX: f64 = 20.0;
pub const SCALING_T_STEPS: usize = 401;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub mode_count: usize,
    /// `max_t |T(t)a0 - Σ_{top k} e^{λt} a_λ| / |a0|` for `k = 1..=K`.
    pub errors_by_k: Vec<f64>,
    pub seed: u64,
}

impl ScalingRow {
    pub fn max_err(&self) -> f64 {
        *self.errors_by_k.last().unwrap_or(&f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingStudy {
    pub omega: f64,
    pub threshold: f64,
    pub k: usize,
    pub rows: Vec<ScalingRow>,
}

impl ScalingStudy {
    /// Columns `N, mode_count, max_err, seed` with `max_err` at `k = K`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["N", "mode_count", "max_err", "seed"]);
        for r in &self.rows {
            t.push(vec![r.n.to_string(), r.mode_count.to_string(), fmt_float(r.max_err()), r.seed.to_string()]);
        }
        t
    }

    /// Columns `N, K, max_err` for every truncation level.
    pub fn k_sweep_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["N", "K", "max_err"]);
        for r in &self.rows {
            for (k, e) in r.errors_by_k.iter().enumerate() {
                t.push(vec![r.n.to_string(), (k + 1).to_string(), fmt_float(*e)]);
            }
        }
        t
    }
}

/// Lattice scenario per `N` with a seeded random `a0`: counts modes above
/// `threshold·|a0|` and measures top-`k` reconstruction errors on `[-20, 20]`.
pub fn scaling_study(dims: &[usize], omega: f64, threshold: f64, k: usize, seed: u64) -> Result<ScalingStudy> {
    if dims.is_empty() {
        return Err(invalid("scaling study needs at least one dimension".into()));
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("dimensions must be strictly ascending, got {dims:?}")));
    }
    if k == 0 {
        return Err(invalid("K must be positive".into()));
    }
    let grid = UniformGrid::new(SCALING_T_MAX, SCALING_T_STEPS)?;
    let mut rows = Vec::with_capacity(dims.len());
    for &n in dims {
        let job = job_seed(seed, n);
        let sc = hermitian_lattice(n, omega)?;
        let a0 = random_matrix(n, &mut seeded_rng(job));
        let scale = a0.op_norm();
        let dec = exact_modes(&sc.delta, &a0, DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER)?;
        let mode_count = dec.modes.iter().filter(|m| m.magnitude > threshold * scale).count();
        let states: Vec<(f64, ComplexMatrix)> =
            grid.times().map(|t| flow(&sc.delta, t, &a0).map(|s| (t, s))).collect::<Result<_>>()?;
        let mut errors_by_k = Vec::with_capacity(k);
        for kk in 1..=k {
            let top = &dec.modes[..kk.min(dec.len())];
            let mut worst = 0.0_f64;
            for (t, state) in &states {
                let mut diff = state.clone();
                for m in top {
                    diff -= &m.coefficient.scale((m.lambda * *t).exp());
                }
                worst = worst.max(diff.op_norm());
            }
            errors_by_k.push(worst / scale);
        }
        rows.push(ScalingRow { n, mode_count, errors_by_k, seed: job });
    }
    Ok(ScalingStudy { omega, threshold, k, rows })
}

/// Counts of modes of `a0` by tag.
pub fn tag_counts(s: &Scenario) -> Result<[(ModeTag, usize); 4]> {
    let dec = exact_modes(&s.delta, &s.a0, DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER)?;
    Ok([ModeTag::Zero, ModeTag::Imaginary, ModeTag::Decaying, ModeTag::Growing].map(|t| (t, dec.count(t))))
}
