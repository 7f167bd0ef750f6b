use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use homlie_core::bohr::{
    ap_erg_split, decompose_by_average, detect_frequencies, exact_modes, mean_ergodic_projection,
    permutation_invariance_check, BohrMode, DecompositionReport, FrequencyGrid, ModeTag, SpectralDecomposition,
    DEFAULT_TOL_CLUSTER, DEFAULT_TOL_RE,
};
use homlie_core::dynamics::{build_derivation, commutation_defect, orbit, superop_norm};
use homlie_core::homalgebra::{
    bracket_norm_bound_check, cyclic_phi_report, hom_jacobi_report, hom_malcev_report, isometry_bracket_check,
    phi_failure_report, skew_symmetry_report, IdentityReport, TwistMap,
};
use homlie_core::linalg::random::{random_unitary, seeded_rng};
use homlie_core::linalg::{ComplexMatrix, C64};
use homlie_core::HomLieError;
use homlie_core::report::{fmt_float, write_atomic, CsvTable, JsonComplex};
use homlie_core::scenarios::{
    self, hermitian_lattice, scaling_study, sec8, sec8_mu, uhf, weighted_shift, weyl_summary, Scenario,
    ScalingStudy, ScenarioMeta, WeylSummary, FIG1_BETA, FIG1_MAX_ERRORS, FIG1_MODE_COUNTS, FIG3_ERROR_BOUND, TABLE1,
};
use serde::Serialize;

use crate::{
    config_error, emit, parse_list, CheckArgs, CliResult, Common, Context, DecomposeArgs, Method, ReproduceArgs,
    ScalingArgs, ScenarioArgs, SpectrumArgs, TwistChoice, WeylArgs, EXIT_IDENTITY_FAILURE, EXIT_NUMERICAL, EXIT_PASS,
};

const TWIST_SEED_SALT: u64 = 0x74_7769_7374;
const SIGNAL_T_MAX: f64 = 20.0;
const SIGNAL_STEPS: usize = 401;
const SIGNAL_ENTRY: (usize, usize) = (0, 1);
const TOP_MODES: usize = 4;

fn out_dir(c: &Common, default: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_table(dir: &Path, name: &str, table: &CsvTable) -> CliResult<()> {
    Ok(write_atomic(&dir.join(name), &table.to_bytes()?)?)
}

#[derive(Serialize)]
struct CheckBody<'a> {
    twist: &'static str,
    dim: usize,
    pass: bool,
    reports: &'a [IdentityReport],
}

pub fn check_identities(ctx: &Context, a: &CheckArgs) -> CliResult<i32> {
    let c = &a.common;
    if c.dim == 0 {
        return Err(config_error("--dim must be positive"));
    }
    if a.samples == 0 {
        return Err(config_error("--samples must be positive"));
    }
    let tol = c.tol.unwrap_or(1e-9);
    if !(tol >= 0.0) {
        return Err(config_error("--tol must be nonnegative"));
    }
    let alpha = match a.twist {
        TwistChoice::Identity => TwistMap::identity(c.dim),
        TwistChoice::Unitary => TwistMap::unitary(random_unitary(c.dim, &mut seeded_rng(ctx.seed ^ TWIST_SEED_SALT)))?,
        TwistChoice::TraceShift => TwistMap::trace_shift(c.dim),
        TwistChoice::Transpose => TwistMap::transpose(c.dim),
    };
    let (n, seed) = (a.samples, ctx.seed);
    let mut reports = vec![
        skew_symmetry_report(&alpha, n, seed)?,
        hom_jacobi_report(&alpha, n, seed, tol)?,
        hom_malcev_report(&alpha, n, seed, tol)?,
        phi_failure_report(&alpha, n, seed, tol)?,
        cyclic_phi_report(&alpha, n, seed, tol)?,
        bracket_norm_bound_check(&alpha, n, seed)?,
    ];
    if alpha.is_morphism() {
        reports.push(isometry_bracket_check(&alpha, n, seed)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    let prefactor = c.prefactor.map(|p| p.value()).unwrap_or(homlie_core::dynamics::DEFAULT_PREFACTOR);
    let body = CheckBody { twist: alpha.name(), dim: c.dim, pass, reports: &reports };
    emit(c.out.as_deref(), &ctx.render(prefactor, body)?)?;
    Ok(if pass { EXIT_PASS } else { EXIT_IDENTITY_FAILURE })
}

/// Builds the named scenario and applies a prefactor override.
pub fn build_scenario(c: &Common, s: &ScenarioArgs) -> CliResult<Scenario> {
    let mut sc = match c.scenario.as_str() {
        "hermitian" => hermitian_lattice(c.dim, c.omega)?,
        "sec8" => sec8(c.dim, c.omega)?,
        "uhf" => uhf(c.dim, !s.x_local)?,
        "weighted-shift" => {
            if c.dim < 2 {
                return Err(config_error("weighted-shift needs --dim >= 2"));
            }
            weighted_shift(c.omega, &vec![C64::new(1.0, 0.0); c.dim], s.unitary_x)?
        }
        "weyl" => scenarios::weyl(s.nmax, s.omega1, s.omega2, s.eps)?,
        other => return Err(config_error(format!("unknown scenario {other:?}"))),
    };
    if let Some(p) = c.prefactor {
        let (old, new) = (sc.delta.prefactor(), p.value());
        sc.delta = build_derivation(sc.delta.alpha().clone(), sc.delta.x().clone(), new)?;
        if let Some(freqs) = sc.expected_frequencies.as_mut() {
            for f in freqs.iter_mut() {
                *f = *f * new / old;
            }
        }
    }
    Ok(sc)
}

#[derive(Serialize)]
struct TagCounts {
    zero: usize,
    imaginary: usize,
    decaying: usize,
    growing: usize,
}

impl TagCounts {
    fn of(d: &SpectralDecomposition) -> Self {
        TagCounts {
            zero: d.count(ModeTag::Zero),
            imaginary: d.count(ModeTag::Imaginary),
            decaying: d.count(ModeTag::Decaying),
            growing: d.count(ModeTag::Growing),
        }
    }
}

#[derive(Serialize)]
struct SpectrumBody {
    scenario: ScenarioMeta,
    commutation_defect: f64,
    method: Method,
    counts: TagCounts,
    decomposition: DecompositionReport,
}

fn check_average_args(c: &Common) -> CliResult<()> {
    if !(c.r > 0.0) || !c.r.is_finite() {
        return Err(config_error("--R must be positive"));
    }
    Ok(())
}

pub fn spectrum(ctx: &Context, a: &SpectrumArgs) -> CliResult<i32> {
    let c = &a.common;
    let sc = build_scenario(c, &a.scenario)?;
    let tol_re = c.tol.unwrap_or(DEFAULT_TOL_RE);
    let dec = match a.method {
        Method::Eig => exact_modes(&sc.delta, &sc.a0, tol_re, DEFAULT_TOL_CLUSTER)?,
        Method::Average => {
            check_average_args(c)?;
            let step = PI / (2.0 * c.r);
            let bound = superop_norm(sc.delta.superop()) + 2.0 * step;
            let grid = FrequencyGrid { min: -bound, max: bound, step };
            let threshold = a.threshold * sc.a0.op_norm();
            let freqs = detect_frequencies(&sc.delta, &sc.a0, grid, c.r, c.steps, threshold)?;
            decompose_by_average(&sc.delta, &sc.a0, &freqs, c.r, c.steps)?
        }
    };
    let prefactor = sc.delta.prefactor();
    let body = SpectrumBody {
        scenario: sc.meta(),
        commutation_defect: commutation_defect(&sc.delta)?,
        method: a.method,
        counts: TagCounts::of(&dec),
        decomposition: dec.report(prefactor, ctx.seed),
    };
    emit(c.out.as_deref(), &ctx.render(prefactor, body)?)?;
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct CoefficientError {
    lambda: JsonComplex,
    error: f64,
}

#[derive(Serialize)]
struct SplitSummary {
    ap_dim: usize,
    erg_dim: usize,
    overlap_dim: usize,
    growing: Vec<JsonComplex>,
    min_principal_angle: Option<f64>,
}

#[derive(Serialize)]
struct DecomposeBody {
    scenario: ScenarioMeta,
    commutation_defect: f64,
    exact: DecompositionReport,
    average: DecompositionReport,
    coefficient_errors: Vec<CoefficientError>,
    mean_projection_error: f64,
    split: SplitSummary,
    permutation: IdentityReport,
}

pub fn decompose(ctx: &Context, a: &DecomposeArgs) -> CliResult<i32> {
    let c = &a.common;
    check_average_args(c)?;
    let sc = build_scenario(c, &a.scenario)?;
    let tol_re = c.tol.unwrap_or(DEFAULT_TOL_RE);
    let exact = exact_modes(&sc.delta, &sc.a0, tol_re, DEFAULT_TOL_CLUSTER)?;
    let scale = sc.a0.op_norm().max(f64::MIN_POSITIVE);
    let ap_modes: Vec<_> = exact.modes_by_frequency().into_iter().filter(|m| m.tag.is_almost_periodic()).collect();
    let candidates: Vec<C64> = ap_modes.iter().map(|m| m.lambda).collect();
    let average = decompose_by_average(&sc.delta, &sc.a0, &candidates, c.r, c.steps)?;
    let coefficient_errors = ap_modes
        .iter()
        .zip(&average.modes_by_frequency())
        .map(|(e, m)| CoefficientError { lambda: e.lambda.into(), error: (&e.coefficient - &m.coefficient).op_norm() / scale })
        .collect();
    let mean = mean_ergodic_projection(&sc.delta, &sc.a0, c.r, c.steps)?;
    let zero_mode = ap_modes
        .iter()
        .find(|m| m.tag == ModeTag::Zero)
        .map(|m| m.coefficient.clone())
        .unwrap_or_else(|| ComplexMatrix::zeros(sc.dim()));
    let split = ap_erg_split(&sc.delta, tol_re)?;
    let permutation = permutation_invariance_check(&exact, ctx.seed)?;
    let prefactor = sc.delta.prefactor();
    let pass = permutation.pass;
    if let Some(path) = &a.csv {
        write_atomic(path, &exact.coefficients_csv().to_bytes()?)?;
    }
    let body = DecomposeBody {
        scenario: sc.meta(),
        commutation_defect: commutation_defect(&sc.delta)?,
        exact: exact.report(prefactor, ctx.seed),
        average: average.report(prefactor, ctx.seed),
        coefficient_errors,
        mean_projection_error: (&mean - &zero_mode).op_norm() / scale,
        split: SplitSummary {
            ap_dim: split.ap.dim(),
            erg_dim: split.erg.dim(),
            overlap_dim: split.overlap_dim,
            growing: split.growing.iter().map(|&z| z.into()).collect(),
            min_principal_angle: split.principal_angles.first().copied(),
        },
        permutation,
    };
    emit(c.out.as_deref(), &ctx.render(prefactor, body)?)?;
    Ok(if pass { EXIT_PASS } else { EXIT_IDENTITY_FAILURE })
}

fn parse_dims(s: &str) -> CliResult<Vec<usize>> {
    let dims: Vec<usize> = parse_list("dims", s)?;
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_error(format!("--dims must be strictly ascending, got {dims:?}")));
    }
    if dims.iter().any(|&n| n < 2) {
        return Err(config_error("--dims entries must be at least 2"));
    }
    Ok(dims)
}

#[derive(Serialize)]
struct EntryMode {
    beta: f64,
    re_lambda: f64,
    c_re: f64,
    c_im: f64,
    abs_c: f64,
}

#[derive(Serialize)]
struct PublishedRow {
    beta: f64,
    c_re: f64,
    c_im: f64,
    abs_c: f64,
}

#[derive(Serialize)]
struct Sec8Signal {
    max_entry_error: f64,
    max_norm_error: f64,
}

#[derive(Serialize)]
struct Sec8Result {
    n: usize,
    status: &'static str,
    commutation_defect: f64,
    closed_form_max_deviation: f64,
    mode_count: usize,
    counts: TagCounts,
    entry_modes: Vec<EntryMode>,
    signal: Option<Sec8Signal>,
    diagnostic: Option<String>,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Published {
    table: Vec<PublishedRow>,
    mode_counts: Vec<(usize, usize)>,
    max_errors: Vec<(usize, f64)>,
    beta: f64,
    entry_error_bound: f64,
}

fn published() -> Published {
    Published {
        table: TABLE1.iter().map(|&(beta, c_re, c_im, abs_c)| PublishedRow { beta, c_re, c_im, abs_c }).collect(),
        mode_counts: FIG1_MODE_COUNTS.to_vec(),
        max_errors: FIG1_MAX_ERRORS.to_vec(),
        beta: FIG1_BETA,
        entry_error_bound: FIG3_ERROR_BOUND,
    }
}

#[derive(Serialize)]
struct ReproduceBody<'a> {
    omega: f64,
    dims: &'a [usize],
    top_modes: usize,
    results: Vec<Sec8Result>,
    published: Published,
    scaling: &'a ScalingStudy,
}

fn closed_form_deviation(sc: &Scenario, omega: f64) -> CliResult<f64> {
    let n = sc.dim();
    let diag = match sc.delta.superop().diagonal_entries() {
        Some(d) => d.to_vec(),
        None => {
            // the generator is diagonal in the matrix-unit basis; read it off
            let mut d = Vec::with_capacity(n * n);
            for col in 0..n * n {
                let e = ComplexMatrix::matrix_unit(n, col % n, col / n);
                d.push(sc.delta.apply(&e)?.get(col % n, col / n));
            }
            d
        }
    };
    Ok(diag.iter().enumerate().map(|(col, &z)| (z - sec8_mu(col % n, col / n, omega)).norm()).fold(0.0, f64::max))
}

fn is_overflow(e: &HomLieError) -> bool {
    matches!(e, HomLieError::FlowOverflow { .. } | HomLieError::ExpmOverflow { .. })
}

/// Signal and top-mode reconstruction errors of the `(0,1)` entry on `[-20, 20]`.
fn sec8_signal(
    dir: &Path,
    sc: &Scenario,
    dec: &SpectralDecomposition,
    top_entry: &[&BohrMode],
    files: &mut Vec<String>,
) -> homlie_core::Result<Sec8Signal> {
    let n = sc.dim();
    let (row, col) = SIGNAL_ENTRY;
    let signal = orbit(&sc.delta, &sc.a0, SIGNAL_T_MAX, SIGNAL_STEPS)?;
    let signal_name = format!("signal_N{n}.csv");
    write_atomic(&dir.join(&signal_name), &signal.to_csv(row, col)?.to_bytes()?)?;
    files.push(signal_name);

    let top_norm = &dec.modes[..TOP_MODES.min(dec.len())];
    let mut recon = CsvTable::new(&["t", "err_entry", "err_norm"]);
    let (mut max_entry, mut max_norm) = (0.0_f64, 0.0_f64);
    for (t, state) in signal.times.iter().zip(&signal.states) {
        let entry: C64 = top_entry.iter().map(|m| (m.lambda * *t).exp() * m.coefficient.get(row, col)).sum();
        let err_entry = (state.get(row, col) - entry).norm();
        let mut diff = state.clone();
        for m in top_norm {
            diff -= &m.coefficient.scale((m.lambda * *t).exp());
        }
        let err_norm = diff.op_norm();
        max_entry = max_entry.max(err_entry);
        max_norm = max_norm.max(err_norm);
        recon.push(vec![fmt_float(*t), fmt_float(err_entry), fmt_float(err_norm)]);
    }
    let recon_name = format!("reconstruction_N{n}.csv");
    write_atomic(&dir.join(&recon_name), &recon.to_bytes()?)?;
    files.push(recon_name);
    Ok(Sec8Signal { max_entry_error: max_entry, max_norm_error: max_norm })
}

fn sec8_run(dir: &Path, n: usize, omega: f64, threshold: f64) -> CliResult<Sec8Result> {
    let sc = sec8(n, omega)?;
    let dec = exact_modes(&sc.delta, &sc.a0, DEFAULT_TOL_RE, DEFAULT_TOL_CLUSTER)?;
    let (row, col) = SIGNAL_ENTRY;
    let mut by_entry: Vec<&BohrMode> = dec.modes.iter().collect();
    by_entry.sort_by(|x, y| y.coefficient.get(row, col).norm().total_cmp(&x.coefficient.get(row, col).norm()));
    let top_entry = &by_entry[..TOP_MODES.min(by_entry.len())];

    let entry_modes: Vec<EntryMode> = top_entry
        .iter()
        .map(|m| {
            let z = m.coefficient.get(row, col);
            EntryMode { beta: m.lambda.im, re_lambda: m.lambda.re, c_re: z.re, c_im: z.im, abs_c: z.norm() }
        })
        .collect();
    let mut table = CsvTable::new(&[
        "rank", "beta", "re_lambda", "c_re", "c_im", "abs_c", "published_beta", "published_c_re", "published_c_im",
        "published_abs_c",
    ]);
    for k in 0..entry_modes.len().max(TABLE1.len()) {
        let mut rec = vec![(k + 1).to_string()];
        match entry_modes.get(k) {
            Some(m) => rec.extend([m.beta, m.re_lambda, m.c_re, m.c_im, m.abs_c].map(fmt_float)),
            None => rec.extend(std::iter::repeat_n(String::new(), 5)),
        }
        match TABLE1.get(k) {
            Some(&(b, re, im, abs)) => rec.extend([b, re, im, abs].map(fmt_float)),
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        table.push(rec);
    }
    let table_name = format!("table1_N{n}.csv");
    write_table(dir, &table_name, &table)?;
    let mut files = vec![table_name];

    let (signal, diagnostic) = match sec8_signal(dir, &sc, &dec, top_entry, &mut files) {
        Ok(s) => (Some(s), None),
        Err(e) if is_overflow(&e) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let scale = sc.a0.op_norm();
    Ok(Sec8Result {
        n,
        status: if signal.is_some() { "ok" } else { "overflow" },
        commutation_defect: commutation_defect(&sc.delta)?,
        closed_form_max_deviation: closed_form_deviation(&sc, omega)?,
        mode_count: dec.modes.iter().filter(|m| m.magnitude > threshold * scale).count(),
        counts: TagCounts::of(&dec),
        entry_modes,
        signal,
        diagnostic,
        files,
    })
}

fn check_study_args(k: usize, threshold: f64) -> CliResult<()> {
    if k == 0 {
        return Err(config_error("--K must be positive"));
    }
    if !(threshold >= 0.0) {
        return Err(config_error("--threshold must be nonnegative"));
    }
    Ok(())
}

pub fn reproduce_sec8(ctx: &Context, a: &ReproduceArgs) -> CliResult<i32> {
    let c = &a.common;
    let dims = parse_dims(&a.dims)?;
    check_study_args(a.k, a.threshold)?;
    let dir = out_dir(c, "homlie-sec8");
    let results = dims.iter().map(|&n| sec8_run(&dir, n, c.omega, a.threshold)).collect::<CliResult<Vec<_>>>()?;
    let study = scaling_study(&dims, c.omega, a.threshold, a.k, ctx.seed)?;
    write_table(&dir, "scaling.csv", &study.to_csv())?;
    write_table(&dir, "scaling_k.csv", &study.k_sweep_csv())?;
    let body = ReproduceBody { omega: c.omega, dims: &dims, top_modes: TOP_MODES, results, published: published(), scaling: &study };
    let overflow = body.results.iter().any(|r| r.signal.is_none());
    write_atomic(&dir.join("summary.json"), &ctx.render(C64::new(1.0, 0.0), body)?)?;
    if overflow {
        eprintln!("homlie: flow overflow for some N; see summary.json");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct ScalingBody<'a> {
    study: &'a ScalingStudy,
    mode_counts_nondecreasing: bool,
    errors_strictly_decreasing: bool,
    published: Published,
}

pub fn scaling(ctx: &Context, a: &ScalingArgs) -> CliResult<i32> {
    let c = &a.common;
    let dims = parse_dims(&a.dims)?;
    check_study_args(a.k, a.threshold)?;
    let dir = out_dir(c, "homlie-scaling");
    let study = scaling_study(&dims, c.omega, a.threshold, a.k, ctx.seed)?;
    write_table(&dir, "scaling.csv", &study.to_csv())?;
    write_table(&dir, "scaling_k.csv", &study.k_sweep_csv())?;
    let body = ScalingBody {
        study: &study,
        mode_counts_nondecreasing: study.rows.windows(2).all(|w| w[0].mode_count <= w[1].mode_count),
        errors_strictly_decreasing: study.rows.iter().all(|r| r.errors_by_k.windows(2).all(|w| w[1] < w[0])),
        published: published(),
    };
    let prefactor = homlie_core::dynamics::DEFAULT_PREFACTOR;
    write_atomic(&dir.join("scaling.json"), &ctx.render(prefactor, body)?)?;
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct WeylBody {
    nmax: usize,
    omega1: f64,
    omega2: f64,
    boundary_levels: usize,
    boundary_tol: f64,
    cluster_tol: f64,
    summaries: Vec<WeylSummary>,
    /// Every shear after the first has more distinct interior frequencies.
    enriched: bool,
}

pub fn weyl(ctx: &Context, a: &WeylArgs) -> CliResult<i32> {
    let eps: Vec<f64> = parse_list("eps", &a.eps)?;
    if eps.iter().any(|e| !e.is_finite()) {
        return Err(config_error("--eps entries must be finite"));
    }
    let summaries = eps
        .iter()
        .map(|&e| {
            let sc = scenarios::weyl(a.nmax, a.omega1, a.omega2, e)?;
            Ok(weyl_summary(&sc, e)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let base = summaries[0].distinct_frequencies;
    let body = WeylBody {
        nmax: a.nmax,
        omega1: a.omega1,
        omega2: a.omega2,
        boundary_levels: scenarios::WEYL_BOUNDARY_LEVELS,
        boundary_tol: scenarios::WEYL_BOUNDARY_TOL,
        cluster_tol: scenarios::WEYL_CLUSTER_TOL,
        enriched: summaries[1..].iter().all(|s| s.distinct_frequencies > base),
        summaries,
    };
    let prefactor = homlie_core::dynamics::DEFAULT_PREFACTOR;
    emit(a.common.out.as_deref(), &ctx.render(prefactor, body)?)?;
    Ok(EXIT_PASS)
}
