//! The five subcommands: verify, entangle-test, sample, min-eps, sweep-eps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pcsft::correlation::{
    calibrated_average, cross_linear_correlation, verify_q1, verify_t3, verify_t4,
    CorrelationReport,
};
use pcsft::covariance::{entangled, min_epsilon, regularized_covariance, PSD_TOL};
use pcsft::hilbert::SCHMIDT_TOL;
use pcsft::sampling::{dispersion, factorize_covariance, sample_fields, FACTOR_TOL};
use pcsft::{BipartiteState, Side};

use crate::config::{alternating_diag, load_state_file, ExperimentConfig};
use crate::{failure, input_error, CmdError, CmdResult};

/// Sampling-free agreement required between the analytic classical value and
/// the quantum reference.
const ALGEBRAIC_TOL: f64 = 1e-10;

#[derive(Debug, Serialize)]
struct LabeledReport {
    label: String,
    #[serde(flatten)]
    report: CorrelationReport,
    algebraic_deviation: f64,
    algebraic_ok: bool,
}

impl LabeledReport {
    fn new(label: impl Into<String>, report: CorrelationReport, check_algebra: bool) -> Self {
        let algebraic_deviation = report.algebraic_deviation();
        Self {
            label: label.into(),
            algebraic_ok: !check_algebra || algebraic_deviation <= ALGEBRAIC_TOL,
            report,
            algebraic_deviation,
        }
    }

    fn ok(&self) -> bool {
        self.report.pass && self.algebraic_ok
    }
}

fn write_file(path: &Path, contents: &str) -> CmdResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| input_error(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| input_error(format!("cannot write {}: {e}", path.display())))
}

fn summary_csv(rows: &[LabeledReport], config_hash: &str) -> String {
    let mut out = String::from(
        "identity,label,classical_value,standard_error,analytic_classical,quantum_value,\
         z_score,pass,algebraic_deviation,algebraic_ok,n,seed,epsilon,config_hash\n",
    );
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.identity,
            row.label,
            r.classical_value,
            r.standard_error,
            r.analytic_classical,
            r.quantum_value,
            r.z_score,
            r.pass,
            row.algebraic_deviation,
            row.algebraic_ok,
            r.n,
            r.seed,
            r.epsilon,
            config_hash
        );
    }
    out
}

pub fn cmd_verify(config: &ExperimentConfig) -> CmdResult<i32> {
    let state = config.load_state()?;
    let eps = config.resolve_epsilon(&state)?;
    let pairs = config.build_observables(&state)?;
    let n = config.n_samples;
    let seed = config.seed;
    let config_hash = config.content_hash();
    let factorizable = state
        .schmidt(SCHMIDT_TOL)
        .map_err(CmdError::from_core)?
        .rank()
        == 1;

    // One shared batch for the average and probe checks; the covariance
    // checks resample the identical stream internally.
    let cov = regularized_covariance(&state, eps).map_err(CmdError::from_core)?;
    let factor = factorize_covariance(&cov, FACTOR_TOL).map_err(CmdError::from_core)?;
    let batch = sample_fields(&factor, n, seed);

    let mut rows = Vec::new();
    for pair in &pairs {
        let q1 = verify_q1(&state, eps, &pair.a1, &pair.a2, n, seed)
            .map_err(CmdError::from_core)?;
        rows.push(LabeledReport::new(pair.name.clone(), q1, true));

        let centered = if factorizable {
            verify_t3(&state, eps, &pair.a1, &pair.a2, n, seed)
        } else {
            verify_t4(&state, eps, &pair.a1, &pair.a2, n, seed)
        }
        .map_err(CmdError::from_core)?;
        rows.push(LabeledReport::new(pair.name.clone(), centered, true));

        let yy1 = calibrated_average(&batch, &pair.a1, &state, eps, Side::One)
            .map_err(CmdError::from_core)?;
        rows.push(LabeledReport::new(pair.name.clone(), yy1, true));
        let yy2 = calibrated_average(&batch, &pair.a2, &state, eps, Side::Two)
            .map_err(CmdError::from_core)?;
        rows.push(LabeledReport::new(pair.name.clone(), yy2, true));
    }

    // Bilinear probe along the leading Schmidt directions: nonzero for every
    // state, so it is compared to its analytic value only.
    let schmidt = state.schmidt(SCHMIDT_TOL).map_err(CmdError::from_core)?;
    let cross = cross_linear_correlation(
        &batch,
        &state,
        &schmidt.left_vector(0),
        &schmidt.right_vector(0),
    )
    .map_err(CmdError::from_core)?;
    rows.push(LabeledReport::new("schmidt_probe", cross, false));

    #[derive(Serialize)]
    struct VerifyOutput<'a> {
        config_hash: &'a str,
        seed: u64,
        epsilon: f64,
        n_samples: usize,
        reports: &'a [LabeledReport],
    }
    let json = serde_json::to_string_pretty(&VerifyOutput {
        config_hash: &config_hash,
        seed,
        epsilon: eps,
        n_samples: n,
        reports: &rows,
    })
    .expect("report serialization cannot fail");
    write_file(&config.output_dir.join("reports.json"), &json)?;
    write_file(
        &config.output_dir.join("summary.csv"),
        &summary_csv(&rows, &config_hash),
    )?;

    let failing: Vec<&LabeledReport> = rows.iter().filter(|r| !r.ok()).collect();
    println!(
        "verify: {} checks, {} failed (epsilon = {eps}, n = {n}, seed = {seed})",
        rows.len(),
        failing.len()
    );
    println!("reports: {}", config.output_dir.join("reports.json").display());
    println!("summary: {}", config.output_dir.join("summary.csv").display());
    if failing.is_empty() {
        Ok(0)
    } else {
        for row in &failing {
            eprintln!(
                "FAILED {} [{}]: classical {} vs analytic {} (z = {:.2}, algebraic dev {:.3e})",
                row.report.identity,
                row.label,
                row.report.classical_value,
                row.report.analytic_classical,
                row.report.z_score,
                row.algebraic_deviation
            );
        }
        Ok(1)
    }
}

pub fn cmd_entangle_test(state_path: &Path, tol: f64, out: Option<&Path>) -> CmdResult<i32> {
    let state = load_state_file(state_path)?;
    let verdict = entangled(&state, tol).map_err(CmdError::from_core)?;
    let report = min_epsilon(&state).map_err(CmdError::from_core)?;

    println!("{}", if verdict { "entangled" } else { "separable" });
    println!("lambda_min = {}", report.lambda_min);
    println!("eps_star   = {}", report.eps_star);
    println!(
        "schmidt    = [{}]",
        report
            .schmidt_alphas
            .iter()
            .map(|a| format!("{a:.12}"))
            .collect::<Vec<_>>()
            .join(", ")
    );

    #[derive(Serialize)]
    struct EntangleOutput<'a> {
        verdict: &'a str,
        tol: f64,
        lambda_min: f64,
        eps_star: f64,
        eps_star_closed_form: f64,
        schmidt_alphas: &'a [f64],
    }
    let json = serde_json::to_string_pretty(&EntangleOutput {
        verdict: if verdict { "entangled" } else { "separable" },
        tol,
        lambda_min: report.lambda_min,
        eps_star: report.eps_star,
        eps_star_closed_form: report.eps_star_closed_form,
        schmidt_alphas: &report.schmidt_alphas,
    })
    .expect("report serialization cannot fail");
    println!("{json}");
    if let Some(dir) = out {
        write_file(&dir.join("entangle.json"), &json)?;
    }
    Ok(0)
}

pub fn cmd_sample(config: &ExperimentConfig) -> CmdResult<i32> {
    let state = config.load_state()?;
    let eps = config.resolve_epsilon(&state)?;
    let cov = regularized_covariance(&state, eps).map_err(CmdError::from_core)?;
    let factor = factorize_covariance(&cov, FACTOR_TOL).map_err(CmdError::from_core)?;
    let batch = sample_fields(&factor, config.n_samples, config.seed);

    std::fs::create_dir_all(&config.output_dir).map_err(|e| {
        input_error(format!(
            "cannot create {}: {e}",
            config.output_dir.display()
        ))
    })?;
    let csv_path = config.output_dir.join("batch.csv");
    let file = std::fs::File::create(&csv_path)
        .map_err(|e| input_error(format!("cannot write {}: {e}", csv_path.display())))?;
    batch
        .write_csv(std::io::BufWriter::new(file))
        .map_err(|e| input_error(format!("cannot write {}: {e}", csv_path.display())))?;
    let meta_path = config.output_dir.join("batch_meta.json");
    write_file(&meta_path, &batch.metadata_json())?;

    println!(
        "sampled {} fields (epsilon = {eps}, seed = {})",
        config.n_samples, config.seed
    );
    println!("batch:    {}", csv_path.display());
    println!("metadata: {}", meta_path.display());
    Ok(0)
}

pub fn cmd_min_eps(state_path: &Path) -> CmdResult<i32> {
    let state = load_state_file(state_path)?;
    let report = min_epsilon(&state).map_err(CmdError::from_core)?;
    println!("{}", report.to_json());
    Ok(0)
}

pub fn cmd_sweep_eps(
    state_path: &Path,
    grid: &str,
    n: usize,
    seed: u64,
    out: Option<&Path>,
) -> CmdResult<i32> {
    let state = load_state_file(state_path)?;
    let points = parse_grid(grid)?;
    let report = min_epsilon(&state).map_err(CmdError::from_core)?;
    let (n1, n2) = state.dims();
    let a = alternating_diag(n1);

    let mut csv = String::from(
        "epsilon,feasible,lambda_min,calibration_error,standard_error,z_score,\
         dispersion,dispersion_expected,n,seed\n",
    );
    let mut feasible_count = 0usize;
    for eps in &points {
        if *eps < report.eps_star - 1e-10 {
            // Below the PSD threshold: reported, never sampled.
            let _ = writeln!(
                csv,
                "{},false,{},,,,,,{},{}",
                eps,
                report.lambda_min + eps,
                n,
                seed
            );
            continue;
        }
        feasible_count += 1;
        let cov = regularized_covariance(&state, *eps).map_err(CmdError::from_core)?;
        let factor = factorize_covariance(&cov, FACTOR_TOL).map_err(CmdError::from_core)?;
        let batch = sample_fields(&factor, n, seed);
        let cal =
            calibrated_average(&batch, &a, &state, *eps, Side::One).map_err(CmdError::from_core)?;
        let error = (cal.classical_value - cal.quantum_value).abs();
        let disp = dispersion(&batch);
        let disp_expected = 2.0 + (n1 + n2) as f64 * eps;
        let _ = writeln!(
            csv,
            "{},true,{},{},{},{},{},{},{},{}",
            eps,
            cov.lambda_min(),
            error,
            cal.standard_error,
            cal.z_score,
            disp,
            disp_expected,
            n,
            seed
        );
    }

    print!("{csv}");
    if let Some(dir) = out {
        write_file(&dir.join("sweep.csv"), &csv)?;
        println!("sweep: {}", dir.join("sweep.csv").display());
    }
    if feasible_count == 0 {
        Err(failure(format!(
            "no feasible grid point: every epsilon is below eps_star = {}",
            report.eps_star
        )))
    } else {
        Ok(0)
    }
}

fn parse_grid(grid: &str) -> CmdResult<Vec<f64>> {
    let points: Result<Vec<f64>, _> = grid
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let points =
        points.map_err(|e| input_error(format!("malformed epsilon grid \"{grid}\": {e}")))?;
    if points.is_empty() || points.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(input_error(format!(
            "epsilon grid must contain finite values >= 0, got \"{grid}\""
        )));
    }
    Ok(points)
}

/// Resolve a `--tol` override, defaulting to the library PSD tolerance.
pub fn resolve_tol(tol: Option<f64>) -> CmdResult<f64> {
    match tol {
        None => Ok(PSD_TOL),
        Some(t) if t.is_finite() && t > 0.0 => Ok(t),
        Some(t) => Err(input_error(format!("tolerance must be > 0, got {t}"))),
    }
}
