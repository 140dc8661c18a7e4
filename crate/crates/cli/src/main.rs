//! Batch front end for the hyperbolic-kernel toolkit: kernel tabulation, the
//! verification suite, the integral-equation solver, moving-plane symmetry
//! certification and heat-kernel tables.
//!
//! Exit codes: 0 = success / all checks pass; 1 = a verification violation,
//! non-convergence or failed certification; 2 = invalid input.

use clap::{Parser, Subcommand};
use hyperkern::geom::BallPoint;
use hyperkern::heat::{heat_kernel, HeatQuery};
use hyperkern::kernels::{eval_kernel, KernelSpec};
use hyperkern::solver::{solve_integral_equation, GridField, SolveConfig};
use hyperkern::symmetry::{
    hyperplane_derivative_flags, moving_plane_sweep, radial_profile_check, sweep_samples,
};
use hyperkern::verify;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "hyperkern", version, about = "Green's functions and moving-plane symmetry on hyperbolic space")]
struct Cli {
    /// JSON config file with per-command parameters
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for sampled checks; overrides the config value
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count; defaults to HYPERKERN_THREADS or all cores
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate kernel radial profiles to CSV
    KernelTable,
    /// Run the full verification battery and write a JSON verdict
    Verify,
    /// Solve the semilinear integral equation from a config
    Solve,
    /// Solve, then certify radial symmetry with a moving-plane sweep
    Symmetry,
    /// Tabulate heat kernels to CSV
    Heat,
}

/// Anything that stops a run: invalid input maps to exit 2, a failed check or
/// diverging iteration to exit 1.
enum RunError {
    Invalid(String),
    Violation(String),
}

impl From<hyperkern::Error> for RunError {
    fn from(e: hyperkern::Error) -> Self {
        RunError::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Invalid(format!("io error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("HYPERKERN_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("warning: thread pool already initialized; --threads ignored");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Violation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Parse the JSON config into `T`, naming the offending key on failure.
fn load_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T, RunError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        RunError::Invalid(format!(
            "invalid config {}: key `{}`: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })
}

/// Hash of the effective (defaulted) parameters, embedded in every artifact.
fn config_hash<T: Serialize>(params: &T) -> String {
    let canonical = serde_json::to_string(params).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    format!("{:x}", hasher.finalize())[..16].to_string()
}

fn csv_header(hash: &str, seed: Option<u64>) -> String {
    let mut out = format!("# artifact_version = {ARTIFACT_VERSION}\n# config_hash = {hash}\n");
    if let Some(s) = seed {
        out.push_str(&format!("# seed = {s}\n"));
    }
    out
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), RunError> {
    match cli.command {
        Command::KernelTable => kernel_table(cli),
        Command::Verify => run_verify(cli),
        Command::Solve => run_solve(cli),
        Command::Symmetry => run_symmetry(cli),
        Command::Heat => run_heat(cli),
    }
}

fn spec_label(spec: &KernelSpec, index: usize) -> String {
    let body = match spec {
        KernelSpec::Fractional { n, alpha } => format!("fractional_n{n}_a{alpha}"),
        KernelSpec::Shifted { n, alpha, zeta } => format!("shifted_n{n}_a{alpha}_z{zeta}"),
        KernelSpec::GjmsWhole { n, k } => format!("gjms_n{n}_k{k}"),
        KernelSpec::Product { n, factors } => format!("product_n{n}_l{}", factors.len()),
        KernelSpec::LegendreResolvent { n, lambda } => format!("legendre_n{n}_l{lambda}"),
        KernelSpec::BoggioBall { n, k, r } => format!("boggio_n{n}_k{k}_r{r}"),
    };
    format!("{index:02}_{}", body.replace(['.', '-'], "p"))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct KernelTableParams {
    specs: Vec<KernelSpec>,
    rho_min: f64,
    rho_max: f64,
    points: usize,
    log_spacing: bool,
}

impl Default for KernelTableParams {
    fn default() -> Self {
        KernelTableParams {
            specs: verify::default_suite(),
            rho_min: 1e-3,
            rho_max: 6.0,
            points: 200,
            log_spacing: true,
        }
    }
}

fn kernel_table(cli: &Cli) -> Result<(), RunError> {
    let params: KernelTableParams = load_config(cli.config.as_deref())?;
    if params.points < 2 || params.rho_min <= 0.0 || params.rho_max <= params.rho_min {
        return Err(RunError::Invalid(
            "kernel-table needs points >= 2 and 0 < rho_min < rho_max".into(),
        ));
    }
    let hash = config_hash(&params);
    for (i, spec) in params.specs.iter().enumerate() {
        spec.validate()?;
        // clip the grid to Boggio's chart when needed
        let hi = match spec {
            KernelSpec::BoggioBall { r, .. } => params.rho_max.min(2.0 * r.atanh() * 0.999),
            _ => params.rho_max,
        };
        let mut csv = csv_header(&hash, None);
        csv.push_str("rho,value\n");
        for j in 0..params.points {
            let s = j as f64 / (params.points - 1) as f64;
            let rho = if params.log_spacing {
                params.rho_min * (hi / params.rho_min).powf(s)
            } else {
                params.rho_min + (hi - params.rho_min) * s
            };
            csv.push_str(&format!("{rho:.12e},{:.12e}\n", eval_kernel(spec, rho)?));
        }
        write_artifact(&cli.out, &format!("kernel_{}.csv", spec_label(spec, i)), &csv)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct VerifyParams {
    seed: u64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams { seed: 20240824 }
    }
}

/// Verdict entry without wall-clock timings so outputs are byte-identical
/// across runs and thread counts.
#[derive(Serialize)]
struct Verdict {
    name: String,
    passed: bool,
    worst: f64,
    tolerance: f64,
    details: String,
}

fn run_verify(cli: &Cli) -> Result<(), RunError> {
    let mut params: VerifyParams = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        params.seed = seed;
    }
    let hash = config_hash(&params);
    let results = verify::full_suite(params.seed).map_err(|e| RunError::Violation(e.to_string()))?;
    for r in &results {
        println!("{}", r.line());
    }
    let verdicts: Vec<Verdict> = results
        .iter()
        .map(|r| Verdict {
            name: r.name.clone(),
            passed: r.passed,
            worst: r.worst,
            tolerance: r.tolerance,
            details: r.details.clone(),
        })
        .collect();
    let all_passed = results.iter().all(|r| r.passed);
    let doc = serde_json::json!({
        "artifact_version": ARTIFACT_VERSION,
        "config_hash": hash,
        "seed": params.seed,
        "all_passed": all_passed,
        "checks": verdicts,
    });
    write_artifact(&cli.out, "verify.json", &format!("{:#}\n", doc))?;
    if all_passed {
        Ok(())
    } else {
        Err(RunError::Violation("verification suite reported failures".into()))
    }
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SolveParams {
    solve: Option<SolveConfig>,
}

fn require_solve(params: SolveParams) -> Result<SolveConfig, RunError> {
    let cfg = params
        .solve
        .ok_or_else(|| RunError::Invalid("config must provide key `solve`".into()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn run_solve(cli: &Cli) -> Result<(), RunError> {
    let params: SolveParams = load_config(cli.config.as_deref())?;
    let hash = config_hash(&params);
    let cfg = require_solve(params)?;
    let result = solve_integral_equation(&cfg)?;
    let mesh = cfg.mesh()?;
    let mut csv = csv_header(&hash, None);
    csv.push_str(&result.solution_csv(&mesh));
    write_artifact(&cli.out, "solution.csv", &csv)?;
    let doc = serde_json::json!({
        "artifact_version": ARTIFACT_VERSION,
        "config_hash": hash,
        "converged": result.converged,
        "iterations": result.iterations,
        "sup_norm": result.sup_norm,
        "contraction_proxy": result.contraction_proxy,
        "residual_history": result.residual_history,
    });
    write_artifact(&cli.out, "solve.json", &format!("{:#}\n", doc))?;
    if result.converged {
        Ok(())
    } else {
        Err(RunError::Violation(format!(
            "iteration did not converge after {} steps",
            result.iterations
        )))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SymmetryParams {
    solve: Option<SolveConfig>,
    grid_points: usize,
    radial_bins: usize,
    tolerance_factor: f64,
}

impl Default for SymmetryParams {
    fn default() -> Self {
        SymmetryParams {
            solve: None,
            grid_points: 14,
            radial_bins: 12,
            tolerance_factor: 1e-6,
        }
    }
}

fn run_symmetry(cli: &Cli) -> Result<(), RunError> {
    let params: SymmetryParams = load_config(cli.config.as_deref())?;
    if params.grid_points < 2 || params.tolerance_factor <= 0.0 {
        return Err(RunError::Invalid(
            "symmetry needs grid_points >= 2 and tolerance_factor > 0".into(),
        ));
    }
    let hash = config_hash(&params);
    let (grid_points, bins, tol_factor) =
        (params.grid_points, params.radial_bins, params.tolerance_factor);
    let cfg = require_solve(SolveParams { solve: params.solve })?;
    let result = solve_integral_equation(&cfg)?;
    if !result.converged {
        return Err(RunError::Violation("solve stage did not converge".into()));
    }
    let mesh = cfg.mesh()?;
    let field = GridField::new(&mesh, &result.u)?;
    let u = |x: &BallPoint| field.eval(x);
    let samples = sweep_samples(&mesh);
    let radius = cfg.domain_radius();
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| i as f64 * radius / (grid_points + 1) as f64)
        .collect();
    let directions: Vec<usize> = (0..mesh.n).collect();
    let tol = tol_factor * result.sup_norm;
    let report = moving_plane_sweep(&u, &directions, &grid, &samples, tol)
        .map_err(|e| RunError::Violation(e.to_string()))?;
    let radial = radial_profile_check(&result.u, &mesh.nodes, &mesh.center, bins)?;
    let r_euc = (radius / 2.0).tanh();
    let lambdas: Vec<f64> = (1..=9).map(|i| 0.1 * i as f64 * r_euc).collect();
    let flags = hyperplane_derivative_flags(&u, 0, &lambdas, r_euc, 24, 1e-4)
        .map_err(|e| RunError::Violation(e.to_string()))?;
    let mut csv = csv_header(&hash, None);
    csv.push_str(&report.deficit_csv());
    write_artifact(&cli.out, "deficits.csv", &csv)?;
    let doc = serde_json::json!({
        "artifact_version": ARTIFACT_VERSION,
        "config_hash": hash,
        "certified": report.certified,
        "final_deficit": report.final_deficit,
        "tolerance": report.tolerance,
        "sup_norm": report.sup_norm,
        "center": report.center,
        "center_leaf_parameters": report.center_leaf_parameters,
        "diagnostics": report.diagnostics,
        "radial_monotone": radial.monotone,
        "radial_conclusive": radial.conclusive,
        "radial_max_violation": radial.max_violation,
        "derivative_flags": flags,
    });
    write_artifact(&cli.out, "symmetry.json", &format!("{:#}\n", doc))?;
    if report.certified && radial.monotone {
        Ok(())
    } else {
        Err(RunError::Violation(
            "moving-plane sweep did not certify radial symmetry".into(),
        ))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct HeatParams {
    n: usize,
    times: Vec<f64>,
    rho_min: f64,
    rho_max: f64,
    points: usize,
    shifted: bool,
}

impl Default for HeatParams {
    fn default() -> Self {
        HeatParams {
            n: 3,
            times: vec![0.1, 1.0],
            rho_min: 1e-2,
            rho_max: 8.0,
            points: 100,
            shifted: false,
        }
    }
}

fn run_heat(cli: &Cli) -> Result<(), RunError> {
    let params: HeatParams = load_config(cli.config.as_deref())?;
    if params.points < 2 || params.rho_min <= 0.0 || params.rho_max <= params.rho_min {
        return Err(RunError::Invalid(
            "heat needs points >= 2 and 0 < rho_min < rho_max".into(),
        ));
    }
    let hash = config_hash(&params);
    let mut csv = csv_header(&hash, None);
    csv.push_str("t,rho,value\n");
    for &t in &params.times {
        for j in 0..params.points {
            let s = j as f64 / (params.points - 1) as f64;
            let rho = params.rho_min + (params.rho_max - params.rho_min) * s;
            let value = heat_kernel(&HeatQuery { n: params.n, t, rho, shifted: params.shifted })?;
            csv.push_str(&format!("{t:.6e},{rho:.12e},{value:.12e}\n"));
        }
    }
    write_artifact(&cli.out, "heat.csv", &csv)?;
    Ok(())
}
