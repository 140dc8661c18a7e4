//! The verification suite: every oracle, inequality battery and end-to-end
//! pipeline check bundled as reusable functions returning uniform
//! [`CheckResult`] verdicts. The acceptance test and the CLI `verify`
//! subcommand both drive this module.

use crate::error::{Error, Result};
use crate::geom::{ball_to_halfspace, BallPoint};
use crate::heat::{heat_kernel, HeatQuery};
use crate::kernels::{
    asymptotic_check, boggio_h, bound_check, eval_kernel, green_reflection_checks, KernelSpec,
    RadialProfile,
};
use crate::quad::{radial_convolve, radial_integral, ConvolveOpts};
use crate::solver::{
    conformal_transfer, halfspace_transfer, laplace_beltrami_fd, solve_integral_equation,
    GridField, InitialGuess, Nonlinearity, SolveConfig, SourceSpec, TransferDirection,
};
use crate::specfun::hls_constant;
use crate::symmetry::{
    hyperplane_derivative_flags, moving_plane_sweep, radial_profile_check, sweep_samples,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::Instant;

/// Uniform verdict of one verification check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed metric; its meaning (relative error, margin, ...) is
    /// stated in `details`.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    pub details: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:<28} worst {:>10.3e} tol {:>8.1e} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.seconds,
            self.details
        )
    }
}

fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
        .collect()
}

fn h3_resolvent(zeta: f64, rho: f64) -> f64 {
    (-zeta * rho).exp() / (4.0 * PI * rho.sinh())
}

/// The H^3 resolvent family against its closed form.
pub fn h3_resolvent_oracle() -> Result<CheckResult> {
    let t0 = Instant::now();
    let grid = linspace(0.01, 5.0, 50);
    let mut specs = vec![(KernelSpec::Fractional { n: 3, alpha: 2.0 }, 0.0)];
    for zeta in [0.5, 1.0, 2.0] {
        specs.push((KernelSpec::Shifted { n: 3, alpha: 2.0, zeta }, zeta));
    }
    // Shifted with zeta = 0 is the fractional kernel itself
    specs.push((KernelSpec::Shifted { n: 3, alpha: 2.0, zeta: 0.0 }, 0.0));
    let mut worst = 0.0_f64;
    for (spec, zeta) in &specs {
        for &rho in &grid {
            let exact = h3_resolvent(*zeta, rho);
            let got = eval_kernel(spec, rho)?;
            worst = worst.max((got - exact).abs() / exact);
        }
    }
    let tol = 1e-6;
    Ok(CheckResult {
        name: "h3-resolvent-oracle".into(),
        passed: worst <= tol,
        worst,
        tolerance: tol,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "max relative error vs exp(-zeta rho)/(4 pi sinh rho), {} specs x 50 points",
            specs.len()
        ),
    })
}

/// The Legendre-function resolvent route against the same closed form at `lambda = zeta^2 - 1`.
pub fn legendre_cross_validation() -> Result<CheckResult> {
    let t0 = Instant::now();
    let grid = linspace(0.1, 4.0, 10);
    let mut worst = 0.0_f64;
    for zeta in [0.5, 1.0, 2.0] {
        let spec = KernelSpec::LegendreResolvent { n: 3, lambda: zeta * zeta - 1.0 };
        for &rho in &grid {
            let exact = h3_resolvent(zeta, rho);
            let got = eval_kernel(&spec, rho)?;
            worst = worst.max((got - exact).abs() / exact);
        }
    }
    let tol = 1e-6;
    Ok(CheckResult {
        name: "legendre-cross-validation".into(),
        passed: worst <= tol,
        worst,
        tolerance: tol,
        seconds: t0.elapsed().as_secs_f64(),
        details: "Legendre-Q resolvent vs H^3 closed form, 3 shifts x 10 points".into(),
    })
}

/// Heat-kernel normalization and the semigroup property.
pub fn heat_normalization_and_semigroup() -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut worst_scaled = 0.0_f64;
    let mut details = Vec::new();
    for (n, tol) in [(3usize, 1e-8), (4usize, 1e-4)] {
        for t in [0.1, 1.0] {
            let mass = if n == 3 {
                radial_integral(
                    n,
                    &mut |rho| {
                        heat_kernel(&HeatQuery { n, t, rho, shifted: false }).unwrap_or(f64::NAN)
                    },
                    50.0,
                    None,
                )?
            } else {
                // the even-dimensional kernel is expensive per point: tabulate
                // in parallel and integrate the interpolant
                let grid: Vec<f64> = (1..=800).map(|i| i as f64 * 50.0 / 800.0).collect();
                let values: Vec<f64> = grid
                    .par_iter()
                    .map(|&rho| heat_kernel(&HeatQuery { n, t, rho, shifted: false }))
                    .collect::<Result<_>>()?;
                let profile = RadialProfile::from_parts(
                    KernelSpec::Fractional { n: 3, alpha: 2.0 },
                    grid,
                    values,
                    tol,
                );
                radial_integral(n, &mut |rho| profile.interp(rho.max(1e-9)), 50.0, None)?
            };
            worst_scaled = worst_scaled.max((mass - 1.0).abs() / tol);
            details.push(format!("n={n} t={t}: mass-1 = {:+.2e}", mass - 1.0));
        }
    }
    // semigroup on H^3: p_{0.5} * p_{0.5} = p_1
    let half = |rho: f64| {
        heat_kernel(&HeatQuery { n: 3, t: 0.5, rho: rho.abs(), shifted: false })
            .unwrap_or(f64::NAN)
    };
    for rho in [0.5, 1.0, 2.0] {
        let conv = radial_convolve(3, &half, &half, rho, ConvolveOpts::smooth())?;
        let exact = heat_kernel(&HeatQuery { n: 3, t: 1.0, rho, shifted: false })?;
        worst_scaled = worst_scaled.max(((conv - exact).abs() / exact) / 1e-6);
    }
    Ok(CheckResult {
        name: "heat-normalization-semigroup".into(),
        passed: worst_scaled <= 1.0,
        worst: worst_scaled,
        tolerance: 1.0,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "worst error / per-case tolerance (1e-8 n=3, 1e-4 n=4, 1e-6 semigroup); {}",
            details.join("; ")
        ),
    })
}

/// Short-distance asymptotics across the fractional, shifted and
/// product families, hard-gated at rho = 1e-2.
pub fn short_distance_asymptotics() -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut specs = Vec::new();
    for n in [3usize, 4, 5] {
        for alpha in [0.5, 1.0, 1.5, 2.0, 2.5] {
            specs.push(KernelSpec::Fractional { n, alpha });
            for zeta in [0.5, 1.5] {
                specs.push(KernelSpec::Shifted { n, alpha, zeta });
            }
        }
    }
    specs.push(KernelSpec::Product { n: 5, factors: vec![(2.0, 0.5), (2.0, 1.5)] });
    // log grid over [1e-3, 1e-1] with 1e-2 as the middle entry
    let grid: Vec<f64> = (0..9).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect();
    let gate_index = 4;
    // When the subleading exponent n - alpha drops below 1 the first
    // correction term dominates the gate scale; its coefficient is exact for
    // the odd-dimensional shifted family,
    //   ratio(rho) = 1 + 2^(alpha-3) Gamma((alpha-3)/2)/Gamma((3-alpha)/2)
    //                    * zeta^(3-alpha) rho^(3-alpha) + O(rho^2),
    // so those specs are gated against the two-term expansion instead.
    let reference = |spec: &KernelSpec, rho: f64| -> f64 {
        match spec {
            KernelSpec::Shifted { n: 3, alpha, zeta } if *alpha > 2.0 && *alpha < 3.0 => {
                let c1 = 2f64.powf(alpha - 3.0)
                    * crate::specfun::gamma((alpha - 3.0) / 2.0)
                    / crate::specfun::gamma((3.0 - alpha) / 2.0)
                    * zeta.powf(3.0 - alpha);
                1.0 + c1 * rho.powf(3.0 - alpha)
            }
            _ => 1.0,
        }
    };
    let results: Vec<(f64, f64)> = specs
        .par_iter()
        .map(|spec| {
            let table = asymptotic_check(spec, &grid)?;
            Ok((
                (table.ratio[gate_index] - reference(spec, grid[gate_index])).abs(),
                table.fitted_c,
            ))
        })
        .collect::<Result<_>>()?;
    let worst = results.iter().map(|(g, _)| *g).fold(0.0, f64::max);
    let max_c = results.iter().map(|(_, c)| *c).fold(0.0, f64::max);
    let tol = 0.02;
    Ok(CheckResult {
        name: "short-distance-asymptotics".into(),
        passed: worst <= tol,
        worst,
        tolerance: tol,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "|gamma(sigma) rho^(n-sigma) K - expansion| at rho = 1e-2 over {} specs (two-term reference where n - sigma < 1); max fitted envelope C = {:.2}",
            specs.len(),
            max_c
        ),
    })
}

/// Signs of the closed-form partials of the Boggio auxiliary
/// function `H(s, t)`.
pub fn boggio_h_sign_battery(seed: u64) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    let mut checked = 0usize;
    for (n, k) in [(4usize, 1usize), (5, 2), (7, 3)] {
        for _ in 0..10_000 {
            let s = rng.gen_range(f64::MIN_POSITIVE..10.0);
            let t = rng.gen_range(f64::MIN_POSITIVE..10.0);
            let (_, h_s, h_t, h_st) = boggio_h(n, k, s, t)?;
            for slack in [-h_s, h_t, -h_st] {
                checked += 1;
                worst = worst.min(slack);
                if slack <= 0.0 {
                    violations += 1;
                }
            }
        }
    }
    Ok(CheckResult {
        name: "boggio-h-partial-signs".into(),
        passed: violations == 0,
        worst,
        tolerance: 0.0,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "H_s<0, H_t>0, H_st<0 on {checked} sampled sign checks; {violations} violations"
        ),
    })
}

/// Derivative and reflection inequalities of the Boggio Green's
/// function under hyperplane reflections.
pub fn boggio_reflection_battery(seed: u64) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut total_checked = 0;
    let mut total_violations = 0;
    let mut worst = f64::INFINITY;
    for spec in [
        KernelSpec::BoggioBall { n: 5, k: 2, r: 0.7 },
        KernelSpec::BoggioBall { n: 3, k: 1, r: 0.6 },
    ] {
        let report = green_reflection_checks(&spec, 10_000, seed)?;
        total_checked += report.checked;
        total_violations += report.violations;
        worst = worst.min(report.worst_margin);
    }
    Ok(CheckResult {
        name: "boggio-reflection-battery".into(),
        passed: total_violations == 0,
        worst,
        tolerance: 1e-10,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "{total_checked} inequality checks over 2 x 10^4 configurations; {total_violations} violations beyond 1e-10"
        ),
    })
}

/// The kernel specs exercised by the monotonicity sweep and the CLI defaults.
pub fn default_suite() -> Vec<KernelSpec> {
    vec![
        KernelSpec::Fractional { n: 3, alpha: 2.0 },
        KernelSpec::Fractional { n: 4, alpha: 1.5 },
        KernelSpec::Fractional { n: 5, alpha: 2.5 },
        KernelSpec::Shifted { n: 3, alpha: 2.0, zeta: 0.5 },
        KernelSpec::Shifted { n: 4, alpha: 2.0, zeta: 1.5 },
        KernelSpec::GjmsWhole { n: 5, k: 2 },
        KernelSpec::Product { n: 5, factors: vec![(2.0, 0.5), (2.0, 1.5)] },
        KernelSpec::LegendreResolvent { n: 3, lambda: -0.75 },
        KernelSpec::BoggioBall { n: 3, k: 1, r: 0.6 },
    ]
}

/// Strict radial decrease of every kernel in the default suite.
pub fn monotonicity_suite() -> Result<CheckResult> {
    let t0 = Instant::now();
    let results: Vec<(usize, f64)> = default_suite()
        .par_iter()
        .map(|spec| {
            // Boggio's radial slice lives on (0, 2 atanh r); clip the grid
            let hi = match spec {
                KernelSpec::BoggioBall { r, .. } => 2.0 * r.atanh() * 0.999,
                _ => 6.0,
            };
            let grid: Vec<f64> = (1..=200).map(|i| hi * i as f64 / 200.0).collect();
            let values: Vec<f64> = grid
                .iter()
                .map(|&rho| eval_kernel(spec, rho))
                .collect::<Result<_>>()?;
            let mut violations = 0usize;
            let mut min_drop = f64::INFINITY;
            for w in values.windows(2) {
                let drop = w[0] - w[1];
                min_drop = min_drop.min(drop);
                if drop <= 0.0 {
                    violations += 1;
                }
            }
            Ok((violations, min_drop))
        })
        .collect::<Result<_>>()?;
    let violations: usize = results.iter().map(|(v, _)| v).sum();
    let worst = results.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
    Ok(CheckResult {
        name: "kernel-monotonicity".into(),
        passed: violations == 0,
        worst,
        tolerance: 0.0,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "strict decrease on 200-point grids over {} specs; {} violations; smallest drop shown",
            default_suite().len(),
            violations
        ),
    })
}

/// The two-sided estimate on GJMS kernels, saturated at (3,1).
pub fn pk_bound_suite() -> Result<CheckResult> {
    let t0 = Instant::now();
    let grid: Vec<f64> = (0..50).map(|i| 10f64.powf(-2.0 + 2.7 * i as f64 / 49.0)).collect();
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    for (n, k) in [(5usize, 2usize), (7, 2), (7, 3)] {
        let report = bound_check(&KernelSpec::GjmsWhole { n, k }, &grid)?;
        violations += report.violations;
        worst = worst.min(report.worst_margin);
    }
    // saturation at (3,1): the bound is an identity
    let mut saturation = 0.0_f64;
    let gam = crate::specfun::gamma_norm(3, 2.0)?;
    for &rho in &grid {
        let lhs = eval_kernel(&KernelSpec::GjmsWhole { n: 3, k: 1 }, rho)?;
        let rhs = ((2.0 * (rho / 2.0).sinh()).powi(-1) - (2.0 * (rho / 2.0).cosh()).powi(-1)) / gam;
        saturation = saturation.max((lhs - rhs).abs() / rhs);
    }
    let passed = violations == 0 && saturation <= 1e-8;
    Ok(CheckResult {
        name: "pk-estimate-bound".into(),
        passed,
        worst: saturation,
        tolerance: 1e-8,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "bound on (5,2),(7,2),(7,3): {violations} violations (margin {worst:.2e}); (3,1) saturation error shown"
        ),
    })
}

/// Hardy-Littlewood-Sobolev spot check on H^3 with lambda = 2.
pub fn hls_spot_check(seed: u64) -> Result<CheckResult> {
    let t0 = Instant::now();
    let n = 3usize;
    let lambda = 2.0;
    let p = 2.0 * n as f64 / (2.0 * n as f64 - lambda); // = 3/2
    let c = hls_constant(n, lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
        .map(|_| {
            let gen = |rng: &mut ChaCha8Rng| {
                (0..3)
                    .flat_map(|_| {
                        [rng.gen_range(0.1..2.0), rng.gen_range(0.3..3.0)]
                    })
                    .collect::<Vec<f64>>()
            };
            (gen(&mut rng), gen(&mut rng))
        })
        .collect();
    let profile = |coeffs: &[f64]| {
        let c = coeffs.to_vec();
        move |rho: f64| -> f64 {
            c.chunks(2).map(|ab| ab[0] * (-ab[1] * rho * rho).exp()).sum()
        }
    };
    // For radial g on H^3 and K(d) = (2 sinh(d/2))^{-2} = 1/(2(cosh d - 1))
    // the spherical average of K has the closed-form antiderivative
    // (1/2) ln(cosh u - 1), so the convolution collapses to one 1D integral:
    //   (K * g)(r) = (pi / sinh r) int_0^inf g(s) sinh s
    //                  [ln(cosh(r+s) - 1) - ln(cosh(r-s) - 1)] ds.
    let convolve = |g: &dyn Fn(f64) -> f64, r: f64| -> f64 {
        let s_max = 12.0;
        // cosh u - 1 = 2 sinh^2(u/2) keeps the log finite as s -> r
        let mut weight = |s: f64| {
            let near = (r - s).abs().max(1e-300);
            g(s) * s.sinh() * 2.0 * (((r + s) / 2.0).sinh().ln() - (near / 2.0).sinh().ln())
        };
        let mut panels = crate::quad::graded_panels(0.0, r, false, true, 10, 8);
        panels.extend(&crate::quad::graded_panels(r, s_max, true, false, 10, 10)[1..]);
        PI / r.sinh() * crate::quad::integrate_panels(&mut weight, &panels, 24)
    };
    let ratios: Vec<f64> = pairs
        .par_iter()
        .map(|(fc, gc)| -> Result<f64> {
            let f = profile(fc);
            let g = profile(gc);
            let bilinear =
                radial_integral(n, &mut |rho| f(rho) * convolve(&g, rho), 10.0, None)?;
            let norm = |h: &dyn Fn(f64) -> f64| -> Result<f64> {
                Ok(radial_integral(n, &mut |rho| h(rho).powf(p), 12.0, None)?.powf(1.0 / p))
            };
            Ok(bilinear / (c * norm(&f)? * norm(&g)?))
        })
        .collect::<Result<_>>()?;
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(CheckResult {
        name: "hls-spot-check".into(),
        passed: worst <= 1.0,
        worst,
        tolerance: 1.0,
        seconds: t0.elapsed().as_secs_f64(),
        details: "max bilinear form / (C_{3,2} ||f||_p ||g||_p) over 100 seeded pairs".into(),
    })
}

/// One symmetry pipeline: solve, sweep, certify, check monotonicity and the
/// hyperplane derivative signs. Returns the scaled final deficit (deficit
/// divided by `1e-6 ||u||_inf`), which must be at most 1.
fn symmetry_pipeline_for(cfg: &SolveConfig) -> Result<(f64, String)> {
    let result = solve_integral_equation(cfg)?;
    if !result.converged {
        return Err(Error::domain("symmetry pipeline solve did not converge"));
    }
    let mesh = cfg.mesh()?;
    let field = GridField::new(&mesh, &result.u)?;
    let u = |x: &BallPoint| field.eval(x);
    let samples = sweep_samples(&mesh);
    let radius = cfg.domain_radius();
    let grid: Vec<f64> = (0..14).map(|i| i as f64 * radius / 15.0).collect();
    let tol = 1e-6 * result.sup_norm;
    let report = moving_plane_sweep(&u, &[0, 1, 2], &grid, &samples, tol)?;
    if !report.certified {
        return Err(Error::domain(format!(
            "sweep did not certify symmetry: {:?}",
            report.diagnostics
        )));
    }
    if report.center.iter().any(|c| c.abs() > 1e-9) {
        return Err(Error::domain(format!(
            "certified center {:?} is not the origin",
            report.center
        )));
    }
    let radial = radial_profile_check(&result.u, &mesh.nodes, &BallPoint::origin(3), 12)?;
    if !(radial.monotone && radial.conclusive) {
        return Err(Error::domain(format!(
            "radial profile not strictly decreasing (violation {:.2e})",
            radial.max_violation
        )));
    }
    let r_euc = (radius / 2.0).tanh();
    let lambdas: Vec<f64> = (1..=9).map(|i| 0.1 * i as f64 * r_euc).collect();
    let flags = hyperplane_derivative_flags(&u, 0, &lambdas, r_euc, 24, 1e-4)?;
    if !flags.iter().all(|f| *f) {
        return Err(Error::domain("du/dx1 >= 0 at a sampled hyperplane point"));
    }
    Ok((
        report.final_deficit / tol,
        format!("deficit {:.1e} (sup {:.2e})", report.final_deficit, result.sup_norm),
    ))
}

/// The moving-plane symmetry theorems at desk scale.
pub fn symmetry_pipelines() -> Result<CheckResult> {
    let t0 = Instant::now();
    let boggio = SolveConfig {
        kernel: KernelSpec::BoggioBall { n: 3, k: 1, r: 0.6 },
        truncation_radius: 0.0,
        radial_nodes: 16,
        angular_resolution: 6,
        nonlinearity: Nonlinearity::Constant { c: 1.0 },
        source: SourceSpec::None,
        damping: 0.5,
        initial_guess: InitialGuess::Zero,
        max_iterations: 500,
        tolerance: 1e-9,
    };
    let mut affine = boggio.clone();
    affine.nonlinearity = Nonlinearity::Affine { a: 0.1, b: 1.0 };
    affine.initial_guess = InitialGuess::OffCenterBump {
        center: vec![0.25, 0.1, -0.05],
        height: 1.0,
        width: 0.4,
    };
    let mut fractional = SolveConfig {
        kernel: KernelSpec::Fractional { n: 3, alpha: 2.0 },
        truncation_radius: 6.0,
        radial_nodes: 28,
        angular_resolution: 6,
        nonlinearity: Nonlinearity::Affine { a: 0.05, b: 0.0 },
        source: SourceSpec::GaussianRadial { amplitude: 1.0, width: 1.0 },
        damping: 0.5,
        initial_guess: InitialGuess::OffCenterBump {
            center: vec![0.3, -0.1, 0.1],
            height: 1.0,
            width: 0.5,
        },
        max_iterations: 500,
        tolerance: 1e-9,
    };
    fractional.initial_guess = InitialGuess::OffCenterBump {
        center: vec![0.3, -0.1, 0.1],
        height: 1.0,
        width: 0.5,
    };
    let mut worst = 0.0_f64;
    let mut notes = Vec::new();
    for (cfg, label) in [(&boggio, "boggio f=1"), (&affine, "boggio affine"), (&fractional, "fractional")]
    {
        let (scaled, note) = symmetry_pipeline_for(cfg)?;
        worst = worst.max(scaled);
        notes.push(format!("{label}: {note}"));
    }
    Ok(CheckResult {
        name: "moving-plane-symmetry".into(),
        passed: worst <= 1.0,
        worst,
        tolerance: 1.0,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "final deficit / (1e-6 sup-norm), certified + monotone + derivative signs; {}",
            notes.join("; ")
        ),
    })
}

/// Conformal and half-space transfer round trips plus the
/// finite-difference order of the second-order conformal identity.
pub fn conformal_consistency() -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst_round = 0.0_f64;
    for n in [3usize, 5] {
        let points: Vec<BallPoint> = (0..50)
            .map(|_| {
                BallPoint::new((0..n).map(|_| rng.gen_range(-0.35..0.35)).collect()).unwrap()
            })
            .collect();
        let values: Vec<f64> = (0..50).map(|_| rng.gen_range(0.1..2.0)).collect();
        for k in [1usize, 2] {
            let v = conformal_transfer(&values, &points, TransferDirection::ToEuclidean, k)?;
            let back = conformal_transfer(&v, &points, TransferDirection::ToHyperbolic, k)?;
            for (a, b) in values.iter().zip(&back) {
                worst_round = worst_round.max((a - b).abs() / a.abs());
            }
            let half: Vec<_> = points
                .iter()
                .map(ball_to_halfspace)
                .collect::<Result<_>>()?;
            let w = halfspace_transfer(&values, &half, TransferDirection::ToEuclidean, k, 1e-8)?;
            let back = halfspace_transfer(&w, &half, TransferDirection::ToHyperbolic, k, 1e-8)?;
            for (a, b) in values.iter().zip(&back) {
                worst_round = worst_round.max((a - b).abs() / a.abs());
            }
        }
    }
    // FD consistency of P_1 u = ((1-|x|^2)/2)^{1+n/2} (-Delta_e) v,
    // v = ((1-|x|^2)/2)^{1-n/2} u, with observed order in the stencil spacing
    let n = 3usize;
    let u = |x: &BallPoint| -> Result<f64> { Ok((-x.rho() * x.rho()).exp()) };
    let v = |c: &[f64]| -> Result<f64> {
        let p = BallPoint::new(c.to_vec())?;
        let conf = ((1.0 - p.norm_sq()) / 2.0).powf(1.0 - n as f64 / 2.0);
        Ok(conf * u(&p)?)
    };
    let x = BallPoint::new(vec![0.2, -0.1, 0.15]).unwrap();
    let residual = |h: f64| -> Result<f64> {
        let lap_h = laplace_beltrami_fd(&u, &x, h)?;
        let c = x.coords();
        let center = v(c)?;
        let mut lap_e = 0.0;
        for i in 0..n {
            let mut plus = c.to_vec();
            let mut minus = c.to_vec();
            plus[i] += h;
            minus[i] -= h;
            lap_e += (v(&plus)? - 2.0 * center + v(&minus)?) / (h * h);
        }
        let conf = (1.0 - x.norm_sq()) / 2.0;
        let rhs = conf.powf(1.0 + n as f64 / 2.0) * lap_e
            - n as f64 * (n as f64 - 2.0) / 4.0 * u(&x)?;
        Ok((lap_h - rhs).abs())
    };
    let (r1, r2) = (residual(0.02)?, residual(0.01)?);
    let order = (r1 / r2).log2();
    let passed = worst_round <= 1e-14 && order >= 1.8;
    Ok(CheckResult {
        name: "conformal-transfer".into(),
        passed,
        worst: worst_round,
        tolerance: 1e-14,
        seconds: t0.elapsed().as_secs_f64(),
        details: format!(
            "round-trip error shown; FD identity residuals {r1:.2e} -> {r2:.2e}, order {order:.2}"
        ),
    })
}

/// The full verification battery.
pub fn full_suite(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        h3_resolvent_oracle()?,
        legendre_cross_validation()?,
        heat_normalization_and_semigroup()?,
        short_distance_asymptotics()?,
        boggio_h_sign_battery(seed)?,
        boggio_reflection_battery(seed)?,
        monotonicity_suite()?,
        pk_bound_suite()?,
        hls_spot_check(seed)?,
        symmetry_pipelines()?,
        conformal_consistency()?,
    ])
}
