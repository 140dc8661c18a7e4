//! Quadrature on hyperbolic balls and on all of `H^n`: radial reduction,
//! angular rules, graded panels for power singularities and the hyperbolic
//! radial convolution.

use crate::error::{Error, Result};
use crate::geom::BallPoint;
use crate::specfun;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence and cached per order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&n) {
        return r.clone();
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / pp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    cache.lock().unwrap().insert(n, (nodes.clone(), weights.clone()));
    (nodes, weights)
}

/// `int_a^b f` by a single Gauss-Legendre rule of order `n`.
pub fn integrate_gl(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let c = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    let mut s = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        s += w * f(m + c * x);
    }
    s * c
}

/// Panel boundaries on `[a, b]`, geometrically graded toward the endpoints
/// flagged in `grade_a`/`grade_b` with `levels` halvings, plus `bulk` evenly
/// spaced interior panels.
pub fn graded_panels(a: f64, b: f64, grade_a: bool, grade_b: bool, levels: usize, bulk: usize) -> Vec<f64> {
    let len = b - a;
    let mut cuts = vec![];
    if grade_a {
        for k in (1..=levels).rev() {
            cuts.push(a + len * 0.25 * 0.5_f64.powi(k as i32 - 1));
        }
    }
    let lo = if grade_a { a + len * 0.25 } else { a };
    let hi = if grade_b { b - len * 0.25 } else { b };
    for i in 1..bulk {
        cuts.push(lo + (hi - lo) * i as f64 / bulk as f64);
    }
    if grade_b {
        cuts.push(hi);
        for k in 1..levels {
            cuts.push(b - len * 0.25 * 0.5_f64.powi(k as i32));
        }
    }
    let mut out = vec![a];
    out.extend(cuts);
    out.push(b);
    out.retain(|v| v.is_finite());
    out.dedup();
    out
}

/// Composite Gauss-Legendre over the given panel boundaries.
pub fn integrate_panels(f: &mut dyn FnMut(f64) -> f64, panels: &[f64], order: usize) -> f64 {
    let mut s = 0.0;
    for w in panels.windows(2) {
        s += integrate_gl(f, w[0], w[1], order);
    }
    s
}

/// Surface measure of the unit sphere `S^{n-1}`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / specfun::gamma(n as f64 / 2.0)
}

/// `|S^{n-1}| int_0^rho_max f(r) sinh^{n-1}(r) dr`.
///
/// `singularity` declares a power bound `f = O(r^{-(n - sigma)})` near zero,
/// handled by graded panels; pass `None` for bounded integrands. An infinite
/// `rho_max` is truncated adaptively once the running contribution is
/// negligible.
pub fn radial_integral(
    n: usize,
    f: &mut dyn FnMut(f64) -> f64,
    rho_max: f64,
    singularity: Option<f64>,
) -> Result<f64> {
    if let Some(sigma) = singularity {
        if sigma <= 0.0 {
            return Err(Error::domain(format!(
                "declared singularity exponent sigma = {sigma} makes the integral divergent"
            )));
        }
    }
    if rho_max <= 0.0 {
        return Ok(0.0);
    }
    let area = sphere_area(n);
    let mut g = |r: f64| f(r) * r.sinh().powi(n as i32 - 1);

    let finite_cap = rho_max.min(400.0);
    let first = finite_cap.min(1.0);
    let panels = graded_panels(0.0, first, singularity.is_some(), false, 40, 8);
    let mut total = integrate_panels(&mut g, &panels, 32);

    let mut lo = first;
    let mut quiet = 0;
    while lo < finite_cap {
        let hi = (lo + 1.0).min(finite_cap);
        let c = integrate_gl(&mut g, lo, hi, 32);
        total += c;
        if rho_max.is_infinite() {
            if c.abs() <= 1e-16 * total.abs().max(1e-300) {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        lo = hi;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite { node: 0 });
    }
    Ok(area * total)
}

/// Quadrature discretization of a geodesic ball: radial nodes times angular
/// directions, weights carrying the hyperbolic volume measure.
#[derive(Debug, Clone)]
pub struct BallMesh {
    pub n: usize,
    pub center: BallPoint,
    pub geodesic_radius: f64,
    pub radial_nodes: Vec<f64>,
    pub angular_nodes: Vec<Vec<f64>>,
    /// One weight per (radial, angular) pair, radial-major order.
    pub weights: Vec<f64>,
    /// Ball-model coordinates of every node, same order as `weights`.
    pub nodes: Vec<BallPoint>,
}

impl BallMesh {
    /// Origin-centered mesh with `nr` radial Gauss-Legendre nodes and the
    /// dimension-appropriate angular rule (product Gauss rules for n <= 4,
    /// symmetrized pseudo-random directions above).
    pub fn new_origin(n: usize, geodesic_radius: f64, nr: usize, angular_res: usize) -> Result<Self> {
        Self::new(BallPoint::origin(n), geodesic_radius, nr, angular_res)
    }

    pub fn new(center: BallPoint, geodesic_radius: f64, nr: usize, angular_res: usize) -> Result<Self> {
        let n = center.dim();
        if geodesic_radius <= 0.0 {
            return Err(Error::input("geodesic radius must be positive"));
        }
        let (rx, rw) = gauss_legendre(nr);
        let radial_nodes: Vec<f64> = rx
            .iter()
            .map(|x| 0.5 * geodesic_radius * (x + 1.0))
            .collect();
        let radial_weights: Vec<f64> = rw
            .iter()
            .zip(&radial_nodes)
            .map(|(w, r)| 0.5 * geodesic_radius * w * r.sinh().powi(n as i32 - 1))
            .collect();

        let (angular_nodes, angular_weights) = angular_rule(n, angular_res)?;

        let mut weights = Vec::with_capacity(radial_nodes.len() * angular_nodes.len());
        let mut nodes = Vec::with_capacity(weights.capacity());
        let at_origin = center.norm_sq() == 0.0;
        for (r, rw) in radial_nodes.iter().zip(&radial_weights) {
            let er = (r / 2.0).tanh();
            for (dir, aw) in angular_nodes.iter().zip(&angular_weights) {
                let p = BallPoint::new(dir.iter().map(|c| c * er).collect())?;
                let p = if at_origin {
                    p
                } else {
                    crate::geom::mobius_from_origin(&p, &center)?
                };
                nodes.push(p);
                weights.push(rw * aw);
            }
        }
        Ok(BallMesh {
            n,
            center,
            geodesic_radius,
            radial_nodes,
            angular_nodes,
            weights,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Exact hyperbolic volume of a geodesic ball of this radius.
    pub fn exact_volume(&self) -> f64 {
        let n = self.n;
        let mut one = |_r: f64| 1.0;
        radial_integral(n, &mut one, self.geodesic_radius, None).unwrap()
    }

    /// Versioned text snapshot: header line then one row per node.
    pub fn serialize_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "ballmesh v1 n={} radius={:.17e} nodes={}\n",
            self.n,
            self.geodesic_radius,
            self.len()
        ));
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            let coords: Vec<String> = p.coords().iter().map(|c| format!("{c:.17e}")).collect();
            s.push_str(&format!("{} {:.17e}\n", coords.join(" "), w));
        }
        s
    }
}

/// Angular rule on `S^{n-1}`: directions and weights summing to `|S^{n-1}|`.
fn angular_rule(n: usize, res: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    use std::f64::consts::PI;
    match n {
        2 => {
            let m = (4 * res).max(8);
            let dirs = (0..m)
                .map(|k| {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    vec![phi.cos(), phi.sin()]
                })
                .collect();
            let w = vec![2.0 * PI / m as f64; m];
            Ok((dirs, w))
        }
        3 => {
            // Gauss in cos(theta), uniform (even count) in phi.
            let nt = res.max(4);
            let np = (2 * res).max(8) / 2 * 2;
            let (tx, tw) = gauss_legendre(nt);
            let mut dirs = vec![];
            let mut ws = vec![];
            for (u, wu) in tx.iter().zip(&tw) {
                let st = (1.0 - u * u).sqrt();
                for k in 0..np {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / np as f64;
                    dirs.push(vec![st * phi.cos(), st * phi.sin(), *u]);
                    ws.push(wu * 2.0 * PI / np as f64);
                }
            }
            Ok((dirs, ws))
        }
        4 => {
            // dOmega = sin^2(t1) sin(t2) dt1 dt2 dphi
            let n1 = res.max(4);
            let n2 = res.max(4);
            let np = (2 * res).max(8) / 2 * 2;
            let (x1, w1) = gauss_legendre(n1);
            let (x2, w2) = gauss_legendre(n2);
            let mut dirs = vec![];
            let mut ws = vec![];
            for (a, wa) in x1.iter().zip(&w1) {
                let t1 = 0.5 * PI * (a + 1.0);
                let ja = 0.5 * PI * wa * t1.sin().powi(2);
                for (b, wb) in x2.iter().zip(&w2) {
                    let ct2 = *b; // Gauss in cos(t2)
                    let st2 = (1.0 - ct2 * ct2).sqrt();
                    for k in 0..np {
                        let phi = 2.0 * PI * (k as f64 + 0.5) / np as f64;
                        dirs.push(vec![
                            t1.cos(),
                            t1.sin() * ct2,
                            t1.sin() * st2 * phi.cos(),
                            t1.sin() * st2 * phi.sin(),
                        ]);
                        ws.push(ja * wb * 2.0 * PI / np as f64);
                    }
                }
            }
            Ok((dirs, ws))
        }
        _ => {
            // Equal-weight symmetrized directions.
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
            let half = (res * res * 8).max(64);
            let mut dirs = Vec::with_capacity(2 * half);
            for _ in 0..half {
                let mut v: Vec<f64> = (0..n)
                    .map(|_| {
                        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                        (-2.0 * a.ln()).sqrt() * (2.0 * PI * b).cos()
                    })
                    .collect();
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                v.iter_mut().for_each(|c| *c /= norm);
                dirs.push(v.clone());
                dirs.push(v.iter().map(|c| -c).collect());
            }
            let w = sphere_area(n) / dirs.len() as f64;
            let ws = vec![w; dirs.len()];
            Ok((dirs, ws))
        }
    }
}

/// `sum g(node) * weight` over a mesh.
pub fn ball_integral(mesh: &BallMesh, g: &mut dyn FnMut(&BallPoint) -> f64) -> Result<f64> {
    let mut s = 0.0;
    for (i, (p, w)) in mesh.nodes.iter().zip(&mesh.weights).enumerate() {
        let v = g(p);
        if !v.is_finite() {
            return Err(Error::NonFinite { node: i });
        }
        s += v * w;
    }
    Ok(s)
}

/// Evaluation options for [`radial_convolve`]: grading depth trades accuracy
/// near kernel singularities against cost.
#[derive(Debug, Clone, Copy)]
pub struct ConvolveOpts {
    pub outer_grade_levels: usize,
    pub inner_grade_levels: usize,
    pub bulk_panels: usize,
    pub order: usize,
    pub rho_cutoff: f64,
}

impl ConvolveOpts {
    /// For kernels with power singularities at the diagonal.
    pub fn singular() -> Self {
        ConvolveOpts {
            outer_grade_levels: 28,
            inner_grade_levels: 24,
            bulk_panels: 10,
            order: 16,
            rho_cutoff: 40.0,
        }
    }
    /// For smooth rapidly decaying profiles (heat kernels, bumps).
    pub fn smooth() -> Self {
        ConvolveOpts {
            outer_grade_levels: 6,
            inner_grade_levels: 6,
            bulk_panels: 8,
            order: 16,
            rho_cutoff: 40.0,
        }
    }
}

/// Hyperbolic radial convolution
/// `(f * g)(r) = |S^{n-2}| int_0^inf int_0^pi f(rho') g(d) sinh^{n-1}(rho') sin^{n-2}(phi) dphi drho'`
/// with `cosh d = cosh r cosh rho' - sinh r sinh rho' cos phi`.
pub fn radial_convolve(
    n: usize,
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    r: f64,
    opts: ConvolveOpts,
) -> Result<f64> {
    if r <= 0.0 {
        return Err(Error::domain("convolution point must have rho > 0"));
    }
    use std::f64::consts::PI;
    let area = sphere_area(n - 1);
    let (chr, shr) = (r.cosh(), r.sinh());
    let np = n as i32;

    let mut outer = |rp: f64| -> f64 {
        let (chp, shp) = (rp.cosh(), rp.sinh());
        let a = chr * chp;
        let b = shr * shp;
        let mut inner = |phi: f64| -> f64 {
            let chd = a - b * phi.cos();
            // acosh with guard against roundoff slightly below 1
            let d = if chd <= 1.0 { 0.0 } else { chd.acosh() };
            g(d) * phi.sin().powi(np - 2)
        };
        let panels = graded_panels(0.0, PI, true, false, opts.inner_grade_levels, opts.bulk_panels);
        let iv = integrate_panels(&mut inner, &panels, opts.order);
        f(rp) * shp.powi(np - 1) * iv
    };

    // rho' integral: graded toward 0 and toward rho' = r where g's diagonal
    // singularity sits, then regular panels out to the decay cutoff.
    let mut total = 0.0;
    let lvl = opts.outer_grade_levels;
    let p1 = graded_panels(0.0, r, true, true, lvl, opts.bulk_panels);
    total += integrate_panels(&mut outer, &p1, opts.order);
    let hi = (r + opts.rho_cutoff).min(400.0);
    let p2 = graded_panels(r, hi, true, false, lvl, (opts.bulk_panels * 4).max(16));
    total += integrate_panels(&mut outer, &p2, opts.order);
    if !total.is_finite() {
        return Err(Error::NonFinite { node: 0 });
    }
    Ok(area * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::{heat_kernel, HeatQuery};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn radial_integral_constant_n3() {
        // 4 pi int_0^1 sinh^2 = pi (sinh 2 - 2)
        let mut one = |_: f64| 1.0;
        let v = radial_integral(3, &mut one, 1.0, None).unwrap();
        assert_abs_diff_eq!(v, PI * (2.0_f64.sinh() - 2.0), epsilon = 1e-10);
    }

    #[test]
    fn radial_integral_empty_domain() {
        let mut one = |_: f64| 1.0;
        assert_eq!(radial_integral(3, &mut one, 0.0, None).unwrap(), 0.0);
    }

    #[test]
    fn radial_integral_divergent_declaration() {
        let mut f = |r: f64| r.powi(-3);
        assert!(radial_integral(3, &mut f, 1.0, Some(0.0)).is_err());
    }

    #[test]
    fn radial_integral_heat_normalization() {
        let mut p = |r: f64| {
            heat_kernel(&HeatQuery {
                n: 3,
                t: 1.0,
                rho: r,
                shifted: false,
            })
            .unwrap()
        };
        let v = radial_integral(3, &mut p, f64::INFINITY, None).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn mesh_volume_matches_radial_integral() {
        for n in [2usize, 3, 4, 5] {
            let mesh = BallMesh::new_origin(n, 1.5, 24, 8).unwrap();
            let rel = (mesh.volume() - mesh.exact_volume()).abs() / mesh.exact_volume();
            assert!(rel < 1e-8, "n={n} rel={rel:e}");
            assert!(mesh.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn ball_integral_odd_symmetry_and_radial_agreement() {
        let mesh = BallMesh::new_origin(3, 1.2, 24, 10).unwrap();
        let mut odd = |p: &BallPoint| p.coords()[0];
        let v = ball_integral(&mesh, &mut odd).unwrap();
        assert!(v.abs() < 1e-10, "odd integrand gave {v:e}");

        let mut gauss = |p: &BallPoint| (-p.rho().powi(2)).exp();
        let vb = ball_integral(&mesh, &mut gauss).unwrap();
        let mut gr = |r: f64| (-r * r).exp();
        let vr = radial_integral(3, &mut gr, 1.2, None).unwrap();
        assert_abs_diff_eq!(vb, vr, epsilon = 1e-8 * vr);
    }

    #[test]
    fn ball_integral_reports_nonfinite_node() {
        let mesh = BallMesh::new_origin(3, 1.0, 4, 4).unwrap();
        let mut bad = |p: &BallPoint| 1.0 / (p.coords()[0] - p.coords()[0]);
        match ball_integral(&mesh, &mut bad) {
            Err(Error::NonFinite { .. }) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn mesh_refinement_convergence() {
        let mut f = |p: &BallPoint| (1.0 + p.coords()[0]).cos() * (-p.rho()).exp();
        let coarse = BallMesh::new_origin(3, 1.0, 16, 8).unwrap();
        let fine = BallMesh::new_origin(3, 1.0, 32, 16).unwrap();
        let a = ball_integral(&coarse, &mut f).unwrap();
        let b = ball_integral(&fine, &mut f).unwrap();
        assert!((a - b).abs() <= 1e-8 * b.abs(), "a={a} b={b}");
    }

    #[test]
    fn convolve_commutes() {
        let f = |r: f64| (-r * r).exp();
        let g = |r: f64| 1.0 / (1.0 + r * r);
        let a = radial_convolve(3, &f, &g, 0.8, ConvolveOpts::smooth()).unwrap();
        let b = radial_convolve(3, &g, &f, 0.8, ConvolveOpts::smooth()).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10 * a.abs());
    }

    #[test]
    fn convolve_heat_semigroup() {
        let p = |t: f64| {
            move |r: f64| {
                heat_kernel(&HeatQuery {
                    n: 3,
                    t,
                    rho: r,
                    shifted: false,
                })
                .unwrap()
            }
        };
        let lhs = radial_convolve(3, &p(0.5), &p(0.5), 1.0, ConvolveOpts::smooth()).unwrap();
        let rhs = p(1.0)(1.0);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-6 * rhs);
    }

    #[test]
    fn convolve_peak_limit_recovers_other_factor() {
        // f_j a normalized sharp Gaussian bump: (f_j * g)(rho) -> g(rho).
        let g = |r: f64| 1.0 / (1.0 + r * r);
        let rho = 0.9;
        let mut prev_err = f64::INFINITY;
        for j in [2.0, 3.0, 4.0] {
            let w = 2.0_f64.powf(-j);
            let mut bump = move |r: f64| (-0.5 * (r / w).powi(2)).exp();
            let mass = radial_integral(3, &mut bump, f64::INFINITY, None).unwrap();
            let fb = move |r: f64| (-0.5 * (r / w).powi(2)).exp() / mass;
            let v = radial_convolve(3, &fb, &g, rho, ConvolveOpts::smooth()).unwrap();
            let err = (v - g(rho)).abs();
            assert!(err < prev_err, "width {w}: err {err} prev {prev_err}");
            prev_err = err;
        }
        // The limit is first order in the squared width, so w = 1/16 leaves a
        // genuine O(w^2) bias of a few 1e-3.
        assert!(prev_err < 6e-3);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(20))]
        #[test]
        fn convolve_preserves_radial_monotonicity(a in 0.3f64..2.0, b in 0.3f64..2.0) {
            let f = move |r: f64| (-a * r * r).exp();
            let g = move |r: f64| (1.0 + b * r * r).powi(-2);
            let grid: Vec<f64> = (1..=8).map(|i| 0.3 * i as f64).collect();
            let vals: Vec<f64> = grid
                .iter()
                .map(|&r| radial_convolve(3, &f, &g, r, ConvolveOpts::smooth()).unwrap())
                .collect();
            for w in vals.windows(2) {
                proptest::prop_assert!(w[1] < w[0] * (1.0 + 1e-9));
            }
        }
    }
}
