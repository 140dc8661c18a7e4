//! Moving-plane measurement harness: reflection deficits across foliation
//! leaves, critical-leaf sweeps with symmetry-center estimation, and radial
//! monotonicity certification for discrete fields.

use crate::error::{Error, Result};
use crate::geom::{
    geodesic_distance, hyperboloid_to_ball, leaf_parameter, reflect_across_leaf, BallPoint,
    FoliationLeaf, HyperboloidPoint,
};
use rayon::prelude::*;
use serde::Serialize;

/// A scalar field on the ball model, evaluable at arbitrary points (zero
/// extension outside its support is the field's own responsibility).
pub type Field<'a> = dyn Fn(&BallPoint) -> Result<f64> + Sync + 'a;

/// Max over samples on the center side of the leaf (`leaf_parameter < t`) of
/// the positive part of `u(I_t x) - u(x)`. Zero for fields symmetric about
/// the leaf or decreasing away from it.
pub fn reflection_deficit(u: &Field, leaf: &FoliationLeaf, samples: &[BallPoint]) -> Result<f64> {
    one_sided_deficit(u, leaf, samples, false)
}

fn one_sided_deficit(
    u: &Field,
    leaf: &FoliationLeaf,
    samples: &[BallPoint],
    above: bool,
) -> Result<f64> {
    let deficits: Vec<f64> = samples
        .par_iter()
        .map(|x| -> Result<f64> {
            let p = leaf_parameter(x, leaf.direction)?;
            let in_side = if above { p > leaf.t } else { p < leaf.t };
            if !in_side {
                return Ok(0.0);
            }
            let reflected = reflect_across_leaf(x, leaf)?;
            Ok((u(&reflected)? - u(x)?).max(0.0))
        })
        .collect::<Result<_>>()?;
    Ok(deficits.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionSweep {
    pub direction: usize,
    /// Deficit curve of the sweep coming in from `+infinity` (samples on the
    /// near side of each leaf), indexed by signed leaf parameter.
    pub curve_from_plus: Vec<(f64, f64)>,
    /// Deficit curve of the sweep coming in from `-infinity` (samples on the
    /// far side of each leaf).
    pub curve_from_minus: Vec<(f64, f64)>,
    /// Smallest grid parameter whose entire upper tail of the `+infinity`
    /// sweep sits at tolerance; absent when even the outermost leaf violates.
    pub lambda_plus: Option<f64>,
    /// Largest grid parameter whose entire lower tail of the `-infinity`
    /// sweep sits at tolerance.
    pub lambda_minus: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub directions: Vec<DirectionSweep>,
    /// Leaf parameter of the estimated central leaf per direction,
    /// `(lambda_plus + lambda_minus) / 2`.
    pub center_leaf_parameters: Vec<f64>,
    /// Ball-model coordinates of the estimated symmetry center.
    pub center: Vec<f64>,
    /// Max two-sided deficit across the central leaves of all directions.
    pub final_deficit: f64,
    pub tolerance: f64,
    pub sup_norm: f64,
    pub certified: bool,
    pub diagnostics: Vec<String>,
}

impl SymmetryReport {
    /// Deficit curves as `direction,t,deficit` rows.
    pub fn deficit_csv(&self) -> String {
        let mut out = String::from("direction,t,deficit\n");
        for sweep in &self.directions {
            for (t, d) in sweep.curve_from_plus.iter().chain(&sweep.curve_from_minus) {
                out.push_str(&format!("{},{t:.17e},{d:.17e}\n", sweep.direction));
            }
        }
        out
    }
}

/// Moving-plane sweep: for each direction, bring a leaf in from both ends of
/// the `t` grid, record deficit curves, locate the critical parameters, and
/// certify symmetry about the leaf-intersection center when every central
/// deficit sits at tolerance.
pub fn moving_plane_sweep(
    u: &Field,
    directions: &[usize],
    t_grid: &[f64],
    samples: &[BallPoint],
    tolerance: f64,
) -> Result<SymmetryReport> {
    if samples.is_empty() {
        return Err(Error::input("sweep needs at least one sample point"));
    }
    let n = samples[0].dim();
    if directions.is_empty() || directions.iter().any(|&d| d >= n) {
        return Err(Error::input("directions must be valid coordinate indices"));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| *t < 0.0) || t_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::input("t grid must be nonnegative and increasing"));
    }
    if tolerance <= 0.0 {
        return Err(Error::input("tolerance must be positive"));
    }
    let sup_norm = {
        let vals: Vec<f64> = samples
            .par_iter()
            .map(|x| Ok(u(x)?.abs()))
            .collect::<Result<_>>()?;
        vals.into_iter().fold(0.0, f64::max)
    };
    // signed grid: leaves on both sides of the origin, both sweeps traverse
    // all of it so off-origin centers are found from either end
    let mut signed: Vec<f64> = t_grid.iter().map(|t| -t).chain(t_grid.iter().copied()).collect();
    signed.sort_by(f64::total_cmp);
    signed.dedup();
    let mut diagnostics = Vec::new();
    let mut sweeps = Vec::new();
    for &dir in directions {
        let mut from_plus = Vec::new();
        let mut from_minus = Vec::new();
        for &s in &signed {
            let leaf = FoliationLeaf { direction: dir, t: s };
            from_plus.push((s, one_sided_deficit(u, &leaf, samples, false)?));
            from_minus.push((s, one_sided_deficit(u, &leaf, samples, true)?));
        }
        // smallest parameter whose whole upper tail is at tolerance
        let lambda_plus = from_plus
            .iter()
            .rev()
            .take_while(|(_, d)| *d <= tolerance)
            .last()
            .map(|(s, _)| *s);
        // largest parameter whose whole lower tail is at tolerance
        let lambda_minus = from_minus
            .iter()
            .take_while(|(_, d)| *d <= tolerance)
            .last()
            .map(|(s, _)| *s);
        if lambda_plus.is_none() || lambda_minus.is_none() {
            diagnostics.push(format!(
                "direction {dir}: deficit above tolerance at the outermost leaf"
            ));
        }
        sweeps.push(DirectionSweep {
            direction: dir,
            curve_from_plus: from_plus,
            curve_from_minus: from_minus,
            lambda_plus,
            lambda_minus,
        });
    }
    let center_params: Vec<f64> = sweeps
        .iter()
        .map(|s| match (s.lambda_plus, s.lambda_minus) {
            (Some(p), Some(m)) => (p + m) / 2.0,
            _ => 0.0,
        })
        .collect();
    let mut params_by_direction = vec![0.0; n];
    for (s, t) in sweeps.iter().zip(&center_params) {
        params_by_direction[s.direction] = *t;
    }
    let center = match center_from_leaf_parameters(&params_by_direction) {
        Ok(c) => c,
        Err(e) => {
            diagnostics.push(format!("no consistent center: {e}"));
            BallPoint::origin(n)
        }
    };
    // two-sided deficit at the central leaf of every swept direction
    let mut final_deficit = 0.0_f64;
    for (s, t) in sweeps.iter().zip(&center_params) {
        let leaf = FoliationLeaf { direction: s.direction, t: *t };
        final_deficit = final_deficit
            .max(one_sided_deficit(u, &leaf, samples, false)?)
            .max(one_sided_deficit(u, &leaf, samples, true)?);
    }
    let certified = diagnostics.is_empty() && final_deficit <= tolerance;
    Ok(SymmetryReport {
        directions: sweeps,
        center_leaf_parameters: center_params,
        center: center.coords().to_vec(),
        final_deficit,
        tolerance,
        sup_norm,
        certified,
        diagnostics,
    })
}

/// Ball-model point whose leaf parameter in direction `i` is `t[i]` for every
/// coordinate direction: on the hyperboloid `xvec_i = x0 tanh(t_i)`.
pub fn center_from_leaf_parameters(t: &[f64]) -> Result<BallPoint> {
    let s: f64 = t.iter().map(|ti| ti.tanh() * ti.tanh()).sum();
    if s >= 1.0 {
        return Err(Error::domain("leaf parameters do not intersect in H^n"));
    }
    let x0 = 1.0 / (1.0 - s).sqrt();
    let xvec: Vec<f64> = t.iter().map(|ti| x0 * ti.tanh()).collect();
    hyperboloid_to_ball(&HyperboloidPoint::new(x0, xvec)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialCheck {
    pub monotone: bool,
    /// False when fewer than 3 distance bins received samples.
    pub conclusive: bool,
    pub max_violation: f64,
    pub bin_centers: Vec<f64>,
    pub bin_means: Vec<f64>,
}

/// Bin nodal values by geodesic distance to `center` and test the bin means
/// for strict decrease.
pub fn radial_profile_check(
    values: &[f64],
    points: &[BallPoint],
    center: &BallPoint,
    bins: usize,
) -> Result<RadialCheck> {
    if values.len() != points.len() {
        return Err(Error::input("values/points length mismatch"));
    }
    if bins < 2 {
        return Err(Error::input("need at least 2 bins"));
    }
    let dists: Vec<f64> = points
        .iter()
        .map(|p| geodesic_distance(p, center))
        .collect::<Result<_>>()?;
    let d_max = dists.iter().fold(0.0_f64, |m, d| m.max(*d));
    if d_max <= 0.0 {
        return Err(Error::input("all points coincide with the center"));
    }
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for (d, v) in dists.iter().zip(values) {
        let b = ((d / d_max * bins as f64) as usize).min(bins - 1);
        sums[b] += v;
        counts[b] += 1;
    }
    let mut centers = Vec::new();
    let mut means = Vec::new();
    for b in 0..bins {
        if counts[b] > 0 {
            centers.push((b as f64 + 0.5) * d_max / bins as f64);
            means.push(sums[b] / counts[b] as f64);
        }
    }
    let conclusive = means.len() >= 3;
    let max_violation = means
        .windows(2)
        .map(|w| (w[1] - w[0]).max(0.0))
        .fold(0.0, f64::max);
    Ok(RadialCheck {
        monotone: max_violation == 0.0,
        conclusive,
        max_violation,
        bin_centers: centers,
        bin_means: means,
    })
}

/// Sign check of `du/dx_i` (ball coordinates, central differences with step
/// `h`) at sampled points of the Euclidean hyperplane `x_i = lambda` inside
/// the ball of Euclidean radius `r_euc`. One flag per lambda, true when every
/// sampled derivative is strictly negative.
pub fn hyperplane_derivative_flags(
    u: &Field,
    direction: usize,
    lambdas: &[f64],
    r_euc: f64,
    samples_per_leaf: usize,
    h: f64,
) -> Result<Vec<bool>> {
    if !(0.0 < r_euc && r_euc < 1.0) {
        return Err(Error::input("hyperplane check needs 0 < r_euc < 1"));
    }
    let mut flags = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        if !(0.0 < lam && lam < r_euc) {
            return Err(Error::input("lambda must lie in (0, r_euc)"));
        }
        let disk = 0.8 * (r_euc * r_euc - lam * lam).sqrt();
        let mut all_negative = true;
        for s in 0..samples_per_leaf {
            // deterministic spiral of points on the hyperplane disk
            let frac = (s as f64 + 0.5) / samples_per_leaf as f64;
            let radius = disk * frac.sqrt();
            let angle = 2.399963229728653 * s as f64; // golden angle
            let mut coords = vec![0.0; 3.max(direction + 1)];
            coords[direction] = lam;
            let (a, b) = other_axes(direction, coords.len());
            coords[a] = radius * angle.cos();
            coords[b] = radius * angle.sin();
            let mut plus = coords.clone();
            let mut minus = coords.clone();
            plus[direction] += h;
            minus[direction] -= h;
            let dv = (u(&BallPoint::new(plus)?)? - u(&BallPoint::new(minus)?)?) / (2.0 * h);
            if dv >= 0.0 {
                all_negative = false;
            }
        }
        flags.push(all_negative);
    }
    Ok(flags)
}

fn other_axes(direction: usize, n: usize) -> (usize, usize) {
    let mut axes = (0..n).filter(|&i| i != direction);
    (axes.next().unwrap(), axes.next().unwrap())
}

/// Sample set for sweeps over a mesh: the nodes themselves plus radial
/// midpoints along every angular direction, which keeps the set invariant
/// under the mesh's own reflection symmetries.
pub fn sweep_samples(mesh: &crate::quad::BallMesh) -> Vec<BallPoint> {
    let na = mesh.len() / mesh.radial_nodes.len();
    let mut samples = mesh.nodes.clone();
    for ri in 0..mesh.radial_nodes.len().saturating_sub(1) {
        for ai in 0..na {
            let a = &mesh.nodes[ri * na + ai];
            let b = &mesh.nodes[(ri + 1) * na + ai];
            let mid: Vec<f64> = a
                .coords()
                .iter()
                .zip(b.coords())
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            if let Ok(p) = BallPoint::new(mid) {
                samples.push(p);
            }
        }
    }
    samples
}
