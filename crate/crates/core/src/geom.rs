//! Hyperbolic geometry primitives in the Poincaré ball, half-space and
//! hyperboloid models, including the foliation reflections `I_t` used by the
//! moving-plane harness.
//!
//! Reflections are computed in the hyperboloid model, where `A_t` and `I` are
//! exact linear maps, and converted back to the ball.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Points closer to the unit sphere than this are rejected: the metric factor
/// `2/(1-|x|^2)` blows up and silently clamping would corrupt every kernel
/// evaluated afterwards.
const BOUNDARY_MARGIN: f64 = 1e-14;

/// A point of `H^n` in the Poincaré ball model, `|x| < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallPoint {
    coords: Vec<f64>,
}

/// A point of the hyperboloid `-x0^2 + |xvec|^2 = -1`, `x0 > 0`, in `R^{n,1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperboloidPoint {
    pub x0: f64,
    pub xvec: Vec<f64>,
}

/// A point of the upper half-space model, last coordinate positive.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpacePoint {
    coords: Vec<f64>,
}

/// A leaf `U_t` of the directional foliation of `H^n`: the image of the
/// totally geodesic hypersurface `{x_i = 0}` under the hyperbolic rotation
/// `A_t` acting on the `(x_0, x_i)` plane of the hyperboloid model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoliationLeaf {
    /// Coordinate index, 0-based, `0 <= direction < n`.
    pub direction: usize,
    /// Rotation parameter of `A_t`.
    pub t: f64,
}

impl BallPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::input(format!(
                "ball point needs dimension >= 2, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("non-finite ball coordinate"));
        }
        let r2: f64 = coords.iter().map(|c| c * c).sum();
        if r2 >= (1.0 - BOUNDARY_MARGIN) * (1.0 - BOUNDARY_MARGIN) {
            return Err(Error::input(format!(
                "point too close to the unit sphere: |x| = {}",
                r2.sqrt()
            )));
        }
        Ok(BallPoint { coords })
    }

    pub fn origin(n: usize) -> Self {
        BallPoint {
            coords: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    /// Geodesic distance to the origin, `rho(x) = log((1+|x|)/(1-|x|))`.
    pub fn rho(&self) -> f64 {
        let r = self.norm_sq().sqrt();
        ((1.0 + r) / (1.0 - r)).ln()
    }

    /// Ball point at geodesic distance `rho` from the origin along `dir`.
    pub fn from_radial(rho: f64, dir: &[f64]) -> Result<Self> {
        let norm: f64 = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::input("zero direction vector"));
        }
        let r = (rho / 2.0).tanh();
        BallPoint::new(dir.iter().map(|c| c / norm * r).collect())
    }
}

impl HyperboloidPoint {
    pub fn new(x0: f64, xvec: Vec<f64>) -> Result<Self> {
        if x0 <= 0.0 {
            return Err(Error::input("hyperboloid point needs x0 > 0"));
        }
        let q = -x0 * x0 + xvec.iter().map(|c| c * c).sum::<f64>();
        if (q + 1.0).abs() > 1e-9 {
            return Err(Error::input(format!(
                "hyperboloid constraint violated: -x0^2 + |xvec|^2 = {q}"
            )));
        }
        Ok(HyperboloidPoint { x0, xvec })
    }

    pub fn dim(&self) -> usize {
        self.xvec.len()
    }

    /// Lorentzian product `x . y = -x0 y0 + xvec . yvec`.
    pub fn lorentz_dot(&self, other: &HyperboloidPoint) -> f64 {
        -self.x0 * other.x0
            + self
                .xvec
                .iter()
                .zip(&other.xvec)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

impl HalfSpacePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        match coords.last() {
            Some(&xn) if xn > 0.0 => Ok(HalfSpacePoint { coords }),
            _ => Err(Error::input("half-space point needs last coordinate > 0")),
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

fn check_same_dim(x: &BallPoint, y: &BallPoint) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// Geodesic distance in the ball model,
/// `cosh d = 1 + 2|x-y|^2 / ((1-|x|^2)(1-|y|^2))`.
pub fn geodesic_distance(x: &BallPoint, y: &BallPoint) -> Result<f64> {
    check_same_dim(x, y)?;
    let diff2: f64 = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let denom = (1.0 - x.norm_sq()) * (1.0 - y.norm_sq());
    let s = diff2 / denom; // = sinh^2(d/2)
    // d = 2 asinh(sqrt(s)); stable for both tiny and large separations.
    Ok(2.0 * s.sqrt().asinh())
}

/// `2 sinh(d(x,y)/2)`, the quantity in the HLS kernel, computed without
/// forming `d` first.
pub fn two_sinh_half_distance(x: &BallPoint, y: &BallPoint) -> Result<f64> {
    check_same_dim(x, y)?;
    let diff2: f64 = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let denom = (1.0 - x.norm_sq()) * (1.0 - y.norm_sq());
    Ok(2.0 * (diff2 / denom).sqrt())
}

/// Ball -> hyperboloid: `x0 = (1+|x|^2)/(1-|x|^2)`, `xvec = 2x/(1-|x|^2)`.
pub fn ball_to_hyperboloid(x: &BallPoint) -> HyperboloidPoint {
    let r2 = x.norm_sq();
    let f = 1.0 / (1.0 - r2);
    HyperboloidPoint {
        x0: (1.0 + r2) * f,
        xvec: x.coords.iter().map(|c| 2.0 * c * f).collect(),
    }
}

/// Hyperboloid -> ball: `x = xvec/(1 + x0)`.
pub fn hyperboloid_to_ball(p: &HyperboloidPoint) -> Result<BallPoint> {
    let f = 1.0 / (1.0 + p.x0);
    BallPoint::new(p.xvec.iter().map(|c| c * f).collect())
}

/// Ball -> half-space via the inversion through the sphere of radius `sqrt(2)`
/// centered at `-e_n` (the Cayley map). The map is an involution.
pub fn ball_to_halfspace(x: &BallPoint) -> Result<HalfSpacePoint> {
    HalfSpacePoint::new(cayley(&x.coords))
}

/// Half-space -> ball; same inversion.
pub fn halfspace_to_ball(y: &HalfSpacePoint) -> Result<BallPoint> {
    BallPoint::new(cayley(&y.coords))
}

fn cayley(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    // |x + e_n|^2
    let mut s = 0.0;
    for (i, &c) in x.iter().enumerate() {
        let v = if i == n - 1 { c + 1.0 } else { c };
        s += v * v;
    }
    let f = 2.0 / s;
    let mut out = Vec::with_capacity(n);
    for (i, &c) in x.iter().enumerate() {
        if i == n - 1 {
            out.push(-1.0 + f * (c + 1.0));
        } else {
            out.push(f * c);
        }
    }
    out
}

/// Geodesic distance in the half-space model,
/// `cosh d = 1 + |x-y|^2/(2 x_n y_n)`.
pub fn halfspace_distance(x: &HalfSpacePoint, y: &HalfSpacePoint) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::input("dimension mismatch"));
    }
    let diff2: f64 = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let xn = x.coords[x.dim() - 1];
    let yn = y.coords[y.dim() - 1];
    let s = diff2 / (4.0 * xn * yn); // sinh^2(d/2)
    Ok(2.0 * s.sqrt().asinh())
}

/// Reflection `I_t = A_t o I o A_{-t}` across the foliation leaf `U_t`,
/// computed in the hyperboloid model.
pub fn reflect_across_leaf(x: &BallPoint, leaf: &FoliationLeaf) -> Result<BallPoint> {
    if leaf.direction >= x.dim() {
        return Err(Error::input(format!(
            "leaf direction {} invalid for dimension {}",
            leaf.direction,
            x.dim()
        )));
    }
    let mut h = ball_to_hyperboloid(x);
    let i = leaf.direction;
    let (c, s) = (leaf.t.cosh(), leaf.t.sinh());
    // A_{-t}
    let (x0, xi) = (c * h.x0 - s * h.xvec[i], -s * h.x0 + c * h.xvec[i]);
    // I then A_t
    let (x0, xi) = (c * x0 - s * xi, s * x0 - c * xi);
    h.x0 = x0;
    h.xvec[i] = xi;
    hyperboloid_to_ball(&h)
}

/// Leaf parameter of the leaf through `x` in the given direction:
/// `t` with `tanh t = xvec_i / x0` on the hyperboloid.
pub fn leaf_parameter(x: &BallPoint, direction: usize) -> Result<f64> {
    if direction >= x.dim() {
        return Err(Error::input("direction out of range"));
    }
    let h = ball_to_hyperboloid(x);
    Ok((h.xvec[direction] / h.x0).atanh())
}

/// Möbius self-map of the ball carrying `y` to the origin (an isometry),
/// `T_y(x) = ((1-|y|^2)(x-y) - |x-y|^2 y) / (1 - 2 x.y + |x|^2 |y|^2)`.
pub fn mobius_translate(x: &BallPoint, y: &BallPoint) -> Result<BallPoint> {
    check_same_dim(x, y)?;
    let x2 = x.norm_sq();
    let y2 = y.norm_sq();
    let xy: f64 = x.coords.iter().zip(&y.coords).map(|(a, b)| a * b).sum();
    let d2: f64 = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let denom = 1.0 - 2.0 * xy + x2 * y2;
    let out: Vec<f64> = x
        .coords
        .iter()
        .zip(&y.coords)
        .map(|(a, b)| ((1.0 - y2) * (a - b) - d2 * b) / denom)
        .collect();
    BallPoint::new(out)
}

/// Möbius map carrying the origin to `c` (inverse direction of
/// [`mobius_translate`]): `x -> T_{-c}(x)`.
pub fn mobius_from_origin(x: &BallPoint, c: &BallPoint) -> Result<BallPoint> {
    let neg = BallPoint::new(c.coords.iter().map(|v| -v).collect())?;
    mobius_translate(x, &neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_ball_point(rng: &mut impl Rng, n: usize, rmax: f64) -> BallPoint {
        loop {
            let coords: Vec<f64> = (0..n).map(|_| rng.gen_range(-rmax..rmax)).collect();
            if coords.iter().map(|c| c * c).sum::<f64>() < rmax * rmax {
                return BallPoint::new(coords).unwrap();
            }
        }
    }

    #[test]
    fn distance_coincident_points_is_zero() {
        let o = BallPoint::origin(3);
        assert_eq!(geodesic_distance(&o, &o).unwrap(), 0.0);
    }

    #[test]
    fn distance_origin_formula() {
        // rho = log((1+0.5)/(1-0.5)) = log 3, cross-checked by numeric
        // arc-length integration of 2/(1-r^2) along the radius.
        let o = BallPoint::origin(3);
        let x = BallPoint::new(vec![0.5, 0.0, 0.0]).unwrap();
        let d = geodesic_distance(&o, &x).unwrap();
        assert_abs_diff_eq!(d, 3.0_f64.ln(), epsilon = 1e-14);

        let m = 20_000;
        let h = 0.5 / m as f64;
        let mut arc = 0.0;
        for i in 0..m {
            let r = (i as f64 + 0.5) * h;
            arc += 2.0 / (1.0 - r * r) * h;
        }
        assert_abs_diff_eq!(d, arc, epsilon = 1e-8);
    }

    #[test]
    fn distance_additivity_along_diameter() {
        let x = BallPoint::new(vec![0.3, 0.0, 0.0]).unwrap();
        let y = BallPoint::new(vec![-0.3, 0.0, 0.0]).unwrap();
        let d = geodesic_distance(&x, &y).unwrap();
        assert_abs_diff_eq!(d, 2.0 * (13.0_f64 / 7.0).ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(d, x.rho() + y.rho(), epsilon = 1e-13);
    }

    #[test]
    fn distance_dimension_mismatch() {
        let x = BallPoint::origin(2);
        let y = BallPoint::origin(3);
        assert!(matches!(geodesic_distance(&x, &y), Err(Error::Input(_))));
    }

    #[test]
    fn near_boundary_point_rejected() {
        assert!(BallPoint::new(vec![1.0 - 1e-16, 0.0]).is_err());
    }

    #[test]
    fn reflection_at_t_zero_is_coordinate_flip() {
        let x = BallPoint::new(vec![0.2, -0.4, 0.1]).unwrap();
        let leaf = FoliationLeaf { direction: 0, t: 0.0 };
        let rx = reflect_across_leaf(&x, &leaf).unwrap();
        assert_abs_diff_eq!(rx.coords()[0], -0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(rx.coords()[1], -0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(rx.coords()[2], 0.1, epsilon = 1e-14);
    }

    #[test]
    fn reflection_is_involutive_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = random_ball_point(&mut rng, 3, 0.9);
            let y = random_ball_point(&mut rng, 3, 0.9);
            let leaf = FoliationLeaf {
                direction: rng.gen_range(0..3),
                t: rng.gen_range(-2.0..2.0),
            };
            let rx = reflect_across_leaf(&x, &leaf).unwrap();
            let rrx = reflect_across_leaf(&rx, &leaf).unwrap();
            for (a, b) in rrx.coords().iter().zip(x.coords()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            let ry = reflect_across_leaf(&y, &leaf).unwrap();
            let d0 = geodesic_distance(&x, &y).unwrap();
            let d1 = geodesic_distance(&rx, &ry).unwrap();
            assert_abs_diff_eq!(d0, d1, epsilon = 1e-12);
        }
    }

    #[test]
    fn reflection_fixes_its_leaf() {
        // A point on U_t satisfies tanh t = xvec_i/x0; build one and reflect.
        let t = 0.7_f64;
        // Take hyperboloid point with x1/x0 = tanh t.
        let x2 = 0.3_f64;
        // -x0^2 + x1^2 + x2^2 = -1 with x1 = x0 tanh t:
        // x0^2 (tanh^2 t - 1) = -1 - x2^2 => x0 = sqrt((1+x2^2)) cosh t
        let x0 = (1.0 + x2 * x2).sqrt() * t.cosh();
        let h = HyperboloidPoint::new(x0, vec![x0 * t.tanh(), x2, 0.0]).unwrap();
        let b = hyperboloid_to_ball(&h).unwrap();
        let leaf = FoliationLeaf { direction: 0, t };
        let rb = reflect_across_leaf(&b, &leaf).unwrap();
        for (a, c) in rb.coords().iter().zip(b.coords()) {
            assert_abs_diff_eq!(a, c, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(leaf_parameter(&b, 0).unwrap(), t, epsilon = 1e-13);
    }

    #[test]
    fn model_conversion_examples() {
        let o = BallPoint::origin(3);
        let h = ball_to_hyperboloid(&o);
        assert_eq!(h.x0, 1.0);
        assert!(h.xvec.iter().all(|&c| c == 0.0));

        let x = BallPoint::new(vec![0.5, 0.0, 0.0]).unwrap();
        let h = ball_to_hyperboloid(&x);
        assert_abs_diff_eq!(h.x0, 5.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h.xvec[0], 4.0 / 3.0, epsilon = 1e-14);
        let q = -h.x0 * h.x0 + h.xvec.iter().map(|c| c * c).sum::<f64>();
        assert_abs_diff_eq!(q, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn model_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = random_ball_point(&mut rng, 3, 0.95);
            let h = ball_to_halfspace(&x).unwrap();
            let back = halfspace_to_ball(&h).unwrap();
            for (a, b) in back.coords().iter().zip(x.coords()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            let hb = ball_to_hyperboloid(&x);
            let back = hyperboloid_to_ball(&hb).unwrap();
            for (a, b) in back.coords().iter().zip(x.coords()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn halfspace_distances_agree_with_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = random_ball_point(&mut rng, 3, 0.9);
            let y = random_ball_point(&mut rng, 3, 0.9);
            let db = geodesic_distance(&x, &y).unwrap();
            let dh = halfspace_distance(
                &ball_to_halfspace(&x).unwrap(),
                &ball_to_halfspace(&y).unwrap(),
            )
            .unwrap();
            assert_abs_diff_eq!(db, dh, epsilon = 1e-12);
        }
    }

    #[test]
    fn mobius_translate_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = random_ball_point(&mut rng, 3, 0.9);
            let y = random_ball_point(&mut rng, 3, 0.9);
            // T_y(y) = 0
            let ty = mobius_translate(&y, &y).unwrap();
            assert!(ty.norm_sq() < 1e-24);
            // d(T_y(x), 0) = d(x, y)
            let tx = mobius_translate(&x, &y).unwrap();
            assert_abs_diff_eq!(
                tx.rho(),
                geodesic_distance(&x, &y).unwrap(),
                epsilon = 1e-12
            );
            // T_0 = identity
            let t0 = mobius_translate(&x, &BallPoint::origin(3)).unwrap();
            for (a, b) in t0.coords().iter().zip(x.coords()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn sinh_half_distance_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = random_ball_point(&mut rng, 4, 0.9);
            let y = random_ball_point(&mut rng, 4, 0.9);
            let d = geodesic_distance(&x, &y).unwrap();
            let lhs = 2.0 * (d / 2.0).sinh();
            let rhs = two_sinh_half_distance(&x, &y).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12 * (1.0 + rhs));
        }
    }
}
