//! Special functions and named constants: Pochhammer, Gauss hypergeometric,
//! the real Legendre-Q combination, the normalization gamma(alpha), the HLS
//! constant and the Harish-Chandra Plancherel density.

use crate::error::{Error, Result};
use crate::quad::{graded_panels, integrate_panels};
use num_complex::Complex64;

/// Lanczos coefficients, g = 7.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

/// Gamma function on the real line (Lanczos approximation with reflection).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// `ln Gamma(z)` for complex argument (principal branch; reflection for
/// `Re z < 0.5`).
pub fn ln_gamma_complex(z: Complex64) -> Complex64 {
    use std::f64::consts::PI;
    if z.re < 0.5 {
        // ln Gamma(z) = ln(pi / sin(pi z)) - ln Gamma(1 - z)
        let s = (PI * z).sin();
        Complex64::new(PI.ln(), 0.0) - s.ln() - ln_gamma_complex(Complex64::new(1.0, 0.0) - z)
    } else {
        let z = z - 1.0;
        let mut a = Complex64::new(LANCZOS[0], 0.0);
        let t = z + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (z + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
    }
}

/// Rising factorial `(a)_k = a (a+1) ... (a+k-1)`, with `(a)_0 = 1`.
///
/// The empty-product base case is the standard convention; it is what makes
/// `F(a,b;c;0) = 1` hold.
pub fn pochhammer(a: f64, k: usize) -> f64 {
    let mut p = 1.0;
    for j in 0..k {
        p *= a + j as f64;
    }
    p
}

/// Arguments of the Gauss hypergeometric series `F(a,b;c;z)`.
#[derive(Debug, Clone, Copy)]
pub struct HypergeometricArgs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && (x - x.round()).abs() < 1e-12
}

/// Gauss hypergeometric function by its series on `z in [0, 1]`; at `z = 1`
/// (admissible when `c - a - b > 0`) the Gauss summation
/// `Gamma(c)Gamma(c-a-b)/(Gamma(c-a)Gamma(c-b))` is used.
pub fn gauss_2f1(args: &HypergeometricArgs) -> Result<f64> {
    let HypergeometricArgs { a, b, c, z } = *args;
    if is_nonpositive_integer(c) {
        return Err(Error::domain(format!("c = {c} is a nonpositive integer")));
    }
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::domain(format!("argument z = {z} outside [0, 1]")));
    }
    if z == 1.0 {
        if c - a - b <= 0.0 && !(is_nonpositive_integer(a) || is_nonpositive_integer(b)) {
            return Err(Error::domain("series divergent at z = 1 (c - a - b <= 0)"));
        }
        if !(is_nonpositive_integer(a) || is_nonpositive_integer(b)) {
            return Ok(gamma(c) * gamma(c - a - b) / (gamma(c - a) * gamma(c - b)));
        }
    }
    let s = c - a - b;
    if z > 0.9
        && (s - s.round()).abs() > 1e-8
        && !(is_nonpositive_integer(a) || is_nonpositive_integer(b))
    {
        // Connection formula in 1-z; both inner series now converge fast.
        let w = 1.0 - z;
        let first = gamma(c) * gamma(s) / (gamma(c - a) * gamma(c - b))
            * series_2f1(a, b, 1.0 - s, w)?;
        let second = gamma(c) * gamma(-s) / (gamma(a) * gamma(b))
            * w.powf(s)
            * series_2f1(c - a, c - b, 1.0 + s, w)?;
        return Ok(first + second);
    }
    series_2f1(a, b, c, z)
}

fn series_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..2_000_000u64 {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Accuracy {
        requested: 1e-12,
        achieved: (term / sum).abs(),
    })
}

/// Arguments of the Legendre function of the second kind.
#[derive(Debug, Clone, Copy)]
pub struct LegendreArgs {
    pub mu: f64,
    pub nu: f64,
    pub z: f64,
}

/// Real combination `q(mu,nu,z) = e^{-i pi mu} Q^mu_nu(z)`:
///
/// `2^{-nu-1} (Gamma(nu+mu+1)/Gamma(nu+1)) (z^2-1)^{-mu/2}
///  int_0^pi (z + cos t)^{mu-nu-1} (sin t)^{2 nu + 1} dt`.
///
/// The complex phase of `Q^mu_nu` never leaves this module; downstream the
/// resolvent formula multiplies by the matching inverse phase, so only this
/// real combination is ever needed. Implemented for `nu > -1` (integrability
/// of the sine power), which covers the resolvent range.
pub fn legendre_q_real(args: &LegendreArgs) -> Result<f64> {
    let LegendreArgs { mu, nu, z } = *args;
    if nu <= -1.0 {
        return Err(Error::domain(format!("nu = {nu} <= -1: divergent integrand")));
    }
    if z <= 1.0 {
        return Err(Error::domain(format!("z = {z} <= 1")));
    }
    if nu + mu + 1.0 <= 0.0 {
        return Err(Error::domain("nu + mu + 1 must be positive"));
    }
    let sin_pow = 2.0 * nu + 1.0;
    let cos_pow = mu - nu - 1.0;
    let mut f = |t: f64| (z + t.cos()).powf(cos_pow) * t.sin().powf(sin_pow);
    // Endpoint grading: the sine power may dip below 1 and (z + cos t) gets
    // steep near t = pi when z is close to 1.
    let panels = graded_panels(0.0, std::f64::consts::PI, true, true, 44, 24);
    let integral = integrate_panels(&mut f, &panels, 24);
    let pref = 2.0_f64.powf(-nu - 1.0) * gamma(nu + mu + 1.0) / gamma(nu + 1.0)
        * (z * z - 1.0).powf(-mu / 2.0);
    Ok(pref * integral)
}

/// `gamma(alpha) = pi^{n/2} 2^alpha Gamma(alpha/2) / Gamma(n/2 - alpha/2)`,
/// the normalization in the short-distance kernel estimates.
pub fn gamma_norm(n: usize, alpha: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::domain("gamma_norm needs n >= 3"));
    }
    if alpha <= 0.0 || alpha >= n as f64 {
        return Err(Error::domain(format!(
            "alpha = {alpha} outside (0, {n}) (Gamma pole at alpha = n)"
        )));
    }
    let nf = n as f64;
    Ok(std::f64::consts::PI.powf(nf / 2.0) * 2.0_f64.powf(alpha) * gamma(alpha / 2.0)
        / gamma(nf / 2.0 - alpha / 2.0))
}

/// Sharp Hardy-Littlewood-Sobolev constant
/// `C_{n,lambda} = pi^{lambda/2} Gamma(n/2 - lambda/2)/Gamma(n - lambda/2)
///  (Gamma(n/2)/Gamma(n))^{-1 + lambda/n}`.
pub fn hls_constant(n: usize, lambda: f64) -> Result<f64> {
    let nf = n as f64;
    if lambda <= 0.0 || lambda >= nf {
        return Err(Error::domain(format!("lambda = {lambda} outside (0, {n})")));
    }
    Ok(std::f64::consts::PI.powf(lambda / 2.0) * gamma(nf / 2.0 - lambda / 2.0)
        / gamma(nf - lambda / 2.0)
        * (gamma(nf / 2.0) / gamma(nf)).powf(-1.0 + lambda / nf))
}

/// Plancherel density `|c(lambda)|^{-2}` from the Harish-Chandra c-function
/// `c(lambda) = 2^{n-1-i lambda} Gamma(n/2) Gamma(i lambda) /
/// (Gamma((n-1+i lambda)/2) Gamma((1+i lambda)/2))`.
pub fn plancherel_density(n: usize, lambda: f64) -> f64 {
    let l = lambda.abs();
    if l == 0.0 {
        // |Gamma(i lambda)| ~ 1/lambda, so the density vanishes in the limit.
        return 0.0;
    }
    let nf = n as f64;
    let i_l = Complex64::new(0.0, l);
    let ln_abs_c = (nf - 1.0) * 2.0_f64.ln()
        + gamma(nf / 2.0).ln()
        + ln_gamma_complex(i_l).re
        - ln_gamma_complex(Complex64::new((nf - 1.0) / 2.0, l / 2.0)).re
        - ln_gamma_complex(Complex64::new(0.5, l / 2.0)).re;
    (-2.0 * ln_abs_c).exp()
}
