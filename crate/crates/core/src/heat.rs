//! Heat kernel on `H^n`.
//!
//! Odd dimensions `n = 2m+1` use the closed form
//!
//! `p_t(rho) = 2^{-m-1} pi^{-m-1/2} t^{-1/2} e^{-(n-1)^2 t/4}
//!             (-(1/sinh rho) d/d rho)^m e^{-rho^2/4t}`,
//!
//! with the iterated derivative expanded symbolically into a finite list of
//! monomial terms. Even dimensions `n = 2m` reduce to the odd case one
//! dimension up through the descent integral
//!
//! `p_t(rho) = (2 pi)^{-m-1/2} t^{-1/2} e^{-(n-1)^2 t/4}
//!             int_rho^inf sinh r (cosh r - cosh rho)^{-1/2}
//!             (-(1/sinh r) d/dr)^m e^{-r^2/4t} dr`.

use crate::error::{Error, Result};
use crate::quad::{graded_panels, integrate_panels};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// One monomial of the expanded iterated derivative:
/// `c * rho^a * cosh(rho)^b * sinh(rho)^{-e} * t^{-d} * exp(-rho^2/4t)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RadialTerm {
    pub c: f64,
    pub a: i32,
    pub b: i32,
    pub e: i32,
    pub d: i32,
}

/// Expansion of `(-(1/sinh rho) d/d rho)^m e^{-rho^2/4t}` as a term list.
///
/// Differentiation maps each monomial to four monomials (power rule on
/// `rho^a`, on `cosh^b`, on `sinh^{-e}` and the Gaussian factor); the outer
/// `-1/sinh` bumps `e` and flips the sign. Like terms are merged after each
/// step, which keeps the list size polynomial in `m`.
pub(crate) fn radial_terms(m: usize) -> Vec<RadialTerm> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Vec<RadialTerm>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&m) {
        return v.clone();
    }
    let mut terms = vec![RadialTerm {
        c: 1.0,
        a: 0,
        b: 0,
        e: 0,
        d: 0,
    }];
    for _ in 0..m {
        let mut next: HashMap<(i32, i32, i32, i32), f64> = HashMap::new();
        let mut push = |a: i32, b: i32, e: i32, d: i32, c: f64| {
            if c != 0.0 {
                *next.entry((a, b, e, d)).or_insert(0.0) += c;
            }
        };
        for t in &terms {
            // d/d rho, then multiply by -(1/sinh rho).
            push(t.a - 1, t.b, t.e + 1, t.d, -t.c * t.a as f64);
            push(t.a, t.b - 1, t.e, t.d, -t.c * t.b as f64);
            push(t.a, t.b + 1, t.e + 2, t.d, t.c * t.e as f64);
            push(t.a + 1, t.b, t.e + 1, t.d + 1, t.c * 0.5);
        }
        terms = next
            .into_iter()
            .map(|((a, b, e, d), c)| RadialTerm { c, a, b, e, d })
            .collect();
    }
    terms.sort_by_key(|t| (t.d, t.a, t.b, t.e));
    cache.lock().unwrap().insert(m, terms.clone());
    terms
}

/// Below this geodesic distance the direct term sum loses digits to
/// cancellation between `sinh^{-e}` poles and is replaced by a series.
pub(crate) const SERIES_RHO: f64 = 0.3;

/// Number of retained coefficients of the even power series in `rho^2`.
const SERIES_LEN: usize = 12;

fn series_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; SERIES_LEN];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            if i + j < SERIES_LEN {
                out[i + j] += ai * bj;
            }
        }
    }
    out
}

/// Reciprocal of a power series with unit constant term.
fn series_inv(a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; SERIES_LEN];
    out[0] = 1.0;
    for k in 1..SERIES_LEN {
        let mut s = 0.0;
        for j in 1..=k {
            s += a[j] * out[k - j];
        }
        out[k] = -s;
    }
    out
}

fn series_pow(a: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; SERIES_LEN];
    out[0] = 1.0;
    for _ in 0..p {
        out = series_mul(&out, a);
    }
    out
}

/// Series of `cosh rho` and `sinh(rho)/rho` in `x = rho^2`.
fn cosh_sinhc_series() -> (&'static [f64], &'static [f64]) {
    static S: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (c, s) = S.get_or_init(|| {
        let mut c = vec![0.0; SERIES_LEN];
        let mut s = vec![0.0; SERIES_LEN];
        let mut fact = 1.0;
        for j in 0..SERIES_LEN {
            // (2j)! and (2j+1)! built incrementally.
            if j > 0 {
                fact *= (2 * j - 1) as f64 * (2 * j) as f64;
            }
            c[j] = 1.0 / fact;
            s[j] = 1.0 / (fact * (2 * j + 1) as f64);
        }
        (c, s)
    });
    (c, s)
}

/// `sum_terms c rho^a cosh^b sinh^{-e} t^{-d}` without the Gaussian factor,
/// evaluated directly. Accurate for `rho >= SERIES_RHO`.
fn term_sum_direct(terms: &[RadialTerm], rho: f64, t: f64) -> f64 {
    let (ch, sh) = (rho.cosh(), rho.sinh());
    let mut s = 0.0;
    for tm in terms {
        s += tm.c * rho.powi(tm.a) * ch.powi(tm.b) * sh.powi(-tm.e) * t.powi(-tm.d);
    }
    s
}

/// Same sum through the merged Laurent series around `rho = 0`; the negative
/// powers cancel exactly and are dropped after merging.
fn term_sum_series(terms: &[RadialTerm], rho: f64, t: f64) -> f64 {
    let (cosh_s, sinhc_s) = cosh_sinhc_series();
    // coefficients indexed by the integer power of rho
    let mut merged: HashMap<i32, f64> = HashMap::new();
    for tm in terms {
        let series = series_mul(
            &series_pow(cosh_s, tm.b as usize),
            &series_pow(&series_inv(sinhc_s), tm.e as usize),
        );
        let scale = tm.c * t.powi(-tm.d);
        let offset = tm.a - tm.e;
        for (j, coef) in series.iter().enumerate() {
            *merged.entry(offset + 2 * j as i32).or_insert(0.0) += scale * coef;
        }
    }
    let mut s = 0.0;
    for (p, coef) in merged {
        if p >= 0 {
            s += coef * rho.powi(p);
        }
    }
    s
}

/// `(-(1/sinh rho) d/d rho)^m e^{-rho^2/4t}`, path chosen by distance.
pub(crate) fn iterated_derivative(m: usize, rho: f64, t: f64) -> f64 {
    let terms = radial_terms(m);
    let gauss = (-rho * rho / (4.0 * t)).exp();
    if rho < SERIES_RHO {
        term_sum_series(&terms, rho, t) * gauss
    } else {
        term_sum_direct(&terms, rho, t) * gauss
    }
}

/// Heat kernel query: dimension, time and geodesic distance. With `shifted`
/// set, the kernel of `e^{t(Delta + (n-1)^2/4)}` is returned instead, i.e.
/// the `e^{-(n-1)^2 t/4}` damping is dropped.
#[derive(Debug, Clone, Copy)]
pub struct HeatQuery {
    pub n: usize,
    pub t: f64,
    pub rho: f64,
    pub shifted: bool,
}

/// Heat kernel `p_t(rho)` on `H^n`, `n >= 2`.
pub fn heat_kernel(q: &HeatQuery) -> Result<f64> {
    let HeatQuery { n, t, rho, shifted } = *q;
    if n < 2 {
        return Err(Error::domain("heat kernel needs n >= 2"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("time t = {t} must be positive")));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::input(format!("distance rho = {rho} must be >= 0")));
    }
    let nf = n as f64;
    let damping = if shifted {
        1.0
    } else {
        (-(nf - 1.0) * (nf - 1.0) / 4.0 * t).exp()
    };
    if n % 2 == 1 {
        let m = (n - 1) / 2;
        let pref = 2.0_f64.powi(-(m as i32) - 1)
            * std::f64::consts::PI.powf(-(m as f64) - 0.5)
            * t.powf(-0.5);
        Ok(pref * damping * iterated_derivative(m, rho, t))
    } else {
        let m = n / 2;
        let pref = (2.0 * std::f64::consts::PI).powf(-(m as f64) - 0.5) * t.powf(-0.5);
        Ok(pref * damping * descent_integral(m, rho, t))
    }
}

/// `int_rho^inf sinh r (cosh r - cosh rho)^{-1/2} D^m e^{-r^2/4t} dr`
/// after the substitution `r = rho + u^2`, which together with
/// `cosh r - cosh rho = 2 sinh((r+rho)/2) sinh((r-rho)/2)` removes the
/// inverse-square-root endpoint singularity.
fn descent_integral(m: usize, rho: f64, t: f64) -> f64 {
    // Truncation: the Gaussian has dropped by e^{-46} once r^2 - rho^2 >= 184 t,
    // and independently of t the m >= 1 sinh powers together with the
    // square-root weight decay like e^{-r/4}, so r - rho never needs to exceed
    // ~190 (which also keeps sinh away from overflow for huge t).
    let r_max = (rho + 1.0)
        .max(((rho * rho + 184.0 * t).sqrt() + 1.0).min(rho + 190.0));
    let u_max = (r_max - rho).sqrt();
    let mut f = |u: f64| {
        let r = rho + u * u;
        let half = 0.5 * u * u;
        // sinh(u^2/2)/(u^2/2), finite at u = 0
        let sinhc = if half < 1e-8 { 1.0 } else { half.sinh() / half };
        // 2u dr / sqrt(2 sinh(rho+u^2/2) sinh(u^2/2)) with one factor of u
        // absorbed into sinhc, so the u -> 0 limit is clean even at rho = 0.
        let weight = 2.0 / ((rho + half).sinh() * sinhc).sqrt();
        r.sinh() * iterated_derivative(m, r, t) * weight
    };
    let panels = graded_panels(0.0, u_max, true, false, 10, 14);
    integrate_panels(&mut f, &panels, 30)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::radial_integral;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn p(n: usize, t: f64, rho: f64) -> f64 {
        heat_kernel(&HeatQuery {
            n,
            t,
            rho,
            shifted: false,
        })
        .unwrap()
    }

    #[test]
    fn term_list_small_orders() {
        let t1 = radial_terms(1);
        assert_eq!(t1.len(), 1);
        assert_eq!((t1[0].a, t1[0].b, t1[0].e, t1[0].d), (1, 0, 1, 1));
        assert_eq!(t1[0].c, 0.5);
        // D^2 has three monomials: -1/2 sinh^-2 t^-1 + 1/2 rho cosh sinh^-3 t^-1
        //                          + 1/4 rho^2 sinh^-2 t^-2
        let t2 = radial_terms(2);
        assert_eq!(t2.len(), 3);
    }

    #[test]
    fn n3_closed_form() {
        // p_t(rho) = (4 pi t)^{-3/2} e^{-t} rho/sinh(rho) e^{-rho^2/4t}
        for (t, rho) in [(0.5, 1.0), (1.0, 0.3), (2.0, 4.0), (0.1, 0.7)] {
            let exact =
                (4.0 * PI * t).powf(-1.5) * (-t).exp() * rho / rho.sinh() * (-rho * rho / (4.0 * t)).exp();
            assert_abs_diff_eq!(p(3, t, rho), exact, epsilon = 1e-13 * exact);
        }
    }

    #[test]
    fn n3_series_path_matches_closed_form() {
        for rho in [0.0_f64, 1e-6, 1e-3, 0.05, 0.0999] {
            let t = 0.7;
            let sinhc = if rho == 0.0 { 1.0 } else { rho.sinh() / rho };
            let exact = (4.0 * PI * t).powf(-1.5) * (-t).exp() / sinhc * (-rho * rho / (4.0 * t)).exp();
            assert_abs_diff_eq!(p(3, t, rho), exact, epsilon = 1e-13 * exact);
        }
    }

    #[test]
    fn path_switch_is_continuous() {
        for n in [3usize, 5, 7, 9] {
            for t in [0.2, 1.0] {
                // The direct path loses ~sinh(rho)^{-3m} eps to cancellation
                // right at the switch point, which caps the match near 1e-9.
                let below = p(n, t, SERIES_RHO - 1e-9);
                let above = p(n, t, SERIES_RHO + 1e-9);
                assert_abs_diff_eq!(below, above, epsilon = 1e-8 * below.abs());
            }
        }
    }

    /// Independent oracle for the iterated derivative: nested Richardson
    /// finite differences applied to the bare Gaussian.
    fn iterated_derivative_fd(m: usize, rho: f64, t: f64) -> f64 {
        fn apply(m: usize, rho: f64, t: f64, h: f64) -> f64 {
            if m == 0 {
                return (-rho * rho / (4.0 * t)).exp();
            }
            let d = (apply(m - 1, rho + h, t, h) - apply(m - 1, rho - h, t, h)) / (2.0 * h);
            -d / rho.sinh()
        }
        let h1 = 5e-3;
        let a = apply(m, rho, t, h1);
        let b = apply(m, rho, t, h1 / 2.0);
        // fourth-order Richardson combination of the two central differences
        (4.0 * b - a) / 3.0
    }

    #[test]
    fn higher_order_derivatives_match_finite_differences() {
        for m in [2usize, 3, 4] {
            for rho in [0.8, 1.5, 3.0] {
                let t = 1.0;
                let exact = iterated_derivative(m, rho, t);
                let fd = iterated_derivative_fd(m, rho, t);
                assert_abs_diff_eq!(exact, fd, epsilon = 2e-4 * exact.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn normalization_across_dimensions() {
        for n in [2usize, 3, 4, 5, 6, 7] {
            for t in [0.25, 1.0] {
                let mut f = |r: f64| p(n, t, r);
                let cap = 10.0 + 6.0 * t;
                let total = radial_integral(n, &mut f, cap, None).unwrap();
                assert_abs_diff_eq!(total, 1.0, epsilon = 2e-8);
            }
        }
    }

    #[test]
    fn even_dimension_short_time_euclidean_limit() {
        // As t -> 0 the on-diagonal value approaches (4 pi t)^{-n/2}.
        for n in [2usize, 4] {
            let t = 1e-3;
            let ratio = p(n, t, 0.0) * (4.0 * PI * t).powf(n as f64 / 2.0);
            assert!((ratio - 1.0).abs() < 5e-3, "n={n}: ratio {ratio}");
        }
    }

    #[test]
    fn shifted_flag_removes_damping() {
        for n in [3usize, 4] {
            let (t, rho) = (0.8, 1.1);
            let plain = p(n, t, rho);
            let shifted = heat_kernel(&HeatQuery {
                n,
                t,
                rho,
                shifted: true,
            })
            .unwrap();
            let nf = n as f64;
            assert_abs_diff_eq!(
                shifted,
                plain * ((nf - 1.0) * (nf - 1.0) / 4.0 * t).exp(),
                epsilon = 1e-12 * shifted
            );
        }
    }

    #[test]
    fn domain_errors() {
        assert!(heat_kernel(&HeatQuery { n: 1, t: 1.0, rho: 1.0, shifted: false }).is_err());
        assert!(heat_kernel(&HeatQuery { n: 3, t: 0.0, rho: 1.0, shifted: false }).is_err());
        assert!(heat_kernel(&HeatQuery { n: 3, t: 1.0, rho: -1.0, shifted: false }).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn positive_and_decreasing(n in 2usize..8, t in 0.1f64..3.0, rho in 0.0f64..5.0) {
            let a = p(n, t, rho);
            let b = p(n, t, rho + 0.05);
            prop_assert!(a > 0.0);
            prop_assert!(b > 0.0);
            prop_assert!(b <= a * (1.0 + 1e-9));
        }
    }
}
