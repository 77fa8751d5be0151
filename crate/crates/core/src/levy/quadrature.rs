//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` (`b` may be `+inf`) to the given relative
/// tolerance.
///
/// Panels with `0 < a` and `b / a > 2` are pre-split geometrically so that
/// power-law densities near the origin are resolved panel by panel. An
/// infinite upper limit is handled with the substitution `x = 1/s`.
pub fn integrate<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a <= b) || a.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "quadrature bounds [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    if b.is_infinite() {
        if a <= 0.0 {
            return Err(Error::InvalidArgument(
                "infinite upper limit needs a positive lower limit".into(),
            ));
        }
        // ∫_a^∞ f(x) dx = ∫_0^{1/a} f(1/s) / s² ds
        let g = |s: f64| {
            if s == 0.0 {
                0.0
            } else {
                f(1.0 / s) / (s * s)
            }
        };
        return integrate_finite(g, 0.0, 1.0 / a, rel_tol);
    }
    integrate_finite(f, a, b, rel_tol)
}

fn integrate_finite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for (lo, hi) in panels(a, b) {
        total += simpson_panel(&f, lo, hi, rel_tol);
    }
    if !total.is_finite() {
        return Err(Error::MeasureDivergence { r1: a, r2: b });
    }
    Ok(total)
}

fn panels(a: f64, b: f64) -> Vec<(f64, f64)> {
    if a > 0.0 && b / a > 2.0 {
        let mut out = Vec::new();
        let mut lo = a;
        while lo * 2.0 < b {
            out.push((lo, lo * 2.0));
            lo *= 2.0;
        }
        out.push((lo, b));
        out
    } else {
        vec![(a, b)]
    }
}

fn simpson_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // refine once before fixing the absolute tolerance, so a lucky
    // three-point estimate cannot set it too loosely
    let (l, r) = (0.5 * (a + m), 0.5 * (m + b));
    let (fl, fr) = (f(l), f(r));
    let left = (m - a) / 6.0 * (fa + 4.0 * fl + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * fr + fb);
    let scale = (left + right).abs().max(whole.abs()).max(f64::MIN_POSITIVE);
    let eps = rel_tol * scale;
    recurse(f, a, m, fa, fl, fm, left, eps * 0.5, MAX_DEPTH)
        + recurse(f, m, b, fm, fr, fb, right, eps * 0.5, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (0.5 * (a + m), 0.5 * (m + b));
    let (fl, fr) = (f(l), f(r));
    let left = (m - a) / 6.0 * (fa + 4.0 * fl + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * fr + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps || !delta.is_finite() {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, fl, fm, left, eps * 0.5, depth - 1)
        + recurse(f, m, b, fm, fr, fb, right, eps * 0.5, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, -1.0, 3.0, 1e-12).unwrap();
        assert!((v - 12.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_near_zero() {
        let v = integrate(|x| x.powi(-2), 1e-6, 1.0, 1e-10).unwrap();
        let exact = 1e6 - 1.0;
        assert!(((v - exact) / exact).abs() < 1e-9, "{v}");
    }

    #[test]
    fn infinite_tail() {
        let v = integrate(|x| x.powi(-2), 2.0, f64::INFINITY, 1e-10).unwrap();
        assert!((v - 0.5).abs() < 1e-10);
        let e = integrate(|x| (-x).exp(), 1.0, f64::INFINITY, 1e-10).unwrap();
        assert!((e - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(integrate(|_| 1.0, 0.3, 0.3, 1e-10).unwrap(), 0.0);
    }
}
