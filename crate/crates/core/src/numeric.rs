//! Shared numerical kernels: log-domain summation, adaptive Simpson
//! quadrature, least-squares fitting, and bracketed root finding for
//! monotone functions.

use crate::error::{NifsError, Result};

/// log(exp(a) + exp(b)) without overflow.
#[inline]
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Streaming log-sum-exp accumulator. Deterministic for a fixed feed order.
#[derive(Debug, Clone, Copy)]
pub struct LogSumAcc {
    max: f64,
    sum: f64,
    count: u64,
}

impl LogSumAcc {
    pub fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0, count: 0 }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn log_sum(&self) -> f64 {
        if self.count == 0 || self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

impl Default for LogSumAcc {
    fn default() -> Self {
        Self::new()
    }
}

/// log Σ exp(x_i) over a slice (two-pass max shift).
pub fn logsumexp(xs: &[f64]) -> f64 {
    let mut acc = LogSumAcc::new();
    for &x in xs {
        acc.push(x);
    }
    acc.log_sum()
}

/// Adaptive composite Simpson integration of `f` over [a, b] to absolute
/// tolerance `tol`. Handles a > b by sign flip.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -adaptive_simpson(f, b, a, tol);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Ordinary least squares y = slope*x + intercept, plus R².
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LineFit { slope, intercept, r_squared })
}

/// Outcome of a bracketed search for the sign change of a non-increasing
/// function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Bracketing {
    /// Sign change localized inside the bracket.
    Interior,
    /// |f| fell below the zero tolerance at the returned point.
    ExactRoot,
    /// f stayed nonnegative on the whole bracket; root reported at `hi`.
    UnbracketedAbove,
    /// f was already negative at `lo`; root reported at `lo`.
    NegativeAtLo,
}

#[derive(Debug, Clone, Copy)]
pub struct BracketedRoot {
    pub root: f64,
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub bracketing: Bracketing,
}

/// Bisection for a non-increasing `f` on [lo, hi]. Shrinks the bracket to
/// width ≤ `tol`. Every evaluation is checked against the monotone-decrease
/// assumption; a + − + sign pattern is reported as an inconsistency.
pub fn bisect_decreasing<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    zero_tol: f64,
) -> Result<BracketedRoot> {
    if !(lo < hi) || tol <= 0.0 {
        return Err(NifsError::Precondition(format!(
            "bisect needs lo < hi and tol > 0; got [{lo}, {hi}], tol {tol}"
        )));
    }
    let mut evals: Vec<(f64, f64)> = Vec::new();
    let eval = |t: f64, f: &mut F, evals: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = f(t)?;
        if !v.is_finite() {
            return Err(NifsError::Inconsistent(format!("f({t}) is not finite")));
        }
        // monotone check against all previous evaluations
        for &(t0, v0) in evals.iter() {
            let slack = 1e-12 * (1.0 + v0.abs().max(v.abs()));
            if (t0 < t && v > v0 + slack) || (t0 > t && v < v0 - slack) {
                return Err(NifsError::Inconsistent(format!(
                    "non-monotone evaluations: f({t0}) = {v0}, f({t}) = {v}"
                )));
            }
        }
        evals.push((t, v));
        Ok(v)
    };

    let f_lo = eval(lo, &mut f, &mut evals)?;
    if f_lo.abs() <= zero_tol {
        return Ok(BracketedRoot { root: lo, lo, hi: lo, f_lo, f_hi: f_lo, bracketing: Bracketing::ExactRoot });
    }
    if f_lo < 0.0 {
        return Ok(BracketedRoot { root: lo, lo, hi, f_lo, f_hi: f_lo, bracketing: Bracketing::NegativeAtLo });
    }
    let f_hi = eval(hi, &mut f, &mut evals)?;
    if f_hi.abs() <= zero_tol {
        return Ok(BracketedRoot { root: hi, lo: hi, hi, f_lo: f_hi, f_hi, bracketing: Bracketing::ExactRoot });
    }
    if f_hi > 0.0 {
        return Ok(BracketedRoot { root: hi, lo, hi, f_lo, f_hi, bracketing: Bracketing::UnbracketedAbove });
    }

    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f_lo, f_hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break; // bracket at floating-point resolution
        }
        let fm = eval(m, &mut f, &mut evals)?;
        if fm.abs() <= zero_tol {
            return Ok(BracketedRoot { root: m, lo: a, hi: b, f_lo: fa, f_hi: fb, bracketing: Bracketing::ExactRoot });
        }
        if fm > 0.0 {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    Ok(BracketedRoot {
        root: 0.5 * (a + b),
        lo: a,
        hi: b,
        f_lo: fa,
        f_hi: fb,
        bracketing: Bracketing::Interior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logaddexp_matches_naive_in_range() {
        let v = logaddexp(0.5, 2.0);
        assert!((v - (0.5f64.exp() + 2.0f64.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        // naive sum of exp overflows here
        let xs = [1234.0, 1232.0];
        let expected = 1234.0 + (1.0 + (-2.0f64).exp()).ln();
        assert!((logsumexp(&xs) - expected).abs() < 1e-12);
        assert!((LogSumAcc::default().log_sum()).is_infinite());
    }

    #[test]
    fn streaming_matches_two_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64) * 0.37 - 20.0).collect();
        let mut acc = LogSumAcc::new();
        for &x in &xs {
            acc.push(x);
        }
        let shifted: f64 = xs.iter().map(|x| (x - 17.0).exp()).sum::<f64>().ln() + 17.0;
        assert!((acc.log_sum() - shifted).abs() < 1e-11);
    }

    #[test]
    fn simpson_polynomial_exact() {
        // Simpson is exact on cubics
        let v = adaptive_simpson(&|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_oscillatory() {
        let v = adaptive_simpson(&|x: f64| (10.0 * x).sin(), 0.0, 1.0, 1e-12);
        let exact = (1.0 - (10.0f64).cos()) / 10.0;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn simpson_reversed_interval() {
        let v = adaptive_simpson(&|x: f64| x, 1.0, 0.0, 1e-12);
        assert!((v + 0.5).abs() < 1e-13);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-13);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-13);
    }

    #[test]
    fn bisect_finds_interior_root() {
        let r = bisect_decreasing(|t| Ok(1.0 - 3.0 * t), 0.0, 1.0, 1e-9, 1e-15).unwrap();
        assert!((r.root - 1.0 / 3.0).abs() < 1e-8);
        assert_eq!(r.bracketing, Bracketing::Interior);
        assert!(r.f_lo >= 0.0 && r.f_hi <= 0.0);
    }

    #[test]
    fn bisect_classifies_exact_midpoint_root() {
        let r = bisect_decreasing(|t| Ok(1.0 - 2.0 * t), 0.0, 1.0, 1e-9, 1e-15).unwrap();
        assert_eq!(r.bracketing, Bracketing::ExactRoot);
        assert_eq!(r.root, 0.5);
    }

    #[test]
    fn bisect_reports_unbracketed() {
        let r = bisect_decreasing(|t| Ok(1.0 - 0.1 * t), 0.0, 1.0, 1e-9, 1e-15).unwrap();
        assert_eq!(r.bracketing, Bracketing::UnbracketedAbove);
        assert_eq!(r.root, 1.0);
    }

    #[test]
    fn bisect_detects_non_monotone() {
        // cubic with roots at 0.3, 0.45, 0.6: decreasing bracket endpoints
        // but a rising stretch inside, so bisection sees a + − + pattern
        let err = bisect_decreasing(
            |t| Ok(-(t - 0.3) * (t - 0.45) * (t - 0.6)),
            0.0,
            1.0,
            1e-9,
            1e-15,
        );
        assert!(matches!(err, Err(NifsError::Inconsistent(_))));
    }
}
