//! Pointwise perturbation functions γ: [0,1] → (−ε, ε) from parametric
//! families with exactly computable range and Lipschitz data.

use serde::{Deserialize, Serialize};

/// Shape of a perturbation function before level scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GammaShape {
    /// γ(t) = a + b·t
    Affine { a: f64, b: f64 },
    /// γ(t) = amplitude·sin(2π·frequency·t + phase) + offset
    Sinusoidal { amplitude: f64, frequency: f64, phase: f64, offset: f64 },
    /// γ(t) = Σ coeffs[i]·t^i
    Polynomial { coeffs: Vec<f64> },
}

/// A concrete γ = scale · shape(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFn {
    pub shape: GammaShape,
    pub scale: f64,
}

impl GammaFn {
    pub fn zero() -> Self {
        GammaFn { shape: GammaShape::Affine { a: 0.0, b: 0.0 }, scale: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.scale * self.shape.eval(t)
    }

    /// (min, max) of γ over [0, 1].
    pub fn range(&self) -> (f64, f64) {
        let (lo, hi) = self.shape.range();
        if self.scale >= 0.0 {
            (self.scale * lo, self.scale * hi)
        } else {
            (self.scale * hi, self.scale * lo)
        }
    }

    /// sup |γ| over [0, 1].
    pub fn sup_abs(&self) -> f64 {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    /// Lipschitz constant sup |γ'| over [0, 1]; Hölder exponent is 1 for
    /// every supported family.
    pub fn lipschitz(&self) -> f64 {
        self.scale.abs() * self.shape.lipschitz()
    }
}

impl GammaShape {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            GammaShape::Affine { a, b } => a + b * t,
            GammaShape::Sinusoidal { amplitude, frequency, phase, offset } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin() + offset
            }
            GammaShape::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }

    fn deriv(&self, t: f64) -> f64 {
        match self {
            GammaShape::Affine { b, .. } => *b,
            GammaShape::Sinusoidal { amplitude, frequency, phase, .. } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                amplitude * w * (w * t + phase).cos()
            }
            GammaShape::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for (i, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * t + (i as f64) * c;
                }
                acc
            }
        }
    }

    /// (min, max) over [0, 1], located through the critical points of the
    /// derivative plus the endpoints.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = self.eval(0.0).min(self.eval(1.0));
        let mut hi = self.eval(0.0).max(self.eval(1.0));
        for t in self.critical_points() {
            let v = self.eval(t);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            GammaShape::Affine { b, .. } => b.abs(),
            GammaShape::Sinusoidal { amplitude, frequency, .. } => {
                (amplitude * 2.0 * std::f64::consts::PI * frequency).abs()
            }
            GammaShape::Polynomial { .. } => {
                // sup |p'| over [0,1]: endpoints plus sign changes of p''
                let d = |t: f64| self.deriv(t);
                let mut hi = d(0.0).abs().max(d(1.0).abs());
                for t in bisect_sign_changes(&|t| self.second_deriv(t)) {
                    hi = hi.max(d(t).abs());
                }
                hi
            }
        }
    }

    fn second_deriv(&self, t: f64) -> f64 {
        match self {
            GammaShape::Affine { .. } => 0.0,
            GammaShape::Sinusoidal { amplitude, frequency, phase, .. } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                -amplitude * w * w * (w * t + phase).sin()
            }
            GammaShape::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for (i, c) in coeffs.iter().enumerate().skip(2).rev() {
                    acc = acc * t + (i * (i - 1)) as f64 * c;
                }
                acc
            }
        }
    }

    fn critical_points(&self) -> Vec<f64> {
        match self {
            GammaShape::Affine { .. } => Vec::new(),
            GammaShape::Sinusoidal { frequency, phase, .. } => {
                // cos(w t + phase) = 0 at w t + phase = π/2 + kπ
                let w = 2.0 * std::f64::consts::PI * frequency;
                if w == 0.0 {
                    return Vec::new();
                }
                let mut out = Vec::new();
                let k_lo = ((w.min(0.0) + phase - std::f64::consts::FRAC_PI_2)
                    / std::f64::consts::PI)
                    .floor() as i64
                    - 2;
                let k_hi = ((w.max(0.0) + phase) / std::f64::consts::PI).ceil() as i64 + 2;
                for k in k_lo..=k_hi {
                    let t = (std::f64::consts::FRAC_PI_2 + (k as f64) * std::f64::consts::PI
                        - phase)
                        / w;
                    if (0.0..=1.0).contains(&t) {
                        out.push(t);
                    }
                }
                out
            }
            GammaShape::Polynomial { .. } => bisect_sign_changes(&|t| self.deriv(t)),
        }
    }
}

/// Roots of `f` in [0,1] found by scanning a fine grid for sign changes and
/// bisecting each bracket. Adequate for the low-degree polynomials used as
/// perturbation shapes.
fn bisect_sign_changes(f: &dyn Fn(f64) -> f64) -> Vec<f64> {
    const GRID: usize = 2048;
    let mut roots = Vec::new();
    let mut t0 = 0.0;
    let mut f0 = f(t0);
    for i in 1..=GRID {
        let t1 = i as f64 / GRID as f64;
        let f1 = f(t1);
        if f0 == 0.0 {
            roots.push(t0);
        } else if f0 * f1 < 0.0 {
            let (mut a, mut b) = (t0, t1);
            let mut fa = f0;
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        t0 = t1;
        f0 = f1;
    }
    if f0 == 0.0 {
        roots.push(t0);
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_range_and_sup() {
        // γ(t) = 0.1(2t − 1) = −0.1 + 0.2t
        let g = GammaFn { shape: GammaShape::Affine { a: -0.1, b: 0.2 }, scale: 1.0 };
        let (lo, hi) = g.range();
        assert!((lo + 0.1).abs() < 1e-15 && (hi - 0.1).abs() < 1e-15);
        assert!((g.sup_abs() - 0.1).abs() < 1e-15);
        assert!((g.lipschitz() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sinusoidal_interior_extremum() {
        // sin(2π t) peaks at t = 1/4 inside [0,1]
        let g = GammaFn {
            shape: GammaShape::Sinusoidal { amplitude: 0.5, frequency: 1.0, phase: 0.0, offset: 0.0 },
            scale: 1.0,
        };
        let (lo, hi) = g.range();
        assert!((hi - 0.5).abs() < 1e-12);
        assert!((lo + 0.5).abs() < 1e-12);
        assert!((g.sup_abs() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polynomial_interior_extremum() {
        // p(t) = t(1−t) has max 1/4 at t = 1/2
        let g = GammaFn { shape: GammaShape::Polynomial { coeffs: vec![0.0, 1.0, -1.0] }, scale: 1.0 };
        let (lo, hi) = g.range();
        assert!((hi - 0.25).abs() < 1e-10);
        assert!(lo.abs() < 1e-12);
        assert!((g.lipschitz() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negative_scale_flips_range() {
        let g = GammaFn { shape: GammaShape::Affine { a: 0.0, b: 1.0 }, scale: -0.25 };
        let (lo, hi) = g.range();
        assert!((lo + 0.25).abs() < 1e-15);
        assert_eq!(hi, 0.0);
    }
}
