//! Points and axis-aligned boxes in R^d.

use serde::{Deserialize, Serialize};

pub type Point = Vec<f64>;

/// Axis-aligned box [lo_1, hi_1] × … × [lo_d, hi_d].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn unit(dim: usize) -> Self {
        Self { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Point {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(xi, (lo, hi))| *xi >= lo - slack && *xi <= hi + slack)
    }

    /// Contained in `other` up to `slack` per coordinate.
    pub fn subset_of(&self, other: &BoxRegion, slack: f64) -> bool {
        self.lo
            .iter()
            .zip(&other.lo)
            .all(|(a, b)| *a >= b - slack)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| *a <= b + slack)
    }

    /// Distance from the box to a point (0 when inside).
    pub fn distance_to_point(&self, x: &[f64]) -> f64 {
        self.lo
            .iter()
            .zip(self.hi.iter().zip(x))
            .map(|(lo, (hi, xi))| {
                let d = if xi < lo { lo - xi } else if xi > hi { xi - hi } else { 0.0 };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean distance between two boxes (0 when they intersect).
    pub fn distance_to_box(&self, other: &BoxRegion) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .map(|((alo, ahi), (blo, bhi))| {
                let d = if ahi < blo { blo - ahi } else if bhi < alo { alo - bhi } else { 0.0 };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Open interiors intersect?
    pub fn interiors_intersect(&self, other: &BoxRegion) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .all(|((alo, ahi), (blo, bhi))| ahi.min(*bhi) > alo.max(*blo))
    }

    /// Minimum distance from `x` to the complement of the box, i.e. how deep
    /// inside the box the point sits. Negative when outside.
    pub fn depth_inside(&self, x: &[f64]) -> f64 {
        self.lo
            .iter()
            .zip(self.hi.iter().zip(x))
            .map(|(lo, (hi, xi))| (xi - lo).min(hi - xi))
            .fold(f64::INFINITY, f64::min)
    }

    /// Fraction of this box's volume covered by the ball B(center, r)
    /// measured coordinate-wise (exact for d = 1; product of per-axis
    /// overlaps of the circumscribed cube for d ≥ 2).
    pub fn overlap_fraction_with_ball(&self, center: &[f64], r: f64) -> f64 {
        let mut frac = 1.0;
        for ((lo, hi), c) in self.lo.iter().zip(&self.hi).zip(center) {
            let len = hi - lo;
            if len <= 0.0 {
                return if (c - lo).abs() <= r { 1.0 } else { 0.0 };
            }
            let olo = lo.max(c - r);
            let ohi = hi.min(c + r);
            if ohi <= olo {
                return 0.0;
            }
            frac *= (ohi - olo) / len;
        }
        frac
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
