//! Grid box-counting dimension estimator, used as an independent oracle
//! against the Bowen parameter.

use crate::error::{NifsError, Result};
use crate::geom::Point;
use crate::numeric::fit_line;
use crate::targets::MoranTree;
use serde::Serialize;
use std::collections::HashSet;

#[derive(Debug, Clone, Serialize)]
pub struct BoxCountFit {
    /// (δ, occupied-box count) per scale, largest δ first.
    pub scales: Vec<(f64, u64)>,
    /// Least-squares slope of log N(δ) against log(1/δ) over the interior
    /// scales (one trimmed at each end).
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// All points identical: slope forced to 0.
    pub degenerate: bool,
}

/// Count occupied grid boxes of side δ for each scale and fit the slope.
pub fn box_count_dimension(points: &[Point], scales: &[f64]) -> Result<BoxCountFit> {
    if points.len() < 1000 {
        return Err(NifsError::Precondition(format!(
            "box counting needs ≥ 1000 points; got {}",
            points.len()
        )));
    }
    if scales.len() < 6 || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(NifsError::Precondition("need ≥ 6 positive scales".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(NifsError::Precondition("points of mixed dimension".into()));
    }
    let mut sorted: Vec<f64> = scales.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));

    // anchor the grid at the point cloud's min corner: counts are then
    // invariant under translating the whole set
    let mut anchor = vec![f64::INFINITY; dim];
    for p in points {
        for (i, &x) in p.iter().enumerate() {
            anchor[i] = anchor[i].min(x);
        }
    }

    let degenerate = points.iter().all(|p| p == &points[0]);
    let mut rows = Vec::with_capacity(sorted.len());
    for &delta in &sorted {
        let mut boxes: HashSet<Vec<i64>> = HashSet::new();
        for p in points {
            let key: Vec<i64> = p
                .iter()
                .zip(&anchor)
                .map(|(x, a)| ((x - a) / delta).floor() as i64)
                .collect();
            boxes.insert(key);
        }
        rows.push((delta, boxes.len() as u64));
    }

    if degenerate {
        return Ok(BoxCountFit {
            scales: rows,
            slope: 0.0,
            intercept: 0.0,
            r_squared: 1.0,
            degenerate: true,
        });
    }

    // trim one scale at each end: both extremes saturate
    let interior = &rows[1..rows.len() - 1];
    let xs: Vec<f64> = interior.iter().map(|(d, _)| (1.0 / d).ln()).collect();
    let ys: Vec<f64> = interior.iter().map(|(_, n)| (*n as f64).ln()).collect();
    let fit = fit_line(&xs, &ys)
        .ok_or_else(|| NifsError::Precondition("degenerate scale grid".into()))?;
    Ok(BoxCountFit {
        scales: rows,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        degenerate: false,
    })
}

/// Log-spaced scale grid from `hi` down to `lo`.
pub fn log_spaced_scales(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    (0..count)
        .map(|i| hi * (lo / hi).powf(i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheck {
    pub b: f64,
    pub slope: Option<f64>,
    pub gap: Option<f64>,
    pub insufficient_depth: bool,
    /// Shallow trees under-resolve the finest structure, so the slope
    /// systematically underestimates at low depth.
    pub bias_note: String,
    pub fit: Option<BoxCountFit>,
    pub points_used: usize,
}

/// Box-count points sampled from the Moran tree and compare the fitted
/// slope against the Bowen parameter. The scale window should span the
/// tree's cylinder structure: from the finest cylinder width (scale_lo)
/// up to the root-level cylinder width (scale_hi). Below the window the
/// leaves merge; above it the counts see the ambient word layout rather
/// than the target set.
pub fn cross_check(
    tree: &MoranTree,
    scale_lo: f64,
    scale_hi: f64,
    b: f64,
    points: &[Point],
) -> Result<CrossCheck> {
    if tree.levels.len() < 2 {
        return Ok(CrossCheck {
            b,
            slope: None,
            gap: None,
            insufficient_depth: true,
            bias_note: "tree too shallow for a scaling window".into(),
            fit: None,
            points_used: points.len(),
        });
    }
    if !(scale_lo > 0.0) || scale_hi <= scale_lo {
        return Ok(CrossCheck {
            b,
            slope: None,
            gap: None,
            insufficient_depth: true,
            bias_note: "point set spans no scale range".into(),
            fit: None,
            points_used: points.len(),
        });
    }
    let scales = log_spaced_scales(scale_lo, scale_hi, 18);
    let fit = box_count_dimension(points, &scales)?;
    let gap = (fit.slope - b).abs();
    Ok(CrossCheck {
        b,
        slope: Some(fit.slope),
        gap: Some(gap),
        insufficient_depth: false,
        bias_note: "finite depth biases the slope low".into(),
        fit: Some(fit),
        points_used: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BoxRegion;
    use crate::ifs::{Continuation, LevelFamily, MapDescriptor, SystemDescriptor, SystemLimits, Word};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_interval_slope_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Point> = (0..10_000).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let scales = log_spaced_scales(10f64.powf(-2.5), 10f64.powf(-0.5), 9);
        let fit = box_count_dimension(&points, &scales).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.05, "slope {}", fit.slope);
    }

    #[test]
    fn repeated_point_slope_zero() {
        let points: Vec<Point> = (0..2000).map(|_| vec![0.37]).collect();
        let scales = log_spaced_scales(1e-3, 0.3, 8);
        let fit = box_count_dimension(&points, &scales).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert!(fit.degenerate);
    }

    #[test]
    fn cantor_attractor_slope() {
        let maps: Vec<MapDescriptor> = [0.0, 2.0 / 3.0]
            .iter()
            .map(|&o| MapDescriptor::Linear { ratio: 1.0 / 3.0, offset: vec![o], orth: None })
            .collect();
        let sys = SystemDescriptor::new(
            1,
            BoxRegion::unit(1),
            vec![LevelFamily { maps }],
            Continuation::Constant,
            SystemLimits::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let center = sys.domain.center();
        let points: Vec<Point> = (0..10_000)
            .map(|_| {
                let w = Word::from_symbols(1, (0..12).map(|_| rng.gen_range(0..2u32)).collect());
                sys.eval_word(&w, &center).unwrap()
            })
            .collect();
        let scales: Vec<f64> = (1..=10).map(|k| 3.0f64.powi(-k)).collect();
        let fit = box_count_dimension(&points, &scales).unwrap();
        let h = 2.0f64.ln() / 3.0f64.ln();
        assert!((fit.slope - h).abs() < 0.05, "slope {} vs {h}", fit.slope);
    }

    #[test]
    fn counts_monotone_and_origin_shift_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points: Vec<Point> = (0..5_000).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let scales = log_spaced_scales(1e-2, 0.25, 8);
        let fit = box_count_dimension(&points, &scales).unwrap();
        for w in fit.scales.windows(2) {
            assert!(w[0].1 <= w[1].1, "counts must not drop as δ shrinks");
        }
        let shifted: Vec<Point> = points.iter().map(|p| vec![p[0] + 0.123]).collect();
        let fit2 = box_count_dimension(&shifted, &scales).unwrap();
        assert!((fit.slope - fit2.slope).abs() < 0.01);
        // duplicating the point set changes nothing
        let doubled: Vec<Point> = points.iter().chain(points.iter()).cloned().collect();
        let fit3 = box_count_dimension(&doubled, &scales).unwrap();
        assert_eq!(fit.slope.to_bits(), fit3.slope.to_bits());
    }

    #[test]
    fn too_few_points_rejected() {
        let points: Vec<Point> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let scales = log_spaced_scales(1e-2, 0.25, 8);
        assert!(box_count_dimension(&points, &scales).is_err());
    }
}
