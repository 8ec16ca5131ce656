//! Quadratic fits of final loss against log10 learning rate.
//!
//! Each sweep cell is modelled as `L = a*x^2 + b*x + c` with `x = log10(LR)`.
//! The optimum `LR* = 10^(-b / 2a)` does not depend on the log base.

use serde::{Deserialize, Serialize};

use crate::data::{GroupKey, SweepGroup, MIN_DISTINCT_LRS};
use crate::error::{Error, Result};
use crate::stats::{r_squared, solve};

/// Two log10 learning rates closer than this are treated as the same LR.
const SAME_LR_LOG10: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCurveFit {
    /// Curvature, in loss per squared decade of LR.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lr_star: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    /// The minimizer lies outside `[lr_min, lr_max]`.
    pub extrapolated_minimum: bool,
}

impl LossCurveFit {
    /// Loss predicted by the parabola at `lr`.
    pub fn loss_at(&self, lr: f64) -> f64 {
        let x = lr.log10();
        self.a * x * x + self.b * x + self.c
    }

    /// Loss at the fitted optimum.
    pub fn min_loss(&self) -> f64 {
        self.loss_at(self.lr_star)
    }
}

/// A fitted sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub key: GroupKey,
    pub fit: LossCurveFit,
}

/// Least-squares quadratic in log10 LR over a sweep group.
pub fn fit_quadratic(group: &SweepGroup) -> Result<LossCurveFit> {
    let points: Vec<(f64, f64)> = group.points.iter().map(|p| (p.lr, p.loss)).collect();
    fit_quadratic_points(&points)
}

/// Same as [`fit_quadratic`] on raw `(lr, loss)` pairs.
pub fn fit_quadratic_points(points: &[(f64, f64)]) -> Result<LossCurveFit> {
    for &(lr, loss) in points {
        if !(lr.is_finite() && lr > 0.0) || !loss.is_finite() {
            return Err(Error::InvalidInput(format!(
                "learning rates must be positive and losses finite, got ({lr}, {loss})"
            )));
        }
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let distinct = {
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup_by(|a, b| (*a - *b).abs() <= SAME_LR_LOG10);
        sorted.len()
    };
    if distinct < MIN_DISTINCT_LRS {
        return Err(Error::Unfittable {
            required: MIN_DISTINCT_LRS,
            found: distinct,
        });
    }
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();

    // Center and scale x so the normal equations stay well conditioned.
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    for x in &mut xs {
        *x = (*x - center) / scale;
    }

    let mut gram = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (&t, &y) in xs.iter().zip(&ys) {
        let basis = [1.0, t, t * t];
        for i in 0..3 {
            for j in 0..3 {
                gram[i][j] += basis[i] * basis[j];
            }
            rhs[i] += basis[i] * y;
        }
    }
    let [p0, p1, p2] =
        solve(gram, rhs).ok_or_else(|| Error::InvalidInput("quadratic design matrix is singular".into()))?;

    let a = p2 / (scale * scale);
    if !(p2 > 0.0) {
        return Err(Error::NonConvex { curvature: a });
    }
    let b = p1 / scale - 2.0 * p2 * center / (scale * scale);
    let c = p0 - p1 * center / scale + p2 * center * center / (scale * scale);

    let x_star = center + scale * (-p1 / (2.0 * p2));
    let lr_star = 10f64.powf(x_star);

    let predicted: Vec<f64> = xs.iter().map(|&t| p0 + p1 * t + p2 * t * t).collect();
    let r2 = r_squared(&ys, &predicted)?.clamp(0.0, 1.0);

    let lr_min = 10f64.powf(lo);
    let lr_max = 10f64.powf(hi);
    Ok(LossCurveFit {
        a,
        b,
        c,
        lr_star,
        r_squared: r2,
        n_points: points.len(),
        lr_min,
        lr_max,
        extrapolated_minimum: x_star < lo || x_star > hi,
    })
}

/// Fits every fittable group. Failures are returned alongside the key.
pub fn fit_groups(groups: &[SweepGroup]) -> Vec<(GroupKey, Result<LossCurveFit>)> {
    groups.iter().map(|g| (g.key.clone(), fit_quadratic(g))).collect()
}

/// Learning rates to probe next: the log-space midpoints between `LR*` and
/// its nearest sampled neighbour below and above.
///
/// No probe is suggested on a side with no sampled LR, so an optimum outside
/// the sweep yields a single probe towards the interior.
pub fn suggest_probes(group: &SweepGroup, fit: &LossCurveFit) -> Vec<f64> {
    let x_star = fit.lr_star.log10();
    let xs = group.points.iter().map(|p| p.lr.log10());
    let below = xs
        .clone()
        .filter(|&x| x < x_star - SAME_LR_LOG10)
        .max_by(f64::total_cmp);
    let above = xs.filter(|&x| x > x_star + SAME_LR_LOG10).min_by(f64::total_cmp);
    [below, above]
        .into_iter()
        .flatten()
        .map(|x| 10f64.powf(0.5 * (x + x_star)))
        .collect()
}

/// Loss increase from training at `ratio * LR*` instead of `LR*`, read off
/// the parabola: `a * log10(ratio)^2`.
///
/// Parabolas flatten as the horizon grows, so a penalty taken from a
/// shorter-horizon fit overstates the penalty at the longer horizon.
pub fn loss_penalty(fit: &LossCurveFit, ratio: f64) -> Result<f64> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidInput(format!("ratio must be positive, got {ratio}")));
    }
    if !(fit.a > 0.0) {
        return Err(Error::NonConvex { curvature: fit.a });
    }
    Ok(fit.a * ratio.log10().powi(2))
}
