//! Small statistics and least-squares helpers shared by the fitting modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient of determination, `1 - SS_res / SS_tot`.
///
/// Not clamped: predictions worse than the mean give a negative value,
/// which matters when scoring held-out data.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "observed has {} values but predicted has {}",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.len() < 2 {
        return Err(Error::InvalidInput("R^2 needs at least two observations".into()));
    }
    let mean = mean(observed);
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedRSquared);
    }
    let ss_res: f64 = observed.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Arithmetic mean, accumulated as offsets from the first value so that a
/// constant slice returns that constant exactly. NaN when empty.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return f64::NAN;
    };
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// Divisor used for a standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1`.
    Sample,
}

pub fn std_dev(values: &[f64], convention: StdConvention) -> f64 {
    let n = values.len();
    let divisor = match convention {
        StdConvention::Population => n as f64,
        StdConvention::Sample if n > 1 => (n - 1) as f64,
        StdConvention::Sample => return 0.0,
    };
    if n == 0 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / divisor).sqrt()
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Fits a straight line by centered least squares. Requires two distinct `x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<Line> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some(Line {
        slope,
        intercept: my - slope * mx,
    })
}

/// Solves the dense `n x n` system `a * x = b` with partial pivoting.
/// Returns `None` for a numerically singular matrix.
pub(crate) fn solve<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (dst, src) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *dst -= factor * src;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_perfect_fit() {
        let y = [1.0, 2.0, 4.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn r_squared_null_model() {
        let y = [1.0, 2.0, 3.0, 6.0];
        let m = mean(&y);
        assert!(r_squared(&y, &[m; 4]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn r_squared_hand_computed() {
        // SS_res = 0.01 + 0 + 0.01, SS_tot = 2
        let r2 = r_squared(&[1.0, 2.0, 3.0], &[1.1, 2.0, 2.9]).unwrap();
        assert!((r2 - 0.99).abs() < 1e-12);
    }

    #[test]
    fn r_squared_errors() {
        assert!(matches!(
            r_squared(&[2.0, 2.0], &[1.0, 3.0]),
            Err(Error::UndefinedRSquared)
        ));
        assert!(r_squared(&[1.0], &[1.0]).is_err());
        assert!(r_squared(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn std_conventions() {
        let v = [1e-4, 2e-4];
        assert!((std_dev(&v, StdConvention::Population) - 5e-5).abs() < 1e-18);
        assert!((std_dev(&v, StdConvention::Sample) - 5e-5 * 2f64.sqrt()).abs() < 1e-18);
        assert_eq!(std_dev(&[3.0, 3.0], StdConvention::Population), 0.0);
    }

    #[test]
    fn line_through_two_points() {
        let line = fit_line(&[0.0, 2.0], &[1.0, 5.0]).unwrap();
        assert!((line.slope - 2.0).abs() < 1e-15);
        assert!((line.intercept - 1.0).abs() < 1e-15);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn solve_small_system() {
        let x = solve([[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]], [5.0, 3.0, 6.0]).unwrap();
        assert!((x[0] - 1.4).abs() < 1e-12);
        assert!((x[1] - 1.6).abs() < 1e-12);
        assert!((x[2] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn solve_singular() {
        assert!(solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 2.0]).is_none());
    }
}
