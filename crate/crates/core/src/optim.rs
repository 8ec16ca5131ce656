//! BFGS quasi-Newton minimization with a strong-Wolfe line search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    /// Stop once the gradient's Euclidean norm is at or below this.
    pub grad_tol: f64,
    pub max_iterations: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            grad_tol: 1e-10,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norm reached the tolerance.
    Converged,
    /// No step along the search direction decreases the objective any
    /// further at working precision.
    Stalled,
    MaxIterations,
    /// The objective or gradient became non-finite.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

/// Minimizes `objective`, which returns the value and writes the gradient.
pub fn minimize<F>(mut objective: F, x0: &[f64], options: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = objective(&x, &mut grad);
    let mut h_inv = identity(n);
    let mut first_step = true;

    let finish = |x: Vec<f64>, value: f64, grad: &[f64], iterations, termination| Minimum {
        x,
        value,
        grad_norm: norm(grad),
        iterations,
        termination,
    };

    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return finish(x, value, &grad, 0, Termination::NonFinite);
    }

    for iteration in 0..options.max_iterations {
        if norm(&grad) <= options.grad_tol {
            return finish(x, value, &grad, iteration, Termination::Converged);
        }
        let mut direction: Vec<f64> = mat_vec(&h_inv, &grad).into_iter().map(|v| -v).collect();
        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            // Lost positive definiteness; fall back to steepest descent.
            h_inv = identity(n);
            direction = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &direction);
        }
        let initial_step = if first_step {
            (1.0 / norm(&direction)).min(1.0)
        } else {
            1.0
        };

        let Some(step) = line_search(&mut objective, &x, value, &grad, &direction, initial_step) else {
            if !reset_after_failed_search(&mut h_inv, &mut first_step) {
                return finish(x, value, &grad, iteration, Termination::Stalled);
            }
            continue;
        };
        if !step.value.is_finite() {
            return finish(x, value, &grad, iteration, Termination::NonFinite);
        }

        let s: Vec<f64> = direction.iter().map(|d| step.alpha * d).collect();
        let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if first_step && sy > 0.0 {
            // Scale the initial inverse Hessian to the observed curvature.
            let gamma = sy / dot(&y, &y);
            h_inv = identity(n)
                .into_iter()
                .map(|row| row.into_iter().map(|v| v * gamma).collect())
                .collect();
        }
        first_step = false;
        if sy > 1e-300 {
            bfgs_update(&mut h_inv, &s, &y, sy);
        }
        let decreased = step.value < value;
        x = step.x;
        value = step.value;
        grad = step.grad;
        if !decreased && norm(&grad) > options.grad_tol {
            return finish(x, value, &grad, iteration + 1, Termination::Stalled);
        }
    }
    let termination = if norm(&grad) <= options.grad_tol {
        Termination::Converged
    } else {
        Termination::MaxIterations
    };
    finish(x, value, &grad, options.max_iterations, termination)
}

/// Resets the inverse Hessian after a failed line search. Returns false if it
/// was already reset, meaning steepest descent failed too.
fn reset_after_failed_search(h_inv: &mut Vec<Vec<f64>>, first_step: &mut bool) -> bool {
    if *first_step {
        return false;
    }
    *h_inv = identity(h_inv.len());
    *first_step = true;
    true
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

struct Step {
    alpha: f64,
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Strong-Wolfe line search (bracket then zoom). Returns `None` when no
/// acceptable step exists at working precision.
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    value: f64,
    grad: &[f64],
    direction: &[f64],
    initial: f64,
) -> Option<Step>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let slope0 = dot(grad, direction);
    let mut eval = |alpha: f64| {
        let xa = axpy(x, alpha, direction);
        let mut ga = vec![0.0; x.len()];
        let fa = objective(&xa, &mut ga);
        let slope = dot(&ga, direction);
        (
            Step {
                alpha,
                x: xa,
                value: fa,
                grad: ga,
            },
            slope,
        )
    };

    let mut prev_alpha = 0.0;
    let mut prev_value = value;
    let mut prev_slope = slope0;
    let mut prev_step: Option<Step> = None;
    let mut alpha = initial;
    for i in 0..60 {
        let (step, slope) = eval(alpha);
        if !step.value.is_finite() {
            // Shrink into the finite region.
            alpha = 0.5 * (prev_alpha + alpha);
            continue;
        }
        if step.value > value + C1 * alpha * slope0 || (i > 0 && step.value >= prev_value) {
            return zoom(
                &mut eval,
                value,
                slope0,
                (prev_alpha, prev_value, prev_slope),
                (alpha, step.value),
                prev_step,
            );
        }
        if slope.abs() <= -C2 * slope0 {
            return Some(step);
        }
        if slope >= 0.0 {
            let (a, f) = (step.alpha, step.value);
            return zoom(
                &mut eval,
                value,
                slope0,
                (a, f, slope),
                (prev_alpha, prev_value),
                Some(step),
            );
        }
        prev_alpha = alpha;
        prev_value = step.value;
        prev_slope = slope;
        prev_step = Some(step);
        alpha *= 2.0;
    }
    None
}

fn zoom<E>(
    eval: &mut E,
    value0: f64,
    slope0: f64,
    lo: (f64, f64, f64),
    hi: (f64, f64),
    lo_step: Option<Step>,
) -> Option<Step>
where
    E: FnMut(f64) -> (Step, f64),
{
    let (mut a_lo, mut f_lo, mut g_lo) = lo;
    let (mut a_hi, mut f_hi) = hi;
    let mut best = lo_step;
    for _ in 0..80 {
        let width = a_hi - a_lo;
        if width.abs() <= f64::EPSILON * a_lo.abs().max(a_hi.abs()) {
            break;
        }
        // Minimizer of the quadratic through (a_lo, f_lo, g_lo) and (a_hi, f_hi),
        // safeguarded to the middle of the interval.
        let denom = 2.0 * (f_hi - f_lo - g_lo * width);
        let mut alpha = if denom > 0.0 {
            a_lo - g_lo * width * width / denom
        } else {
            a_lo + 0.5 * width
        };
        let (lo_b, hi_b) = if a_lo < a_hi { (a_lo, a_hi) } else { (a_hi, a_lo) };
        let margin = 0.1 * (hi_b - lo_b);
        if !(alpha > lo_b + margin && alpha < hi_b - margin) {
            alpha = a_lo + 0.5 * width;
        }
        let (step, slope) = eval(alpha);
        if !step.value.is_finite() || step.value > value0 + C1 * alpha * slope0 || step.value >= f_lo {
            a_hi = alpha;
            f_hi = step.value;
            continue;
        }
        if slope.abs() <= -C2 * slope0 {
            return Some(step);
        }
        if slope * (a_hi - a_lo) >= 0.0 {
            a_hi = a_lo;
            f_hi = f_lo;
        }
        a_lo = alpha;
        f_lo = step.value;
        g_lo = slope;
        best = Some(step);
    }
    // Accept a sufficient-decrease step even if curvature was not met.
    best.filter(|s| s.value < value0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let result = minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 3.0);
                g[1] = 20.0 * (x[1] + 1.0);
                (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2)
            },
            &[0.0, 0.0],
            &BfgsOptions::default(),
        );
        assert_eq!(result.termination, Termination::Converged);
        assert!((result.x[0] - 3.0).abs() < 1e-9);
        assert!((result.x[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn rosenbrock() {
        let result = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[-1.2, 1.0],
            &BfgsOptions::default(),
        );
        assert_eq!(result.termination, Termination::Converged, "{result:?}");
        assert!((result.x[0] - 1.0).abs() < 1e-8);
        assert!((result.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn non_finite_start() {
        let result = minimize(
            |_, g| {
                g[0] = 0.0;
                f64::NAN
            },
            &[0.0],
            &BfgsOptions::default(),
        );
        assert_eq!(result.termination, Termination::NonFinite);
    }
}
