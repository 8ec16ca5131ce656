//! Power laws for the optimal learning rate.
//!
//! - horizon law: `LR*(D) = B * (D / D0)^-beta`, fit by least squares in log10
//! - joint law: `LR*(N, D) = C * (N / N0)^-alpha * (D / D0)^-beta`, fit by
//!   Huber-loss BFGS on log10 residuals
//! - parallel slopes: one shared log-log slope with per-group intercepts,
//!   used to check that the exponent of one variable does not depend on the
//!   other (which is what makes the joint law separable)
//!
//! Reference scales default to 1e9 tokens and 1e9 parameters, so `B` and `C`
//! are the learning rates at one billion tokens (and parameters).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Dimension, Error, Result};
use crate::optim::{self, BfgsOptions, Termination};
use crate::stats::{fit_line, r_squared};

pub const REFERENCE_TOKENS: f64 = 1e9;
pub const REFERENCE_PARAMS: f64 = 1e9;

/// The joint law is meant for models at least this large.
pub const LARGE_MODEL_PARAMS: f64 = 760e6;

/// Anything that predicts an optimal learning rate.
pub trait LrLaw {
    /// `n_params` is required by laws that depend on model size and ignored
    /// by the others.
    fn predict_lr(&self, tokens: f64, n_params: Option<f64>) -> Result<f64>;
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {value}")))
    }
}

/// `(D, LR*)` measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonPoint {
    pub token_horizon: f64,
    pub lr_star: f64,
}

/// `(N, D, LR*)` measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimumPoint {
    pub n_params: f64,
    pub token_horizon: f64,
    pub lr_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    #[serde(rename = "B")]
    pub b: f64,
    pub beta: f64,
    pub d_ref: f64,
}

impl LrLaw for PowerLaw {
    fn predict_lr(&self, tokens: f64, _n_params: Option<f64>) -> Result<f64> {
        check_positive("token horizon", tokens)?;
        Ok(self.b * (tokens / self.d_ref).powf(-self.beta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLaw {
    #[serde(rename = "C")]
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_ref: f64,
    pub d_ref: f64,
}

impl JointLaw {
    pub fn new(c: f64, alpha: f64, beta: f64) -> Self {
        JointLaw {
            c,
            alpha,
            beta,
            n_ref: REFERENCE_PARAMS,
            d_ref: REFERENCE_TOKENS,
        }
    }

    /// The horizon law for a fixed model size.
    pub fn at_model_size(&self, n_params: f64) -> PowerLaw {
        PowerLaw {
            b: self.c * (n_params / self.n_ref).powf(-self.alpha),
            beta: self.beta,
            d_ref: self.d_ref,
        }
    }

    fn log10_predict(&self, n_params: f64, tokens: f64) -> f64 {
        self.c.log10() - self.alpha * (n_params / self.n_ref).log10() - self.beta * (tokens / self.d_ref).log10()
    }
}

impl LrLaw for JointLaw {
    fn predict_lr(&self, tokens: f64, n_params: Option<f64>) -> Result<f64> {
        let n = n_params.ok_or_else(|| Error::InvalidInput("the joint law needs a model size".into()))?;
        check_positive("token horizon", tokens)?;
        check_positive("model size", n)?;
        Ok(self.c * (n / self.n_ref).powf(-self.alpha) * (tokens / self.d_ref).powf(-self.beta))
    }
}

/// Parses `key=value` lists such as `C=1.55e-3,alpha=0.23,beta=0.32`.
fn parse_assignments(s: &str, allowed: &[&str]) -> std::result::Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let key = key.trim();
        let canonical = allowed
            .iter()
            .find(|k| k.eq_ignore_ascii_case(key))
            .ok_or_else(|| format!("unknown key `{key}`, expected one of {}", allowed.join(", ")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("`{key}` is not a number: `{}`", value.trim()))?;
        if !value.is_finite() {
            return Err(format!("`{key}` must be finite"));
        }
        if out.insert(canonical.to_string(), value).is_some() {
            return Err(format!("`{key}` given twice"));
        }
    }
    Ok(out)
}

impl FromStr for PowerLaw {
    type Err = String;

    /// `B=<lr>,beta=<exp>[,d_ref=<tokens>]`
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let map = parse_assignments(s, &["B", "beta", "d_ref"])?;
        let get = |k: &str| map.get(k).copied().ok_or_else(|| format!("missing `{k}`"));
        let law = PowerLaw {
            b: get("B")?,
            beta: get("beta")?,
            d_ref: map.get("d_ref").copied().unwrap_or(REFERENCE_TOKENS),
        };
        if !(law.b > 0.0 && law.d_ref > 0.0) {
            return Err("B and d_ref must be positive".into());
        }
        Ok(law)
    }
}

impl FromStr for JointLaw {
    type Err = String;

    /// `C=<lr>,alpha=<exp>,beta=<exp>[,n_ref=<params>][,d_ref=<tokens>]`
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let map = parse_assignments(s, &["C", "alpha", "beta", "n_ref", "d_ref"])?;
        let get = |k: &str| map.get(k).copied().ok_or_else(|| format!("missing `{k}`"));
        let law = JointLaw {
            c: get("C")?,
            alpha: get("alpha")?,
            beta: get("beta")?,
            n_ref: map.get("n_ref").copied().unwrap_or(REFERENCE_PARAMS),
            d_ref: map.get("d_ref").copied().unwrap_or(REFERENCE_TOKENS),
        };
        if !(law.c > 0.0 && law.n_ref > 0.0 && law.d_ref > 0.0) {
            return Err("C, n_ref and d_ref must be positive".into());
        }
        Ok(law)
    }
}

impl fmt::Display for PowerLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B={:e},beta={},d_ref={:e}", self.b, self.beta, self.d_ref)
    }
}

impl fmt::Display for JointLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C={:e},alpha={},beta={},n_ref={:e},d_ref={:e}",
            self.c, self.alpha, self.beta, self.n_ref, self.d_ref
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    #[serde(flatten)]
    pub law: PowerLaw,
    /// In log10 space. `None` when all LR* are equal.
    pub r_squared: Option<f64>,
    pub rmse_log10: f64,
    pub n_points: usize,
    pub points: Vec<HorizonPoint>,
}

impl LrLaw for PowerLawFit {
    fn predict_lr(&self, tokens: f64, n_params: Option<f64>) -> Result<f64> {
        self.law.predict_lr(tokens, n_params)
    }
}

/// Least squares on `log10 LR* = log10 B - beta * log10(D / D0)` with `D0 = 1e9`.
pub fn fit_power_law(points: &[HorizonPoint]) -> Result<PowerLawFit> {
    fit_power_law_with_ref(points, REFERENCE_TOKENS)
}

pub fn fit_power_law_with_ref(points: &[HorizonPoint], d_ref: f64) -> Result<PowerLawFit> {
    check_positive("reference horizon", d_ref)?;
    for p in points {
        check_positive("token horizon", p.token_horizon)?;
        check_positive("optimal learning rate", p.lr_star)?;
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.token_horizon / d_ref).log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.lr_star.log10()).collect();
    let line = fit_line(&xs, &ys)
        .ok_or_else(|| Error::InvalidInput("a power law needs at least two distinct token horizons".into()))?;
    let predicted: Vec<f64> = xs.iter().map(|&x| line.at(x)).collect();
    let r2 = match r_squared(&ys, &predicted) {
        Ok(v) => Some(v.clamp(0.0, 1.0)),
        Err(Error::UndefinedRSquared) => None,
        Err(e) => return Err(e),
    };
    let rmse_log10 = rmse(&ys, &predicted);
    Ok(PowerLawFit {
        law: PowerLaw {
            b: 10f64.powf(line.intercept),
            beta: -line.slope,
            d_ref,
        },
        r_squared: r2,
        rmse_log10,
        n_points: points.len(),
        points: points.to_vec(),
    })
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Huber penalty: quadratic within `delta`, linear beyond.
pub fn huber(residual: f64, delta: f64) -> f64 {
    let r = residual.abs();
    if r <= delta {
        0.5 * r * r
    } else {
        delta * (r - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to the residual.
pub fn huber_derivative(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFitOptions {
    pub huber_delta: f64,
    pub bfgs: BfgsOptions,
    pub start_log10_c: Vec<f64>,
    pub start_alpha: Vec<f64>,
    pub start_beta: Vec<f64>,
    /// A start that stops early is still usable if its gradient norm is
    /// below this (Huber's kinks can stall the line search near the optimum).
    pub accept_grad_norm: f64,
    /// Evaluate starts on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl Default for JointFitOptions {
    fn default() -> Self {
        JointFitOptions {
            huber_delta: 1e-3,
            bfgs: BfgsOptions::default(),
            start_log10_c: vec![-4.0, -3.5, -3.0, -2.5],
            start_alpha: vec![0.0, 0.25, 0.5],
            start_beta: vec![0.0, 0.25, 0.5, 0.75],
            accept_grad_norm: 1e-7,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLawFit {
    #[serde(flatten)]
    pub law: JointLaw,
    pub huber_delta: f64,
    /// Huber objective at the optimum.
    pub objective: f64,
    /// Training RMSE of log10 LR*.
    pub rmse_train: f64,
    /// Training RMSE in raw learning-rate units.
    pub rmse_train_lr: f64,
    /// R^2 of log10 LR* on the held-out points.
    pub r_squared_validation: Option<f64>,
    pub rmse_validation: Option<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
    /// Starts that converged, out of all starts tried.
    pub starts_converged: usize,
    pub starts_total: usize,
    pub iterations: usize,
    /// Training data mixes models below and above [`LARGE_MODEL_PARAMS`].
    pub mixed_regime: bool,
    pub points: Vec<OptimumPoint>,
    pub holdout: Vec<OptimumPoint>,
}

impl LrLaw for JointLawFit {
    fn predict_lr(&self, tokens: f64, n_params: Option<f64>) -> Result<f64> {
        self.law.predict_lr(tokens, n_params)
    }
}

struct Design {
    log_n: Vec<f64>,
    log_d: Vec<f64>,
    log_lr: Vec<f64>,
}

impl Design {
    fn new(points: &[OptimumPoint]) -> Self {
        Design {
            log_n: points.iter().map(|p| (p.n_params / REFERENCE_PARAMS).log10()).collect(),
            log_d: points
                .iter()
                .map(|p| (p.token_horizon / REFERENCE_TOKENS).log10())
                .collect(),
            log_lr: points.iter().map(|p| p.lr_star.log10()).collect(),
        }
    }

    /// Huber objective over `theta = (log10 C, alpha, beta)`, with gradient.
    fn objective(&self, theta: &[f64], grad: &mut [f64], delta: f64) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for i in 0..self.log_lr.len() {
            let pred = theta[0] - theta[1] * self.log_n[i] - theta[2] * self.log_d[i];
            let r = self.log_lr[i] - pred;
            total += huber(r, delta);
            let psi = huber_derivative(r, delta);
            grad[0] -= psi;
            grad[1] += psi * self.log_n[i];
            grad[2] += psi * self.log_d[i];
        }
        total
    }
}

fn canonical_points(points: &[OptimumPoint]) -> Vec<OptimumPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.n_params
            .total_cmp(&b.n_params)
            .then(a.token_horizon.total_cmp(&b.token_horizon))
            .then(a.lr_star.total_cmp(&b.lr_star))
    });
    sorted
}

fn has_spread(values: impl Iterator<Item = f64>) -> bool {
    let mut iter = values;
    match iter.next() {
        Some(first) => iter.any(|v| v != first),
        None => false,
    }
}

/// Fits the joint law by minimizing the summed Huber loss of log10 residuals
/// with BFGS from every point of the start grid. The lowest objective wins;
/// near-ties go to the smaller `alpha + beta`.
pub fn fit_joint_law(
    points: &[OptimumPoint],
    holdout: Option<&[OptimumPoint]>,
    options: &JointFitOptions,
) -> Result<JointLawFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "the joint law needs at least 3 points, got {}",
            points.len()
        )));
    }
    for p in points.iter().chain(holdout.unwrap_or_default()) {
        check_positive("model size", p.n_params)?;
        check_positive("token horizon", p.token_horizon)?;
        check_positive("optimal learning rate", p.lr_star)?;
    }
    check_positive("huber delta", options.huber_delta)?;
    if !has_spread(points.iter().map(|p| p.n_params)) {
        return Err(Error::DegenerateSpan(Dimension::ModelSize));
    }
    if !has_spread(points.iter().map(|p| p.token_horizon)) {
        return Err(Error::DegenerateSpan(Dimension::TokenHorizon));
    }

    let points = canonical_points(points);
    let design = Design::new(&points);
    let delta = options.huber_delta;

    let mut starts = Vec::new();
    for &c in &options.start_log10_c {
        for &alpha in &options.start_alpha {
            for &beta in &options.start_beta {
                starts.push([c, alpha, beta]);
            }
        }
    }
    if starts.is_empty() {
        return Err(Error::InvalidInput("empty start grid".into()));
    }
    let run =
        |start: &[f64; 3]| optim::minimize(|theta, grad| design.objective(theta, grad, delta), start, &options.bfgs);
    let results: Vec<optim::Minimum> = if options.parallel {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };

    let usable = |m: &optim::Minimum| {
        m.value.is_finite()
            && (m.termination == Termination::Converged
                || (m.termination != Termination::NonFinite && m.grad_norm <= options.accept_grad_norm))
    };
    let starts_converged = results.iter().filter(|m| usable(m)).count();
    let best = results.iter().filter(|m| usable(m)).min_by(|a, b| {
        let scale = a.value.abs().max(b.value.abs());
        if (a.value - b.value).abs() <= 1e-12 * scale {
            (a.x[1] + a.x[2]).total_cmp(&(b.x[1] + b.x[2]))
        } else {
            a.value.total_cmp(&b.value)
        }
    });
    let Some(best) = best else {
        let best_objective = results
            .iter()
            .map(|m| m.value)
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NotConverged { best_objective });
    };

    let law = JointLaw::new(10f64.powf(best.x[0]), best.x[1], best.x[2]);
    let predicted_log: Vec<f64> = points
        .iter()
        .map(|p| law.log10_predict(p.n_params, p.token_horizon))
        .collect();
    let rmse_train = rmse(&design.log_lr, &predicted_log);
    let raw_obs: Vec<f64> = points.iter().map(|p| p.lr_star).collect();
    let raw_pred: Vec<f64> = predicted_log.iter().map(|v| 10f64.powf(*v)).collect();
    let rmse_train_lr = rmse(&raw_obs, &raw_pred);

    let holdout = holdout.map(canonical_points).unwrap_or_default();
    let (r_squared_validation, rmse_validation) = if holdout.is_empty() {
        (None, None)
    } else {
        let obs: Vec<f64> = holdout.iter().map(|p| p.lr_star.log10()).collect();
        let pred: Vec<f64> = holdout
            .iter()
            .map(|p| law.log10_predict(p.n_params, p.token_horizon))
            .collect();
        let r2 = match r_squared(&obs, &pred) {
            Ok(v) => Some(v),
            Err(Error::UndefinedRSquared) | Err(Error::InvalidInput(_)) => None,
            Err(e) => return Err(e),
        };
        (r2, Some(rmse(&obs, &pred)))
    };

    let mixed_regime = points.iter().any(|p| p.n_params < LARGE_MODEL_PARAMS)
        && points.iter().any(|p| p.n_params >= LARGE_MODEL_PARAMS);

    Ok(JointLawFit {
        law,
        huber_delta: delta,
        objective: best.value,
        rmse_train,
        rmse_train_lr,
        r_squared_validation,
        rmse_validation,
        n_train: points.len(),
        n_holdout: holdout.len(),
        starts_converged,
        starts_total: starts.len(),
        iterations: best.iterations,
        mixed_regime,
        points,
        holdout,
    })
}

/// Default tolerance on the spread of per-group slopes.
pub const DEFAULT_PARALLEL_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLine {
    pub label: String,
    /// log10 LR* at `x = x_ref` under the shared slope.
    pub intercept: f64,
    /// Slope from fitting this group alone.
    pub own_slope: f64,
    pub own_intercept: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelSlopesFit {
    /// Shared log-log slope, i.e. `-beta` or `-alpha`.
    pub shared_slope: f64,
    pub x_ref: f64,
    pub groups: Vec<GroupLine>,
    /// Largest minus smallest independently fitted slope.
    pub max_slope_deviation: f64,
    pub tolerance: f64,
    pub parallel: bool,
    /// R^2 of the shared-slope model in log10 space.
    pub r_squared: Option<f64>,
}

impl ParallelSlopesFit {
    pub fn group(&self, label: &str) -> Option<&GroupLine> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// `log10` of the LR ratio between two groups at any fixed `x`.
    pub fn intercept_difference(&self, numerator: &str, denominator: &str) -> Option<f64> {
        Some(self.group(numerator)?.intercept - self.group(denominator)?.intercept)
    }
}

/// Fits `log10 LR* = intercept_g + slope * log10(x / x_ref)` with one slope
/// shared by all groups. `x` is a token horizon or a parameter count.
pub fn fit_parallel_slopes(
    groups: &BTreeMap<String, Vec<(f64, f64)>>,
    x_ref: f64,
    tolerance: f64,
) -> Result<ParallelSlopesFit> {
    check_positive("reference scale", x_ref)?;
    if groups.is_empty() {
        return Err(Error::InvalidInput("no groups to fit".into()));
    }
    let mut prepared = Vec::with_capacity(groups.len());
    for (label, pts) in groups {
        for &(x, lr) in pts {
            if !(x > 0.0 && lr > 0.0 && x.is_finite() && lr.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "group `{label}`: values must be positive, got ({x}, {lr})"
                )));
            }
        }
        let xs: Vec<f64> = pts.iter().map(|p| (p.0 / x_ref).log10()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
        let own = fit_line(&xs, &ys).ok_or_else(|| {
            Error::InvalidInput(format!(
                "group `{label}` needs at least two points with distinct x, got {}",
                pts.len()
            ))
        })?;
        prepared.push((label.clone(), xs, ys, own));
    }

    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (_, xs, ys, _) in &prepared {
        let mx = crate::stats::mean(xs);
        let my = crate::stats::mean(ys);
        for (x, y) in xs.iter().zip(ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx).powi(2);
        }
    }
    let shared_slope = sxy / sxx;

    let mut observed = Vec::new();
    let mut predicted = Vec::new();
    let mut lines = Vec::with_capacity(prepared.len());
    for (label, xs, ys, own) in &prepared {
        let intercept = crate::stats::mean(ys) - shared_slope * crate::stats::mean(xs);
        observed.extend_from_slice(ys);
        predicted.extend(xs.iter().map(|x| intercept + shared_slope * x));
        lines.push(GroupLine {
            label: label.clone(),
            intercept,
            own_slope: own.slope,
            own_intercept: own.intercept,
            n_points: xs.len(),
        });
    }
    let (lo, hi) = lines.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| {
        (lo.min(g.own_slope), hi.max(g.own_slope))
    });
    let max_slope_deviation = hi - lo;
    let r2 = r_squared(&observed, &predicted).ok();

    Ok(ParallelSlopesFit {
        shared_slope,
        x_ref,
        groups: lines,
        max_slope_deviation,
        tolerance,
        parallel: max_slope_deviation <= tolerance,
        r_squared: r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(d: f64, lr: f64) -> HorizonPoint {
        HorizonPoint {
            token_horizon: d,
            lr_star: lr,
        }
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_power_law(&[hp(1e10, 1e-3), hp(4e10, 5e-4)]).unwrap();
        assert!((fit.law.beta - 0.5).abs() < 1e-12);
        assert!((fit.r_squared.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_errors() {
        assert!(fit_power_law(&[hp(1e10, 1e-3)]).is_err());
        assert!(fit_power_law(&[hp(1e10, 1e-3), hp(1e10, 2e-3)]).is_err());
        assert!(fit_power_law(&[hp(1e10, 1e-3), hp(-1.0, 2e-3)]).is_err());
        assert!(fit_power_law(&[hp(1e10, 0.0), hp(2e10, 2e-3)]).is_err());
    }

    #[test]
    fn flat_power_law_has_no_r_squared() {
        let fit = fit_power_law(&[hp(1e10, 1e-3), hp(2e10, 1e-3)]).unwrap();
        assert_eq!(fit.law.beta, 0.0);
        assert!(fit.r_squared.is_none());
    }

    #[test]
    fn joint_reference_point_returns_c() {
        let law = JointLaw::new(1.55e-3, 0.23, 0.32);
        assert_eq!(law.predict_lr(1e9, Some(1e9)).unwrap(), 1.55e-3);
        assert!(law.predict_lr(1e9, None).is_err());
    }

    #[test]
    fn huber_pieces() {
        assert_eq!(huber(0.5e-3, 1e-3), 0.125e-6);
        assert!((huber(3e-3, 1e-3) - 1e-3 * 2.5e-3).abs() < 1e-18);
        assert_eq!(huber_derivative(-5.0, 1e-3), -1e-3);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let points: Vec<OptimumPoint> = [
            (7.6e8, 2.5e10, 6e-4),
            (1.3e9, 5e10, 4.2e-4),
            (2.7e9, 1e11, 2.1e-4),
            (1.3e9, 2e11, 2.9e-4),
        ]
        .iter()
        .map(|&(n, d, lr)| OptimumPoint {
            n_params: n,
            token_horizon: d,
            lr_star: lr,
        })
        .collect();
        let design = Design::new(&points);
        // Wide and narrow deltas exercise both Huber branches.
        for delta in [1.0, 1e-3] {
            let theta = [-2.9, 0.2, 0.35];
            let mut grad = [0.0; 3];
            design.objective(&theta, &mut grad, delta);
            for k in 0..3 {
                let h = 1e-7;
                let mut plus = theta;
                let mut minus = theta;
                plus[k] += h;
                minus[k] -= h;
                let mut scratch = [0.0; 3];
                let fd = (design.objective(&plus, &mut scratch, delta) - design.objective(&minus, &mut scratch, delta))
                    / (2.0 * h);
                assert!(
                    (fd - grad[k]).abs() < 1e-7 * (1.0 + grad[k].abs()),
                    "delta {delta} k {k}: fd {fd} vs {}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn joint_fit_rejects_degenerate_span() {
        let same_n: Vec<OptimumPoint> = [1e10, 2e10, 4e10]
            .iter()
            .map(|&d| OptimumPoint {
                n_params: 1e9,
                token_horizon: d,
                lr_star: 1e-3,
            })
            .collect();
        assert!(matches!(
            fit_joint_law(&same_n, None, &JointFitOptions::default()),
            Err(Error::DegenerateSpan(Dimension::ModelSize))
        ));
        let same_d: Vec<OptimumPoint> = [1e9, 2e9, 4e9]
            .iter()
            .map(|&n| OptimumPoint {
                n_params: n,
                token_horizon: 1e10,
                lr_star: 1e-3,
            })
            .collect();
        assert!(matches!(
            fit_joint_law(&same_d, None, &JointFitOptions::default()),
            Err(Error::DegenerateSpan(Dimension::TokenHorizon))
        ));
    }

    #[test]
    fn law_strings_parse() {
        let law: JointLaw = "C=1.55e-3, alpha=0.23,beta=0.32".parse().unwrap();
        assert_eq!(law, JointLaw::new(1.55e-3, 0.23, 0.32));
        let round: JointLaw = law.to_string().parse().unwrap();
        assert_eq!(round, law);
        let power: PowerLaw = "B=8.29e-4,beta=0.3".parse().unwrap();
        assert_eq!(power.d_ref, REFERENCE_TOKENS);
        assert!("C=1e-3,alpha=0.2".parse::<JointLaw>().is_err());
        assert!("C=1e-3,alpha=0.2,beta=x".parse::<JointLaw>().is_err());
        assert!("C=-1,alpha=0.2,beta=0.3".parse::<JointLaw>().is_err());
        assert!("B=1e-3,beta=0.3,gamma=1".parse::<PowerLaw>().is_err());
        assert!("B=1e-3,B=2e-3,beta=0.3".parse::<PowerLaw>().is_err());
    }

    #[test]
    fn parallel_group_needs_two_points() {
        let mut groups = BTreeMap::new();
        groups.insert("a".to_string(), vec![(1e10, 1e-3), (2e10, 8e-4)]);
        groups.insert("b".to_string(), vec![(1e10, 1e-3)]);
        let err = fit_parallel_slopes(&groups, 1e9, 0.1).unwrap_err();
        assert!(err.to_string().contains("`b`"));
    }
}
