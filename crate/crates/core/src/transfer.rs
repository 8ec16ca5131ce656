//! Practitioner-facing learning-rate transfer rules and checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::{fit_power_law, HorizonPoint, LrLaw, PowerLawFit, REFERENCE_TOKENS};

/// Horizon exponent that held across architectures for large models.
pub const DEFAULT_HORIZON_EXPONENT: f64 = 0.32;

/// Ratio beyond which [`audit_run`] flags a learning rate.
pub const DEFAULT_AUDIT_THRESHOLD: f64 = 1.5;

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {value}")))
    }
}

/// Carries an optimal LR measured at `d_short` tokens over to `d_long`
/// tokens: `lr * (d_long / d_short)^-beta`.
pub fn rule_of_thumb(lr_at_short: f64, d_short: f64, d_long: f64, beta: f64) -> Result<f64> {
    positive("learning rate", lr_at_short)?;
    positive("short horizon", d_short)?;
    positive("long horizon", d_long)?;
    if !beta.is_finite() {
        return Err(Error::InvalidInput("beta must be finite".into()));
    }
    Ok(lr_at_short * (d_long / d_short).powf(-beta))
}

/// Depth-and-horizon rule for width-transferable parametrizations:
/// `C * n_layers^-alpha * (D / 1e9)^-beta`.
pub fn mup_depth_lr(c: f64, n_layers: u32, tokens: f64, alpha: f64, beta: f64) -> Result<f64> {
    positive("C", c)?;
    positive("token horizon", tokens)?;
    if n_layers == 0 {
        return Err(Error::InvalidInput("n_layers must be positive".into()));
    }
    Ok(c * f64::from(n_layers).powf(-alpha) * (tokens / REFERENCE_TOKENS).powf(-beta))
}

/// Older model-size-only baseline: `0.003239 - 0.0001395 * ln(N / 1e9)`.
///
/// `N` is converted to billions and the log is natural. The formula turns
/// negative for very large `N` (around 1.2e19 parameters); that is an error.
pub fn kaplan_baseline(n_params: f64) -> Result<f64> {
    positive("model size", n_params)?;
    let lr = 0.003239 - 0.0001395 * (n_params / 1e9).ln();
    if lr > 0.0 {
        Ok(lr)
    } else {
        Err(Error::OutOfDomain(format!(
            "baseline learning rate is not positive for {n_params:e} parameters"
        )))
    }
}

/// Measured optima of one model family, as stored in an optima JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimaSet {
    /// Free-form note on where the numbers come from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_params: Option<f64>,
    pub optima: Vec<HorizonPoint>,
}

impl OptimaSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let set: OptimaSet = serde_json::from_str(text).map_err(|e| Error::Parse {
            row: e.line(),
            field: None,
            message: e.to_string(),
        })?;
        if let Some(n) = set.n_params {
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::Validation {
                    row: 0,
                    field: "n_params".into(),
                    message: format!("must be positive, got {n}"),
                });
            }
        }
        for (i, p) in set.optima.iter().enumerate() {
            for (field, value) in [("token_horizon", p.token_horizon), ("lr_star", p.lr_star)] {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::Validation {
                        row: i + 1,
                        field: field.into(),
                        message: format!("must be positive, got {value}"),
                    });
                }
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub token_horizon: f64,
    pub measured: Option<f64>,
    pub predicted: Option<f64>,
    /// `measured / predicted`.
    pub ratio: Option<f64>,
    /// `|ratio - 1|`.
    pub relative_error: Option<f64>,
    /// Whether this horizon was left out of the fit.
    pub held_out: bool,
    /// Relative error of reusing the LR* from the longest fitted horizon.
    pub no_transfer_relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub fit_horizons: Vec<f64>,
    pub fit: PowerLawFit,
    pub rows: Vec<TransferRow>,
    /// Mean `|ratio - 1|` over held-out horizons.
    pub mean_heldout_relative_error: Option<f64>,
    /// Model-size-only baseline, when a model size was supplied.
    pub kaplan_baseline_lr: Option<f64>,
}

fn same_horizon(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Fits the horizon law on `fit_horizons` and predicts every measured horizon.
pub fn evaluate_transfer(measured: &[HorizonPoint], fit_horizons: &[f64]) -> Result<TransferReport> {
    evaluate_transfer_with(measured, fit_horizons, None)
}

pub fn evaluate_transfer_with(
    measured: &[HorizonPoint],
    fit_horizons: &[f64],
    n_params: Option<f64>,
) -> Result<TransferReport> {
    let mut fit_points = Vec::new();
    for &d in fit_horizons {
        let point = measured
            .iter()
            .find(|p| same_horizon(p.token_horizon, d))
            .ok_or_else(|| Error::InvalidInput(format!("fit horizon {d:e} has no measurement")))?;
        fit_points.push(*point);
    }
    let distinct = {
        let mut hs: Vec<f64> = fit_points.iter().map(|p| p.token_horizon).collect();
        hs.sort_by(f64::total_cmp);
        hs.dedup_by(|a, b| same_horizon(*a, *b));
        hs.len()
    };
    if distinct < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 distinct fit horizons, got {distinct}"
        )));
    }
    let fit = fit_power_law(&fit_points)?;
    let longest_fit = fit_points
        .iter()
        .max_by(|a, b| a.token_horizon.total_cmp(&b.token_horizon))
        .map(|p| p.lr_star);

    let mut sorted = measured.to_vec();
    sorted.sort_by(|a, b| a.token_horizon.total_cmp(&b.token_horizon));
    let mut rows = Vec::with_capacity(sorted.len());
    for p in &sorted {
        let predicted = fit.law.predict_lr(p.token_horizon, None)?;
        let ratio = p.lr_star / predicted;
        let held_out = !fit_horizons.iter().any(|&d| same_horizon(d, p.token_horizon));
        rows.push(TransferRow {
            token_horizon: p.token_horizon,
            measured: Some(p.lr_star),
            predicted: Some(predicted),
            ratio: Some(ratio),
            relative_error: Some((ratio - 1.0).abs()),
            held_out,
            no_transfer_relative_error: if held_out {
                longest_fit.map(|lr| (lr / p.lr_star - 1.0).abs())
            } else {
                None
            },
        });
    }
    let held: Vec<f64> = rows
        .iter()
        .filter(|r| r.held_out)
        .filter_map(|r| r.relative_error)
        .collect();
    let mean_heldout_relative_error = if held.is_empty() {
        None
    } else {
        Some(held.iter().sum::<f64>() / held.len() as f64)
    };
    let kaplan_baseline_lr = n_params.and_then(|n| kaplan_baseline(n).ok());
    Ok(TransferReport {
        fit_horizons: fit_horizons.to_vec(),
        fit,
        rows,
        mean_heldout_relative_error,
        kaplan_baseline_lr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditFlag {
    TooLarge,
    TooSmall,
    Ok,
}

impl fmt::Display for AuditFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditFlag::TooLarge => "LR likely too large",
            AuditFlag::TooSmall => "LR likely too small",
            AuditFlag::Ok => "LR consistent with the fitted law",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub token_horizon: f64,
    pub n_params: Option<f64>,
    pub used_lr: f64,
    pub predicted_lr: f64,
    /// `used_lr / predicted_lr`.
    pub ratio: f64,
    pub threshold: f64,
    pub flag: AuditFlag,
    pub verdict: String,
}

/// Compares a learning rate that was used against the law's prediction.
pub fn audit_run(
    law: &dyn LrLaw,
    used_lr: f64,
    tokens: f64,
    n_params: Option<f64>,
    threshold: f64,
) -> Result<AuditVerdict> {
    positive("used learning rate", used_lr)?;
    if !(threshold.is_finite() && threshold >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "threshold must be at least 1, got {threshold}"
        )));
    }
    let predicted_lr = law.predict_lr(tokens, n_params)?;
    let ratio = used_lr / predicted_lr;
    let flag = if ratio > threshold {
        AuditFlag::TooLarge
    } else if ratio < 1.0 / threshold {
        AuditFlag::TooSmall
    } else {
        AuditFlag::Ok
    };
    Ok(AuditVerdict {
        token_horizon: tokens,
        n_params,
        used_lr,
        predicted_lr,
        ratio,
        threshold,
        flag,
        verdict: flag.to_string(),
    })
}
