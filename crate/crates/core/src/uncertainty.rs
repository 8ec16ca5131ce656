//! Spread of fitted quantities under resampling and across seeds.
//!
//! The default resampler keeps a random 80% of the completed runs of every
//! sweep cell without replacement and reruns the whole pipeline (group, quadratic fits, and the
//! requested scaling law). Classical with-replacement resampling is available
//! through [`BootstrapOptions::with_replacement`]; in that mode duplicated runs
//! count as separate points in the quadratic fits.
//!
//! Resample `i` draws from ChaCha8 stream `i` of `rng_seed`, over records in
//! canonical order, so results are the same for any input order and for
//! serial or parallel execution.

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve_fit::LossCurveFit;
use crate::data::{sort_canonical, GroupKey, RunRecord};
use crate::error::{Error, Result};
use crate::pipeline::{family_power_laws, fit_cells, optimum_points, successful};
use crate::rng::Stream;
use crate::scaling::{fit_joint_law, JointFitOptions};
use crate::stats::{mean, std_dev, StdConvention};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub quantity: String,
    /// Value on the full input.
    pub point_estimate: f64,
    pub mean: f64,
    pub std: f64,
    /// `std / |mean|`.
    pub relative_std: f64,
    pub n_resamples: usize,
    /// Resamples in which this quantity could not be fitted.
    pub n_failed: usize,
    pub rng_seed: Option<u64>,
    pub std_convention: StdConvention,
}

impl BootstrapSummary {
    fn from_values(
        quantity: String,
        point_estimate: f64,
        values: &[f64],
        n_resamples: usize,
        rng_seed: Option<u64>,
        convention: StdConvention,
    ) -> Self {
        let mu = mean(values);
        let sigma = std_dev(values, convention);
        BootstrapSummary {
            quantity,
            point_estimate,
            mean: mu,
            std: sigma,
            relative_std: sigma / mu.abs(),
            n_resamples,
            n_failed: n_resamples - values.len(),
            rng_seed,
            std_convention: convention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapTarget {
    /// LR* of every sweep cell.
    LrStarPerHorizon,
    /// `B`, `beta` and `R^2` of the horizon law of every model family.
    PowerLawConstants,
    /// `C`, `alpha` and `beta` of the joint law over all cells.
    JointLawConstants,
}

impl FromStr for BootstrapTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "lr_star_per_horizon" | "lr_star" => Ok(BootstrapTarget::LrStarPerHorizon),
            "power_law_constants" | "power_law" => Ok(BootstrapTarget::PowerLawConstants),
            "joint_law_constants" | "joint_law" => Ok(BootstrapTarget::JointLawConstants),
            other => Err(format!("unknown bootstrap target `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleScope {
    /// Draw from all completed runs at once. The number of runs each cell
    /// keeps then varies, and a small cell can drop to one side of its optimum.
    Global,
    /// Draw the same fraction from every sweep cell separately.
    #[default]
    PerCell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub keep_fraction: f64,
    pub n_resamples: usize,
    pub rng_seed: u64,
    pub with_replacement: bool,
    pub scope: SubsampleScope,
    pub std_convention: StdConvention,
    /// Run resamples on the rayon pool. Results do not depend on this.
    pub parallel: bool,
    /// Settings for the joint-law target.
    pub joint: JointFitOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            keep_fraction: 0.8,
            n_resamples: 1000,
            rng_seed: 0,
            with_replacement: false,
            scope: SubsampleScope::PerCell,
            std_convention: StdConvention::Population,
            parallel: false,
            joint: JointFitOptions::default(),
        }
    }
}

fn cell_label(key: &GroupKey) -> String {
    format!("lr_star[{}]", key.label())
}

/// Target quantities from one pass of the pipeline, in output order.
fn quantities(
    records: &[RunRecord],
    target: BootstrapTarget,
    average_replicates: bool,
    joint: &JointFitOptions,
) -> Vec<(String, f64)> {
    let cells = successful(fit_cells(records, average_replicates));
    match target {
        BootstrapTarget::LrStarPerHorizon => cells.iter().map(|c| (cell_label(&c.key), c.fit.lr_star)).collect(),
        BootstrapTarget::PowerLawConstants => family_power_laws(&cells)
            .into_iter()
            .flat_map(|f| {
                let mut out = vec![
                    (format!("B[{}]", f.label), f.fit.law.b),
                    (format!("beta[{}]", f.label), f.fit.law.beta),
                ];
                if let Some(r2) = f.fit.r_squared {
                    out.push((format!("r_squared[{}]", f.label), r2));
                }
                out
            })
            .collect(),
        BootstrapTarget::JointLawConstants => match fit_joint_law(&optimum_points(&cells), None, joint) {
            Ok(fit) => vec![
                ("C".to_string(), fit.law.c),
                ("alpha".to_string(), fit.law.alpha),
                ("beta".to_string(), fit.law.beta),
            ],
            Err(_) => Vec::new(),
        },
    }
}

fn draw(records: &[RunRecord], options: &BootstrapOptions, index: usize) -> Vec<RunRecord> {
    let mut stream = Stream::new(options.rng_seed, index as u64);
    let mut pick = |population: &[RunRecord], out: &mut Vec<RunRecord>| {
        let n = population.len();
        let k = ((options.keep_fraction * n as f64).ceil() as usize).min(n);
        let idx = if options.with_replacement {
            stream.sample_with_replacement(n, k)
        } else {
            stream.sample_without_replacement(n, k)
        };
        out.extend(idx.into_iter().map(|i| population[i].clone()));
    };
    let mut out = Vec::new();
    match options.scope {
        SubsampleScope::Global => pick(records, &mut out),
        SubsampleScope::PerCell => {
            let mut start = 0;
            while start < records.len() {
                let key = GroupKey::of(&records[start]);
                let end = records[start..]
                    .iter()
                    .position(|r| GroupKey::of(r) != key)
                    .map_or(records.len(), |p| start + p);
                pick(&records[start..end], &mut out);
                start = end;
            }
        }
    }
    out
}

/// Resamples the records and summarizes the spread of the target quantities.
pub fn bootstrap(
    records: &[RunRecord],
    target: BootstrapTarget,
    options: &BootstrapOptions,
) -> Result<Vec<BootstrapSummary>> {
    if !(options.keep_fraction > 0.0 && options.keep_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "keep_fraction must be in (0, 1], got {}",
            options.keep_fraction
        )));
    }
    if options.n_resamples == 0 {
        return Err(Error::InvalidInput("n_resamples must be positive".into()));
    }
    let mut population: Vec<RunRecord> = records
        .iter()
        .filter(|r| r.is_completed() && r.final_val_loss.is_some())
        .cloned()
        .collect();
    sort_canonical(&mut population);

    let average = !options.with_replacement;
    let reference = quantities(&population, target, average, &options.joint);
    if reference.is_empty() {
        return Err(Error::InvalidInput(
            "nothing to bootstrap: the full data yields no fitted quantities".into(),
        ));
    }

    let run = |i: usize| -> BTreeMap<String, f64> {
        let sample = draw(&population, options, i);
        quantities(&sample, target, average, &options.joint)
            .into_iter()
            .collect()
    };
    let resamples: Vec<BTreeMap<String, f64>> = if options.parallel {
        (0..options.n_resamples).into_par_iter().map(run).collect()
    } else {
        (0..options.n_resamples).map(run).collect()
    };

    reference
        .into_iter()
        .map(|(label, point)| {
            let values: Vec<f64> = resamples
                .iter()
                .filter_map(|m| m.get(&label).copied())
                .filter(|v| v.is_finite())
                .collect();
            if values.is_empty() {
                return Err(Error::AllResamplesFailed { quantity: label });
            }
            Ok(BootstrapSummary::from_values(
                label,
                point,
                &values,
                options.n_resamples,
                Some(options.rng_seed),
                options.std_convention,
            ))
        })
        .collect()
}

/// Mean and spread of LR* across seed replicates of one sweep.
pub fn seed_stats(fits: &[LossCurveFit], convention: StdConvention) -> Result<BootstrapSummary> {
    let values: Vec<f64> = fits.iter().map(|f| f.lr_star).collect();
    lr_star_spread(&values, convention)
}

/// Same as [`seed_stats`] for optima that were fitted elsewhere.
pub fn lr_star_spread(values: &[f64], convention: StdConvention) -> Result<BootstrapSummary> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "seed statistics need at least 2 fits, got {}",
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidInput(format!("LR* must be positive, got {bad}")));
    }
    Ok(BootstrapSummary::from_values(
        "lr_star".into(),
        mean(values),
        values,
        values.len(),
        None,
        convention,
    ))
}
