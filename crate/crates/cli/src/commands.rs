use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use lrscale::curve_fit::{suggest_probes, CellFit};
use lrscale::data::{group, parse_str, to_csv, to_jsonl, IngestOptions, Ingested, InputFormat};
use lrscale::error::Error;
use lrscale::optim::BfgsOptions;
use lrscale::pipeline::{by_family, find_group, fit_cells, optimum_points, CellOutcome};
use lrscale::plot;
use lrscale::scaling::{
    fit_joint_law, fit_power_law_with_ref, JointFitOptions, JointLawFit, LrLaw, OptimumPoint, PowerLawFit,
};
use lrscale::stats::StdConvention;
use lrscale::synth::{generate, Grid, SurfaceSpec};
use lrscale::transfer::{audit_run, evaluate_transfer_with, OptimaSet};
use lrscale::uncertainty::{bootstrap, BootstrapOptions, BootstrapTarget, SubsampleScope};

use crate::args::*;
use crate::output::{fixed, sci, sci_opt, Output, Table};
use crate::CliError;

pub struct Context {
    pub parallel: bool,
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("result types serialize")
}

fn read_text(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::read_to_string(p).map_err(|source| {
            CliError::Core(Error::Io {
                path: p.to_path_buf(),
                source,
            })
        }),
        _ => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text).map_err(|source| {
                CliError::Core(Error::Io {
                    path: "<stdin>".into(),
                    source,
                })
            })?;
            Ok(text)
        }
    }
}

fn read_records(input: &Input) -> Result<Ingested, CliError> {
    let text = read_text(input.input.as_deref())?;
    let format = match input.input_format {
        Some(f) => f.into(),
        None if input
            .input
            .as_ref()
            .and_then(|p| p.extension())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv")) =>
        {
            InputFormat::Csv
        }
        None => InputFormat::Jsonl,
    };
    let ingested = parse_str(&text, format, IngestOptions { lenient: input.lenient })?;
    for warning in &ingested.report.warnings {
        eprintln!("warning: {warning}");
    }
    for rejected in &ingested.report.rejected {
        eprintln!("warning: skipped row {}: {}", rejected.row, rejected.reason);
    }
    Ok(ingested)
}

fn joint_options(args: &JointOptionsArgs, ctx: &Context) -> JointFitOptions {
    JointFitOptions {
        huber_delta: args.huber_delta,
        bfgs: BfgsOptions {
            grad_tol: args.grad_tol,
            max_iterations: args.max_iterations,
        },
        parallel: ctx.parallel,
        ..JointFitOptions::default()
    }
}

fn error_value(e: &Error) -> Value {
    json!({ "code": e.code(), "message": e.to_string() })
}

fn cell_rows(outcomes: &[CellOutcome]) -> (Vec<Value>, Table) {
    let mut table = Table::new(["cell", "points", "LR*", "a", "R^2", "note"]);
    let mut values = Vec::new();
    for cell in outcomes {
        let label = cell.key.label();
        match &cell.result {
            Ok(fit) => {
                values.push(json!({ "label": label, "key": to_value(&cell.key), "fit": to_value(fit) }));
                table.row(vec![
                    label,
                    fit.n_points.to_string(),
                    sci(fit.lr_star),
                    sci(fit.a),
                    fixed(fit.r_squared, 4),
                    if fit.extrapolated_minimum {
                        "minimum outside sampled range".into()
                    } else {
                        String::new()
                    },
                ]);
            }
            Err(e) => {
                values.push(json!({ "label": label, "key": to_value(&cell.key), "error": error_value(e) }));
                table.row(vec![
                    label,
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    e.to_string(),
                ]);
            }
        }
    }
    (values, table)
}

/// Fails with the first fit error when nothing could be fitted.
fn require_some(outcomes: Vec<CellOutcome>) -> Result<(Vec<CellOutcome>, Vec<CellFit>), CliError> {
    if outcomes.is_empty() {
        return Err(CliError::Core(Error::InvalidInput("no completed runs to fit".into())));
    }
    if outcomes.iter().all(|c| c.result.is_err()) {
        let first = outcomes
            .into_iter()
            .next()
            .and_then(|c| c.result.err())
            .expect("non-empty");
        return Err(CliError::Core(first));
    }
    for cell in &outcomes {
        if let Err(e) = &cell.result {
            eprintln!("warning: cell {} not fitted: [{}] {e}", cell.key.label(), e.code());
        }
    }
    let fits = outcomes
        .iter()
        .filter_map(|c| {
            c.result.as_ref().ok().map(|fit| CellFit {
                key: c.key.clone(),
                fit: *fit,
            })
        })
        .collect();
    Ok((outcomes, fits))
}

pub fn ingest(input: &Input) -> Result<Output, CliError> {
    let ingested = read_records(input)?;
    let groups = group(&ingested.records);
    let group_values: Vec<Value> = groups
        .iter()
        .map(|g| json!({ "label": g.key.label(), "distinct_lrs": g.distinct_lrs(), "fittable": g.is_fittable() }))
        .collect();
    let report = &ingested.report;
    let mut text = format!(
        "accepted {}  diverged {}  rejected {}\n\n",
        report.accepted,
        report.diverged,
        report.rejected.len()
    );
    let mut table = Table::new(["cell", "distinct LRs", "fittable"]);
    for g in &groups {
        table.row(vec![
            g.key.label(),
            g.distinct_lrs().to_string(),
            g.is_fittable().to_string(),
        ]);
    }
    text.push_str(&table.render());
    Ok(
        Output::new(json!({ "report": to_value(report), "groups": group_values }), text)
            .with_csv(to_csv(&ingested.records)),
    )
}

pub fn fit_loss(args: &FitLossArgs) -> Result<Output, CliError> {
    let ingested = read_records(&args.input)?;
    let (outcomes, fits) = require_some(fit_cells(&ingested.records, !args.no_average))?;
    let (values, table) = cell_rows(&outcomes);
    let curves = plot::to_csv(&plot::loss_curves(&group(&ingested.records), &fits));
    Ok(Output::new(json!({ "cells": values }), table.render())
        .with_csv(curves.clone())
        .with_file("loss_curves.csv", curves))
}

type Labelled<T> = Vec<(String, T)>;

fn family_fits(cells: &[CellFit], d_ref: f64) -> (Labelled<PowerLawFit>, Labelled<Error>) {
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (family, points) in by_family(cells) {
        match fit_power_law_with_ref(&points, d_ref) {
            Ok(fit) => fits.push((family.label(), fit)),
            Err(e) => failures.push((family.label(), e)),
        }
    }
    (fits, failures)
}

fn law_table(fits: &[(String, PowerLawFit)]) -> Table {
    let mut table = Table::new(["family", "B", "beta", "R^2", "points"]);
    for (label, fit) in fits {
        table.row(vec![
            label.clone(),
            sci(fit.law.b),
            fixed(fit.law.beta, 4),
            fit.r_squared.map_or("-".into(), |r| fixed(r, 4)),
            fit.n_points.to_string(),
        ]);
    }
    table
}

pub fn fit_law(args: &FitLawArgs) -> Result<Output, CliError> {
    let (fits, failures) = match &args.optima {
        Some(path) => {
            let set = OptimaSet::from_json(&read_text(Some(path))?)?;
            let label = set.model_name.clone().unwrap_or_else(|| "optima".into());
            (
                vec![(label, fit_power_law_with_ref(&set.optima, args.d_ref)?)],
                Vec::new(),
            )
        }
        None => {
            let ingested = read_records(&args.input)?;
            let (_, cells) = require_some(fit_cells(&ingested.records, true))?;
            family_fits(&cells, args.d_ref)
        }
    };
    for (label, e) in &failures {
        eprintln!("warning: family {label} not fitted: [{}] {e}", e.code());
    }
    if fits.is_empty() {
        let (_, first) = failures.into_iter().next().expect("no fits implies a failure");
        return Err(CliError::Core(first));
    }
    let values: Vec<Value> = fits
        .iter()
        .map(|(l, f)| json!({ "label": l, "fit": to_value(f) }))
        .collect();
    let curves = plot::to_csv(&plot::horizon_curves(fits.iter().map(|(l, f)| (l.as_str(), f))));
    Ok(Output::new(json!({ "families": values }), law_table(&fits).render())
        .with_csv(curves.clone())
        .with_file("lr_vs_horizon.csv", curves))
}

fn split_holdout(points: Vec<OptimumPoint>, holdout_n: &[f64]) -> (Vec<OptimumPoint>, Vec<OptimumPoint>) {
    points
        .into_iter()
        .partition(|p| !holdout_n.iter().any(|&n| (p.n_params - n).abs() <= 1e-9 * n.abs()))
}

fn joint_text(fit: &JointLawFit) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "LR* = C (N/{:e})^-alpha (D/{:e})^-beta",
        fit.law.n_ref, fit.law.d_ref
    );
    let mut table = Table::new([
        "C",
        "alpha",
        "beta",
        "rmse log10",
        "rmse LR",
        "val R^2",
        "train",
        "holdout",
    ]);
    table.row(vec![
        sci(fit.law.c),
        fixed(fit.law.alpha, 4),
        fixed(fit.law.beta, 4),
        sci(fit.rmse_train),
        sci(fit.rmse_train_lr),
        fit.r_squared_validation.map_or("-".into(), |r| fixed(r, 4)),
        fit.n_train.to_string(),
        fit.n_holdout.to_string(),
    ]);
    text.push_str(&table.render());
    if fit.mixed_regime {
        text.push_str("note: training data mixes models below and above 760M parameters\n");
    }
    text
}

fn joint_from_cells(cells: &[CellFit], holdout_n: &[f64], options: &JointFitOptions) -> Result<JointLawFit, Error> {
    let (train, holdout) = split_holdout(optimum_points(cells), holdout_n);
    let holdout = if holdout.is_empty() {
        None
    } else {
        Some(holdout.as_slice())
    };
    fit_joint_law(&train, holdout, options)
}

pub fn fit_joint(args: &FitJointArgs, ctx: &Context) -> Result<Output, CliError> {
    let ingested = read_records(&args.input)?;
    let (_, cells) = require_some(fit_cells(&ingested.records, true))?;
    let fit = joint_from_cells(&cells, &args.holdout_n, &joint_options(&args.joint, ctx))?;
    if fit.mixed_regime {
        eprintln!("warning: training data mixes models below and above 760M parameters");
    }
    Ok(Output::new(to_value(&fit), joint_text(&fit)))
}

pub fn run_bootstrap(args: &BootstrapArgs, ctx: &Context) -> Result<Output, CliError> {
    let ingested = read_records(&args.input)?;
    let options = BootstrapOptions {
        keep_fraction: args.keep,
        n_resamples: args.resamples,
        rng_seed: args.seed,
        with_replacement: args.with_replacement,
        scope: match args.scope {
            ScopeArg::PerCell => SubsampleScope::PerCell,
            ScopeArg::Global => SubsampleScope::Global,
        },
        std_convention: match args.std {
            StdArg::Population => StdConvention::Population,
            StdArg::Sample => StdConvention::Sample,
        },
        parallel: ctx.parallel,
        joint: joint_options(&args.joint, ctx),
    };
    let target = match args.target {
        TargetArg::LrStar => BootstrapTarget::LrStarPerHorizon,
        TargetArg::PowerLaw => BootstrapTarget::PowerLawConstants,
        TargetArg::JointLaw => BootstrapTarget::JointLawConstants,
    };
    let summaries = bootstrap(&ingested.records, target, &options)?;
    let mut table = Table::new(["quantity", "point", "mean", "std", "std/mean", "failed"]);
    let mut csv = String::from("quantity,point_estimate,mean,std,relative_std,n_failed\n");
    for s in &summaries {
        table.row(vec![
            s.quantity.clone(),
            sci(s.point_estimate),
            sci(s.mean),
            sci(s.std),
            sci(s.relative_std),
            format!("{}/{}", s.n_failed, s.n_resamples),
        ]);
        let _ = writeln!(
            csv,
            "\"{}\",{},{},{},{},{}",
            s.quantity.replace('"', "\"\""),
            s.point_estimate,
            s.mean,
            s.std,
            s.relative_std,
            s.n_failed
        );
    }
    Ok(Output::new(json!({ "summaries": to_value(&summaries) }), table.render()).with_csv(csv))
}

fn chosen_law(law: &LawArgs) -> (&dyn LrLaw, String) {
    match (&law.law, &law.joint) {
        (Some(l), _) => (l as &dyn LrLaw, l.to_string()),
        (None, Some(j)) => (j as &dyn LrLaw, j.to_string()),
        (None, None) => unreachable!("clap requires one of --law and --joint"),
    }
}

pub fn predict(args: &PredictArgs) -> Result<Output, CliError> {
    let (law, description) = chosen_law(&args.law);
    let lr = law.predict_lr(args.d, args.n)?;
    let text = format!(
        "predicted LR* {} at D = {}{}\n",
        sci(lr),
        sci(args.d),
        args.n.map_or(String::new(), |n| format!(", N = {}", sci(n)))
    );
    Ok(Output::new(
        json!({ "law": description, "token_horizon": args.d, "n_params": args.n, "lr_star": lr }),
        text,
    ))
}

pub fn transfer_eval(args: &TransferEvalArgs) -> Result<Output, CliError> {
    let set = OptimaSet::from_json(&read_text(Some(&args.optima))?)?;
    let report = evaluate_transfer_with(&set.optima, &args.fit_horizons, set.n_params)?;
    let mut text = format!(
        "fit on {} horizons: B = {}, beta = {}\n\n",
        report.fit_horizons.len(),
        sci(report.fit.law.b),
        fixed(report.fit.law.beta, 4)
    );
    let mut table = Table::new(["D", "measured", "predicted", "ratio", "held out", "no-transfer error"]);
    let mut csv = String::from("token_horizon,measured,predicted,ratio,held_out\n");
    for row in &report.rows {
        table.row(vec![
            sci(row.token_horizon),
            sci_opt(row.measured),
            sci_opt(row.predicted),
            row.ratio.map_or("-".into(), |r| fixed(r, 3)),
            if row.held_out { "yes".into() } else { "no".into() },
            row.no_transfer_relative_error.map_or("-".into(), |e| fixed(e, 3)),
        ]);
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.token_horizon,
            row.measured.unwrap_or(f64::NAN),
            row.predicted.unwrap_or(f64::NAN),
            row.ratio.unwrap_or(f64::NAN),
            row.held_out
        );
    }
    text.push_str(&table.render());
    if let Some(e) = report.mean_heldout_relative_error {
        let _ = writeln!(text, "\nmean held-out |ratio - 1|: {}", fixed(e, 3));
    }
    if let Some(k) = report.kaplan_baseline_lr {
        let _ = writeln!(text, "model-size-only baseline LR: {}", sci(k));
    }
    Ok(Output::new(to_value(&report), text).with_csv(csv))
}

pub fn audit(args: &AuditArgs) -> Result<Output, CliError> {
    let (law, description) = chosen_law(&args.law);
    let verdict = audit_run(law, args.used_lr, args.d, args.n, args.threshold)?;
    let text = format!(
        "{}: used {} vs predicted {} (ratio {})\n",
        verdict.verdict,
        sci(verdict.used_lr),
        sci(verdict.predicted_lr),
        fixed(verdict.ratio, 2)
    );
    let mut value = to_value(&verdict);
    value["law"] = Value::String(description);
    Ok(Output::new(value, text))
}

pub fn suggest_lrs(args: &SuggestArgs) -> Result<Output, CliError> {
    let ingested = read_records(&args.input)?;
    let groups = group(&ingested.records);
    let (_, cells) = require_some(fit_cells(&ingested.records, true))?;
    let mut table = Table::new(["cell", "LR*", "probe below", "probe above"]);
    let mut values = Vec::new();
    for cell in &cells {
        let Some(g) = find_group(&groups, &cell.key) else {
            continue;
        };
        let probes = suggest_probes(g, &cell.fit);
        let below: Vec<f64> = probes.iter().copied().filter(|&p| p < cell.fit.lr_star).collect();
        let above: Vec<f64> = probes.iter().copied().filter(|&p| p > cell.fit.lr_star).collect();
        table.row(vec![
            cell.key.label(),
            sci(cell.fit.lr_star),
            sci_opt(below.first().copied()),
            sci_opt(above.first().copied()),
        ]);
        values.push(json!({ "label": cell.key.label(), "lr_star": cell.fit.lr_star, "probes": probes }));
    }
    Ok(Output::new(json!({ "cells": values }), table.render()))
}

pub fn synth(args: &SynthArgs) -> Result<Output, CliError> {
    let spec = SurfaceSpec {
        law: args.law,
        curvature: args.curvature,
        flattening_gamma: args.gamma,
        floor_loss: args.floor_loss,
        noise_sigma: args.noise,
        divergence_lr_multiple: args.diverge_at,
        batch_size_exponent: args.kappa,
        rng_seed: args.seed,
        ..SurfaceSpec::default()
    };
    let grid = Grid {
        n_params: args.n_params.clone(),
        token_horizons: args.horizons.clone(),
        lr_multipliers: args.multipliers.clone(),
        batch_sizes: args.batch_sizes.clone(),
        seeds: args.replicates,
    };
    let records = generate(&spec, &grid)?;
    let jsonl = to_jsonl(&records);
    Ok(Output {
        json: Value::Null,
        text: jsonl.clone(),
        csv: Some(to_csv(&records)),
        files: vec![("records.jsonl".into(), jsonl)],
    })
}

pub fn report(args: &ReportArgs, ctx: &Context) -> Result<Output, CliError> {
    let ingested = read_records(&args.input)?;
    let groups = group(&ingested.records);
    let (outcomes, cells) = require_some(fit_cells(&ingested.records, true))?;
    let (cell_values, cell_table) = cell_rows(&outcomes);
    let (families, family_failures) = family_fits(&cells, lrscale::scaling::REFERENCE_TOKENS);
    let joint = joint_from_cells(&cells, &args.holdout_n, &joint_options(&args.joint, ctx));

    let mut text = String::new();
    let r = &ingested.report;
    let _ = writeln!(
        text,
        "runs: accepted {}, diverged {}, rejected {}\n",
        r.accepted,
        r.diverged,
        r.rejected.len()
    );
    let _ = writeln!(text, "loss curves\n{}", cell_table.render());
    let _ = writeln!(text, "horizon laws\n{}", law_table(&families).render());
    for (label, e) in &family_failures {
        let _ = writeln!(text, "family {label} not fitted: {e}");
    }
    match &joint {
        Ok(fit) => {
            let _ = writeln!(text, "joint law\n{}", joint_text(fit));
        }
        Err(e) => {
            let _ = writeln!(text, "joint law not fitted: {e}");
        }
    }

    let mut failures: BTreeMap<String, Value> = BTreeMap::new();
    for (label, e) in &family_failures {
        failures.insert(format!("family:{label}"), error_value(e));
    }
    let json = json!({
        "ingest": to_value(r),
        "cells": cell_values,
        "families": families.iter().map(|(l, f)| json!({ "label": l, "fit": to_value(f) })).collect::<Vec<_>>(),
        "family_failures": failures,
        "joint": match &joint {
            Ok(fit) => to_value(fit),
            Err(e) => json!({ "error": error_value(e) }),
        },
    });
    let loss_csv = plot::to_csv(&plot::loss_curves(&groups, &cells));
    let horizon_csv = plot::to_csv(&plot::horizon_curves(families.iter().map(|(l, f)| (l.as_str(), f))));
    Ok(Output::new(json, text)
        .with_file("loss_curves.csv", loss_csv)
        .with_file("lr_vs_horizon.csv", horizon_csv))
}
