use std::collections::BTreeMap;

use lrscale::data::{group, parse_jsonl, to_jsonl, RunRecord};
use lrscale::pipeline::{family_power_laws, fit_cells, optimum_points, successful};
use lrscale::rng::Stream;
use lrscale::scaling::{
    fit_joint_law, fit_parallel_slopes, fit_power_law, HorizonPoint, JointFitOptions, JointLaw, LrLaw, OptimumPoint,
};
use lrscale::synth::{generate, Grid, SurfaceSpec};
use lrscale::uncertainty::{bootstrap, BootstrapOptions, BootstrapTarget, SubsampleScope};

fn plant() -> JointLaw {
    JointLaw::new(1.55e-3, 0.23, 0.32)
}

fn planted_points(law: &JointLaw, sizes: &[f64], horizons: &[f64]) -> Vec<OptimumPoint> {
    let mut pts = Vec::new();
    for &n in sizes {
        for &d in horizons {
            pts.push(OptimumPoint {
                n_params: n,
                token_horizon: d,
                lr_star: law.predict_lr(d, Some(n)).unwrap(),
            });
        }
    }
    pts
}

const SIZES: [f64; 3] = [0.76e9, 1.3e9, 2.7e9];
const HORIZONS: [f64; 4] = [25e9, 50e9, 100e9, 200e9];

#[test]
fn joint_fit_is_order_independent() {
    let mut pts = planted_points(&plant(), &SIZES, &HORIZONS);
    for (i, p) in pts.iter_mut().enumerate() {
        p.lr_star *= 1.0 + 0.03 * ((i * 7 % 5) as f64 - 2.0) / 2.0;
    }
    let a = fit_joint_law(&pts, None, &JointFitOptions::default()).unwrap();
    pts.reverse();
    pts.swap(1, 7);
    let b = fit_joint_law(&pts, None, &JointFitOptions::default()).unwrap();
    let parallel = fit_joint_law(
        &pts,
        None,
        &JointFitOptions {
            parallel: true,
            ..JointFitOptions::default()
        },
    )
    .unwrap();
    assert_eq!(a.law, b.law);
    assert_eq!(a.law, parallel.law);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn joint_fit_with_flat_model_size_matches_horizon_fit() {
    let law = JointLaw::new(2e-3, 0.0, 0.4);
    let mut pts = planted_points(&law, &SIZES, &HORIZONS);
    for (i, p) in pts.iter_mut().enumerate() {
        p.lr_star *= 1.0 + 1e-4 * (i as f64).sin();
    }
    let joint = fit_joint_law(&pts, None, &JointFitOptions::default()).unwrap();
    assert!(joint.law.alpha.abs() < 1e-3, "alpha {}", joint.law.alpha);
    let horizon_points: Vec<HorizonPoint> = pts
        .iter()
        .map(|p| HorizonPoint {
            token_horizon: p.token_horizon,
            lr_star: p.lr_star,
        })
        .collect();
    let horizon = fit_power_law(&horizon_points).unwrap();
    assert!((joint.law.beta - horizon.law.beta).abs() < 1e-3);
}

#[test]
fn holdout_validation_on_larger_model() {
    let train = planted_points(&plant(), &SIZES, &HORIZONS);
    let holdout = planted_points(&plant(), &[7e9], &[25e9, 50e9, 100e9]);
    let fit = fit_joint_law(&train, Some(&holdout), &JointFitOptions::default()).unwrap();
    assert_eq!(fit.n_holdout, 3);
    assert!(fit.r_squared_validation.unwrap() > 0.999999);
    assert!(fit.rmse_validation.unwrap() < 1e-9);
    assert!(!fit.mixed_regime);

    let mixed = planted_points(&plant(), &[125e6, 1.3e9], &HORIZONS);
    assert!(
        fit_joint_law(&mixed, None, &JointFitOptions::default())
            .unwrap()
            .mixed_regime
    );
}

/// Parallel-slopes fits across N-groups and across D-groups recover the
/// same exponents as the joint fit.
#[test]
fn separable_law_gives_consistent_slopes() {
    let records = generate(&SurfaceSpec::default(), &Grid::default()).unwrap();
    let cells = successful(fit_cells(&records, true));
    let points = optimum_points(&cells);
    let joint = fit_joint_law(&points, None, &JointFitOptions::default()).unwrap();

    let mut by_size: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut by_horizon: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for p in &points {
        by_size
            .entry(format!("N={:e}", p.n_params))
            .or_default()
            .push((p.token_horizon, p.lr_star));
        by_horizon
            .entry(format!("D={:e}", p.token_horizon))
            .or_default()
            .push((p.n_params, p.lr_star));
    }
    let beta = -fit_parallel_slopes(&by_size, 1e9, 0.1).unwrap().shared_slope;
    let alpha = -fit_parallel_slopes(&by_horizon, 1e9, 0.1).unwrap().shared_slope;
    assert!(
        (beta / joint.law.beta - 1.0).abs() < 0.005,
        "beta {beta} vs {}",
        joint.law.beta
    );
    assert!(
        (alpha / joint.law.alpha - 1.0).abs() < 0.005,
        "alpha {alpha} vs {}",
        joint.law.alpha
    );
}

#[test]
fn parallel_slope_scenarios() {
    let horizons = [25e9, 50e9, 100e9, 200e9, 400e9];
    let line = |c: f64, beta: f64| -> Vec<(f64, f64)> {
        horizons
            .iter()
            .map(|&d| (d, JointLaw::new(c, 0.0, beta).predict_lr(d, Some(1e9)).unwrap()))
            .collect()
    };
    let exact = BTreeMap::from([
        ("lo".to_string(), line(1e-3, 0.32)),
        ("hi".to_string(), line(2e-3, 0.32)),
    ]);
    let fit = fit_parallel_slopes(&exact, 1e9, 0.1).unwrap();
    assert!((fit.shared_slope + 0.32).abs() < 1e-12);
    assert!(fit.max_slope_deviation < 1e-9);
    assert!(fit.parallel);
    assert!((fit.intercept_difference("hi", "lo").unwrap() - 2f64.log10()).abs() < 1e-12);

    let skewed = BTreeMap::from([("a".to_string(), line(1e-3, 0.32)), ("b".to_string(), line(1e-3, 0.70))]);
    let fit = fit_parallel_slopes(&skewed, 1e9, 0.1).unwrap();
    assert!(!fit.parallel);
    assert!((fit.max_slope_deviation - 0.38).abs() < 1e-9);

    let spec = SurfaceSpec {
        batch_size_exponent: 0.25,
        ..SurfaceSpec::default()
    };
    let grid = Grid {
        n_params: vec![350e6],
        token_horizons: horizons.to_vec(),
        batch_sizes: vec![524_288.0, 1_048_576.0],
        ..Grid::default()
    };
    let cells = successful(fit_cells(&generate(&spec, &grid).unwrap(), true));
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for c in &cells {
        groups
            .entry(c.key.family().label())
            .or_default()
            .push((c.key.token_horizon, c.fit.lr_star));
    }
    assert_eq!(groups.len(), 2);
    let fit = fit_parallel_slopes(&groups, 1e9, 0.1).unwrap();
    assert!(fit.parallel);
    let diff = fit.intercept_difference("350m/bs1.048576e6", "350m").unwrap();
    assert!((diff - 0.25 * 2f64.log10()).abs() < 1e-9, "{diff}");
}

#[test]
fn noisy_power_law_exponent_is_unbiased() {
    let beta = 0.5;
    let horizons: Vec<f64> = (0..8).map(|i| 25e9 * 1.6f64.powi(i)).collect();
    let estimates: Vec<f64> = (0..400)
        .map(|rep| {
            let mut rng = Stream::new(77, rep);
            let pts: Vec<HorizonPoint> = horizons
                .iter()
                .map(|&d| HorizonPoint {
                    token_horizon: d,
                    lr_star: 1e-3 * (d / 1e9).powf(-beta) * 10f64.powf(0.05 * rng.standard_normal()),
                })
                .collect();
            fit_power_law(&pts).unwrap().law.beta
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let sd = (estimates.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt();
    assert!(
        (mean - beta).abs() < 3.0 * sd / (estimates.len() as f64).sqrt(),
        "mean {mean}, sd {sd}"
    );
}

fn noisy_sweep(seed: u64) -> Vec<RunRecord> {
    let spec = SurfaceSpec {
        noise_sigma: 2e-3,
        rng_seed: seed,
        ..SurfaceSpec::default()
    };
    let grid = Grid {
        n_params: vec![350e6],
        token_horizons: vec![25e9, 50e9, 100e9, 200e9, 400e9],
        lr_multipliers: vec![0.25, 0.5, 0.707, 1.0, 1.414, 2.0, 4.0],
        ..Grid::default()
    };
    generate(&spec, &grid).unwrap()
}

#[test]
fn full_keep_reproduces_point_estimates() {
    let records = noisy_sweep(4);
    for scope in [SubsampleScope::Global, SubsampleScope::PerCell] {
        let options = BootstrapOptions {
            keep_fraction: 1.0,
            n_resamples: 20,
            scope,
            ..BootstrapOptions::default()
        };
        for target in [BootstrapTarget::LrStarPerHorizon, BootstrapTarget::PowerLawConstants] {
            for s in bootstrap(&records, target, &options).unwrap() {
                assert_eq!(s.std, 0.0, "{}", s.quantity);
                assert_eq!(s.mean, s.point_estimate, "{}", s.quantity);
                assert_eq!(s.n_failed, 0);
            }
        }
    }
}

#[test]
fn noiseless_bootstrap_has_no_spread() {
    let spec = SurfaceSpec::default();
    let grid = Grid {
        n_params: vec![350e6],
        token_horizons: vec![25e9, 50e9, 100e9],
        lr_multipliers: vec![0.25, 0.5, 0.707, 1.0, 1.414, 2.0, 4.0],
        ..Grid::default()
    };
    let records = generate(&spec, &grid).unwrap();
    let options = BootstrapOptions {
        n_resamples: 100,
        ..BootstrapOptions::default()
    };
    for s in bootstrap(&records, BootstrapTarget::LrStarPerHorizon, &options).unwrap() {
        assert!(s.std < 1e-6 * s.mean, "{}: {}", s.quantity, s.std);
        assert_eq!(s.n_failed, 0);
    }
}

#[test]
fn bootstrap_counts_failures_and_is_reproducible() {
    let records = noisy_sweep(9);
    let options = BootstrapOptions {
        scope: SubsampleScope::Global,
        keep_fraction: 0.3,
        n_resamples: 200,
        rng_seed: 42,
        ..BootstrapOptions::default()
    };
    let a = bootstrap(&records, BootstrapTarget::LrStarPerHorizon, &options).unwrap();
    let b = bootstrap(
        &records,
        BootstrapTarget::LrStarPerHorizon,
        &BootstrapOptions {
            parallel: true,
            ..options.clone()
        },
    )
    .unwrap();
    assert_eq!(a, b);
    assert!(a.iter().any(|s| s.n_failed > 0));
    assert!(a.iter().all(|s| s.n_failed < s.n_resamples && s.std >= 0.0));
    let other_seed = bootstrap(
        &records,
        BootstrapTarget::LrStarPerHorizon,
        &BootstrapOptions {
            rng_seed: 43,
            ..options
        },
    )
    .unwrap();
    assert_ne!(a, other_seed);
}

#[test]
fn resample_means_settle_as_resamples_grow() {
    let records = noisy_sweep(12);
    let small = BootstrapOptions {
        n_resamples: 250,
        rng_seed: 3,
        parallel: true,
        ..BootstrapOptions::default()
    };
    let large = BootstrapOptions {
        n_resamples: 500,
        ..small.clone()
    };
    let a = bootstrap(&records, BootstrapTarget::LrStarPerHorizon, &small).unwrap();
    let b = bootstrap(&records, BootstrapTarget::LrStarPerHorizon, &large).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(
            (x.mean - y.mean).abs() < 3.0 * y.std / (250f64).sqrt(),
            "{}",
            x.quantity
        );
    }
}

#[test]
fn power_law_constants_per_family() {
    let records = noisy_sweep(5);
    let summaries = bootstrap(
        &records,
        BootstrapTarget::PowerLawConstants,
        &BootstrapOptions {
            n_resamples: 100,
            ..BootstrapOptions::default()
        },
    )
    .unwrap();
    let names: Vec<&str> = summaries.iter().map(|s| s.quantity.as_str()).collect();
    assert_eq!(names, ["B[350m]", "beta[350m]", "r_squared[350m]"]);
    let beta = &summaries[1];
    assert!((beta.mean - 0.32).abs() < 4.0 * beta.std + 0.02);
}

#[test]
fn diverged_runs_never_reach_fits() {
    let spec = SurfaceSpec {
        divergence_lr_multiple: Some(2.0),
        ..SurfaceSpec::default()
    };
    let records = generate(&spec, &Grid::default()).unwrap();
    let reparsed = parse_jsonl(&to_jsonl(&records)).unwrap();
    assert_eq!(reparsed.report.diverged, 24);
    let groups = group(&reparsed.records);
    for g in &groups {
        let optimum = spec.optimum(g.key.n_params, g.key.token_horizon, g.key.batch_size_tokens);
        assert_eq!(g.points.len(), 3);
        assert!(g.points.iter().all(|p| p.lr < 1.5 * optimum));
    }
    let laws = family_power_laws(&successful(fit_cells(&reparsed.records, true)));
    for law in laws {
        assert!((law.fit.law.beta - 0.32).abs() < 1e-9);
    }
}
