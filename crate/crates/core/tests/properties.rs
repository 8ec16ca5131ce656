use std::collections::BTreeMap;

use lrscale::curve_fit::fit_quadratic_points;
use lrscale::data::{group, parse_jsonl, to_jsonl, Parametrization, RunRecord, RunStatus};
use lrscale::scaling::{fit_parallel_slopes, fit_power_law, fit_power_law_with_ref, HorizonPoint, JointLaw, LrLaw};
use lrscale::transfer::rule_of_thumb;
use proptest::prelude::*;

fn record() -> impl Strategy<Value = RunRecord> {
    (
        prop::sample::select(vec!["50m", "125m", "350m", "gpt 1.3b, v2"]),
        1e6f64..1e11,
        prop::option::of(1u32..200),
        prop::sample::select(vec![262_144.0, 524_288.0, 1_048_576.0]),
        1e8f64..1e13,
        1e-6f64..1e-1,
        prop::option::of(0.5f64..10.0),
        0u64..5,
        any::<bool>(),
        any::<bool>(),
        prop::option::of(1e8f64..1e12),
        prop::option::of(prop::sample::select(vec!["gpt3", "llama"])),
    )
        .prop_map(
            |(name, n, layers, bs, d, lr, loss, seed, diverged, mup, unique, arch)| {
                let status = if diverged {
                    RunStatus::Diverged
                } else {
                    RunStatus::Completed
                };
                RunRecord {
                    model_name: name.to_string(),
                    n_params: n,
                    n_layers: layers,
                    batch_size_tokens: bs,
                    token_horizon: d,
                    max_lr: lr,
                    final_val_loss: if diverged { loss } else { Some(loss.unwrap_or(3.0)) },
                    seed,
                    status,
                    parametrization: if mup {
                        Parametrization::MuP
                    } else {
                        Parametrization::Standard
                    },
                    unique_tokens: unique,
                    architecture: arch.map(str::to_string),
                }
            },
        )
}

/// Small grid so that shuffles produce replicates and shared groups.
fn sweep_record() -> impl Strategy<Value = RunRecord> {
    (
        prop::sample::select(vec![(350e6, "350m"), (760e6, "760m")]),
        prop::sample::select(vec![25e9, 50e9, 100e9]),
        prop::sample::select(vec![1e-4, 2e-4, 4e-4, 8e-4]),
        2.5f64..3.5,
        0u64..3,
        prop::bool::weighted(0.1),
    )
        .prop_map(|((n, name), d, lr, loss, seed, diverged)| RunRecord {
            model_name: name.to_string(),
            n_params: n,
            n_layers: None,
            batch_size_tokens: 524_288.0,
            token_horizon: d,
            max_lr: lr,
            final_val_loss: if diverged { None } else { Some(loss) },
            seed,
            status: if diverged {
                RunStatus::Diverged
            } else {
                RunStatus::Completed
            },
            parametrization: Parametrization::Standard,
            unique_tokens: None,
            architecture: None,
        })
}

proptest! {
    #[test]
    fn jsonl_serialization_round_trips(records in prop::collection::vec(record(), 0..20)) {
        let parsed = parse_jsonl(&to_jsonl(&records)).unwrap();
        prop_assert!(parsed.report.rejected.is_empty());
        prop_assert_eq!(parsed.records, records);
    }

    #[test]
    fn grouping_ignores_input_order(
        (records, shuffled) in prop::collection::vec(sweep_record(), 1..40)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    ) {
        let a = group(&records);
        let b = group(&shuffled);
        prop_assert_eq!(&a, &b);
        for g in &a {
            let members = records.iter().filter(|r| r.is_completed() && lrscale::GroupKey::of(r) == g.key).count();
            prop_assert_eq!(g.points.iter().map(|p| p.replicates).sum::<usize>(), members);
        }
    }

    #[test]
    fn lr_star_ignores_affine_loss_changes(
        log_opt in -4.5f64..-2.0,
        a in 0.01f64..1.0,
        scale in 0.1f64..10.0,
        offset in -2.0f64..2.0,
        wiggle in prop::collection::vec(-1e-3f64..1e-3, 6),
    ) {
        let pts: Vec<(f64, f64)> = wiggle
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let x = log_opt - 0.75 + 0.3 * i as f64;
                (10f64.powf(x), 3.0 + a * (x - log_opt).powi(2) + w)
            })
            .collect();
        let moved: Vec<(f64, f64)> = pts.iter().map(|&(lr, l)| (lr, scale * l + offset)).collect();
        let base = fit_quadratic_points(&pts).unwrap();
        let other = fit_quadratic_points(&moved).unwrap();
        prop_assert!((other.lr_star / base.lr_star - 1.0).abs() < 1e-9);
        prop_assert!((other.r_squared - base.r_squared).abs() < 1e-9);
    }

    #[test]
    fn horizon_exponent_ignores_units(
        beta in 0.0f64..1.2,
        b in 1e-5f64..1e-2,
        k in 1e-6f64..1e6,
        noise in prop::collection::vec(-0.05f64..0.05, 5),
    ) {
        let pts: Vec<HorizonPoint> = noise
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let d = 25e9 * 2f64.powi(i as i32);
                HorizonPoint { token_horizon: d, lr_star: b * (d / 1e9).powf(-beta) * 10f64.powf(*e) }
            })
            .collect();
        let scaled: Vec<HorizonPoint> = pts
            .iter()
            .map(|p| HorizonPoint { token_horizon: p.token_horizon * k, lr_star: p.lr_star })
            .collect();
        let base = fit_power_law(&pts).unwrap();
        let moved = fit_power_law(&scaled).unwrap();
        prop_assert!((moved.law.beta - base.law.beta).abs() <= 1e-9);
        prop_assert!((moved.law.b / (base.law.b * k.powf(base.law.beta)) - 1.0).abs() < 1e-8);
        let same_units = fit_power_law_with_ref(&scaled, 1e9 * k).unwrap();
        prop_assert!((same_units.law.b / base.law.b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rule_of_thumb_composes(
        lr in 1e-5f64..1e-2,
        d1 in 1e9f64..1e13,
        d2 in 1e9f64..1e13,
        d3 in 1e9f64..1e13,
        beta in 0.0f64..1.0,
    ) {
        let two = rule_of_thumb(rule_of_thumb(lr, d1, d2, beta).unwrap(), d2, d3, beta).unwrap();
        let one = rule_of_thumb(lr, d1, d3, beta).unwrap();
        prop_assert!((two / one - 1.0).abs() < 1e-12);
        prop_assert_eq!(rule_of_thumb(lr, d1, d1, beta).unwrap(), lr);
    }

    #[test]
    fn joint_predictions_are_positive_and_decreasing(
        c in 1e-5f64..1e-1,
        alpha in 0.01f64..1.0,
        beta in 0.01f64..1.0,
        n in 1e6f64..1e12,
        d in 1e8f64..1e14,
        step in 1.01f64..10.0,
    ) {
        let law = JointLaw::new(c, alpha, beta);
        let base = law.predict_lr(d, Some(n)).unwrap();
        prop_assert!(base > 0.0);
        prop_assert!(law.predict_lr(d * step, Some(n)).unwrap() < base);
        prop_assert!(law.predict_lr(d, Some(n * step)).unwrap() < base);
    }

    #[test]
    fn zero_alpha_reduces_to_horizon_law(c in 1e-5f64..1e-1, beta in 0.0f64..1.0, n in 1e6f64..1e12, d in 1e8f64..1e14) {
        let joint = JointLaw::new(c, 0.0, beta);
        let horizon = joint.at_model_size(n);
        prop_assert_eq!(horizon.b, c);
        let a = joint.predict_lr(d, Some(n)).unwrap();
        let b = horizon.predict_lr(d, None).unwrap();
        prop_assert!((a / b - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_group_parallel_fit_matches_power_law(
        beta in 0.0f64..1.0,
        noise in prop::collection::vec(-0.05f64..0.05, 2..8),
    ) {
        let pts: Vec<(f64, f64)> = noise
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let d = 1e10 * 1.7f64.powi(i as i32);
                (d, 1e-3 * (d / 1e9).powf(-beta) * 10f64.powf(*e))
            })
            .collect();
        let groups = BTreeMap::from([("only".to_string(), pts.clone())]);
        let parallel = fit_parallel_slopes(&groups, 1e9, 0.1).unwrap();
        let horizon = fit_power_law(
            &pts.iter().map(|&(d, lr)| HorizonPoint { token_horizon: d, lr_star: lr }).collect::<Vec<_>>(),
        )
        .unwrap();
        prop_assert!((parallel.shared_slope + horizon.law.beta).abs() < 1e-12);
        prop_assert!((10f64.powf(parallel.groups[0].intercept) / horizon.law.b - 1.0).abs() < 1e-12);
        prop_assert!(parallel.parallel);
    }
}
