use proptest::prelude::*;
use rand::Rng;

use super::report::{auc_or_row, error_rate_rows, to_csv};
use super::*;
use crate::metrics::MetricKind;
use crate::seed;

fn group(id: &str, f: &[f64], c: &[bool]) -> TemplateGroup {
    TemplateGroup::new(id, f.iter().copied().zip(c.iter().copied()).collect())
}

/// Pairwise count over every (incorrect, correct) pair within each template.
fn brute_auc(groups: &[TemplateGroup]) -> Option<f64> {
    let (mut num, mut pairs) = (0u128, 0u128);
    for g in groups {
        for &(f0, c0) in &g.records {
            for &(f1, c1) in &g.records {
                if !c0 && c1 {
                    pairs += 1;
                    num += if f0 > f1 {
                        2
                    } else if f0 == f1 {
                        1
                    } else {
                        0
                    };
                }
            }
        }
    }
    (pairs > 0).then(|| num as f64 / (2 * pairs) as f64)
}

fn grouped_data() -> impl Strategy<Value = Vec<TemplateGroup>> {
    prop::collection::vec(prop::collection::vec((0i32..8, any::<bool>()), 0..20), 1..=5).prop_map(|gs| {
        gs.into_iter()
            .enumerate()
            .map(|(j, rs)| TemplateGroup::new(format!("t{j}"), rs.into_iter().map(|(f, c)| (f as f64, c)).collect()))
            .collect()
    })
}

#[test]
fn auc_examples() {
    let a = micro_auc(&[group("a", &[1.0, 2.0, 3.0], &[true, false, true])]).unwrap();
    assert_eq!(a.auc_micro, Some(0.5));
    let sep = micro_auc(&[group("a", &[5.0, 6.0, 1.0, 2.0], &[false, false, true, true])]).unwrap();
    assert_eq!(sep.auc_micro, Some(1.0));
    // Pair counts 1 and 3 with AUCs 1.0 and 0.5.
    let two = micro_auc(&[
        group("a", &[2.0, 1.0], &[false, true]),
        group("b", &[2.0, 1.0, 3.0, 2.0], &[false, true, true, true]),
    ])
    .unwrap();
    assert_eq!(two.per_template["a"].auc, 1.0);
    assert_eq!(two.per_template["b"].auc, 0.5);
    assert_eq!(two.auc_micro, Some(0.625));
}

#[test]
fn auc_ties_count_half() {
    let r = micro_auc(&[group("b", &[2.0, 1.0, 1.0, 1.0], &[false, false, false, true])]).unwrap();
    // Incorrect {2, 1, 1} against correct {1}: 1 + 0.5 + 0.5 over 3 pairs.
    assert_eq!(r.per_template["b"].auc, 2.0 / 3.0);
}

#[test]
fn auc_all_degenerate_is_absent_with_reason() {
    let r = micro_auc(&[group("a", &[1.0, 2.0], &[true, true]), group("b", &[1.0], &[false])]).unwrap();
    assert_eq!(r.auc_micro, None);
    assert!(r.reason.is_some());
    assert_eq!(r.excluded, vec!["a".to_string(), "b".to_string()]);
}

#[test]
fn auc_rejects_non_finite() {
    assert!(matches!(
        micro_auc(&[group("a", &[f64::NAN, 1.0], &[true, false])]),
        Err(AnalyticsError::NonFinite(_))
    ));
}

proptest! {
    #[test]
    fn micro_auc_equals_brute_force(groups in grouped_data()) {
        prop_assert_eq!(micro_auc(&groups).unwrap().auc_micro, brute_auc(&groups));
    }

    #[test]
    fn auc_reverses_under_negation(groups in grouped_data()) {
        let a = micro_auc(&groups).unwrap();
        let neg: Vec<TemplateGroup> = groups.iter().map(|g| TemplateGroup::new(g.template_id.clone(), g.records.iter().map(|&(f, c)| (-f, c)).collect())).collect();
        let b = micro_auc(&neg).unwrap();
        if let (Some(x), Some(y)) = (a.auc_micro, b.auc_micro) {
            prop_assert!((x + y - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(a.auc_micro, b.auc_micro);
        }
    }

    #[test]
    fn auc_invariant_under_increasing_transform(groups in grouped_data()) {
        let t: Vec<TemplateGroup> = groups.iter().map(|g| TemplateGroup::new(g.template_id.clone(), g.records.iter().map(|&(f, c)| ((f / 3.0).exp() + f.powi(3), c)).collect())).collect();
        prop_assert_eq!(micro_auc(&groups).unwrap(), micro_auc(&t).unwrap());
    }

    #[test]
    fn quantile_bins_near_equal(sizes in prop::collection::vec(1usize..90, 1..6), n_bins in 1usize..25) {
        let groups: Vec<TemplateGroup> = sizes.iter().enumerate().map(|(j, &n)| {
            TemplateGroup::new(format!("t{j}"), (0..n).map(|i| (((i * 7919) % 101) as f64, i % 3 == 0)).collect())
        }).collect();
        let curve = quantile_curve(&groups, n_bins).unwrap();
        prop_assert_eq!(curve.bins.len(), n_bins);
        prop_assert!((0.0..=1.0).contains(&curve.drs));
        for &n in &sizes {
            let m = n_bins.min(n);
            let s = super::quantile::contiguous_sizes(n, m);
            prop_assert_eq!(s.iter().sum::<usize>(), n);
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn part_sizes_are_ceil_then_floor(n in 0usize..100_000, k in 1usize..12) {
        let s = part_sizes(n, k);
        prop_assert_eq!(s.iter().sum::<usize>(), n);
        for (i, &x) in s.iter().enumerate() {
            prop_assert_eq!(x, if i < n % k { n.div_ceil(k) } else { n / k });
        }
    }

    #[test]
    fn mixture_within_one_of_ratio(total in 0usize..5000, w in prop::collection::vec(0.0f64..10.0, 1..6)) {
        prop_assume!(w.iter().sum::<f64>() > 1e-6);
        let counts = mixture_counts(total, &w).unwrap();
        let sum: f64 = w.iter().sum();
        prop_assert_eq!(counts.iter().sum::<usize>(), total);
        for (c, wi) in counts.iter().zip(&w) {
            prop_assert!((*c as f64 - wi / sum * total as f64).abs() < 1.0 + 1e-9);
        }
    }
}

#[test]
fn exclusion_boundary_is_strictly_above_ninety_nine_percent() {
    let mk = |id: &str, correct: usize| {
        TemplateGroup::new(id, (0..1000).map(|i| (i as f64 / 1000.0, i < correct)).collect())
    };
    let other = TemplateGroup::new(
        "mixed",
        (0..400).map(|i| ((i % 17) as f64, (i * 7) % 5 < 3 + usize::from(i % 17 < 8))).collect(),
    );
    let fit = fit_odds_ratio(&[mk("t991", 991), mk("t990", 990), other.clone()], &OddsRatioOptions::default()).unwrap();
    assert_eq!(fit.included_templates, vec!["t990".to_string(), "mixed".to_string()]);
    assert_eq!(fit.excluded_templates.len(), 1);
    assert_eq!(fit.excluded_templates[0].template_id, "t991");
    // Same rule on the other outcome.
    let fit = fit_odds_ratio(&[mk("t9", 9), mk("t10", 10), other], &OddsRatioOptions::default()).unwrap();
    assert_eq!(fit.excluded_templates[0].template_id, "t9");
    assert!(fit.included_templates.contains(&"t10".to_string()));
}

#[test]
fn all_excluded_is_an_error() {
    let g = TemplateGroup::new("t", (0..100).map(|i| (i as f64, true)).collect());
    assert!(matches!(fit_odds_ratio(&[g], &OddsRatioOptions::default()), Err(AnalyticsError::NoIncludedTemplates(_))));
}

/// A binary predictor has a closed-form logistic MLE: the slope is the log
/// odds ratio of the 2x2 table. Global z-scoring multiplies it by the SD.
#[test]
fn single_template_matches_two_by_two_table() {
    let (a, b, c, d) = (30usize, 70usize, 55usize, 45usize); // x=0: correct, incorrect; x=1: correct, incorrect
    let mut records = Vec::new();
    records.extend((0..a).map(|_| (0.0, true)));
    records.extend((0..b).map(|_| (0.0, false)));
    records.extend((0..c).map(|_| (1.0, true)));
    records.extend((0..d).map(|_| (1.0, false)));
    let xs: Vec<f64> = records.iter().map(|r| r.0).collect();
    let (_, _, sd) = mean_std(&xs);
    let log_or = ((c as f64 / d as f64) / (a as f64 / b as f64)).ln();
    let fit = fit_odds_ratio(&[TemplateGroup::new("t", records)], &OddsRatioOptions::default()).unwrap();
    assert!(fit.fixed_effects_only);
    assert!((fit.beta1 - log_or * sd).abs() < 1e-4, "{} vs {}", fit.beta1, log_or * sd);
    // Wald SE of a log odds ratio: sqrt(1/a + 1/b + 1/c + 1/d).
    let se = (1.0 / a as f64 + 1.0 / b as f64 + 1.0 / c as f64 + 1.0 / d as f64).sqrt();
    assert!((fit.se_beta1 - se * sd).abs() < 1e-4);
    assert!(fit.ci95.0 <= fit.or_point && fit.or_point <= fit.ci95.1);
}

fn simulate(seed: u64, templates: usize, per: usize, beta0: f64, beta1: f64, sigma: f64) -> Vec<TemplateGroup> {
    let mut rng = seed::rng(seed, &["glmm-sim"]);
    (0..templates)
        .map(|j| {
            let u: f64 = sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
            let records = (0..per)
                .map(|_| {
                    let x: f64 = rng.sample(rand_distr::StandardNormal);
                    let p = 1.0 / (1.0 + (-(beta0 + beta1 * x + u)).exp());
                    (x, rng.random::<f64>() < p)
                })
                .collect();
            TemplateGroup::new(format!("t{j:02}"), records)
        })
        .collect()
}

#[test]
fn glmm_recovers_parameters_on_one_large_sample() {
    let groups = simulate(7, 40, 250, 0.3, -1.0, 0.8);
    let fit = fit_odds_ratio(&groups, &OddsRatioOptions::default()).unwrap();
    assert!(!fit.fixed_effects_only);
    // The predictor is already standard normal, so z-scoring barely moves the slope.
    assert!((fit.beta1 + 1.0).abs() < 0.1, "beta1 {}", fit.beta1);
    assert!((fit.random_intercept_variance.sqrt() - 0.8).abs() < 0.25, "sigma {}", fit.random_intercept_variance.sqrt());
    assert!(fit.ci95.0 <= fit.or_point && fit.or_point <= fit.ci95.1);
}

#[test]
fn glmm_without_template_effect_is_close_to_pooled_logistic() {
    let groups = simulate(11, 10, 200, -0.2, 0.7, 0.0);
    let fit = fit_odds_ratio(&groups, &OddsRatioOptions::default()).unwrap();
    let z: Vec<f64> = groups.iter().flat_map(|g| g.records.iter().map(|r| r.0)).collect();
    let c: Vec<bool> = groups.iter().flat_map(|g| g.records.iter().map(|r| r.1)).collect();
    let (m, _, sd) = mean_std(&z);
    let zs: Vec<f64> = z.iter().map(|x| (x - m) / sd).collect();
    let plain = fit_logistic(&zs, &c).unwrap();
    assert!((fit.beta1 - plain.beta1).abs() < 0.05, "{} vs {}", fit.beta1, plain.beta1);
    assert!(fit.random_intercept_variance < 0.1);
}

#[test]
fn per_template_scaling_is_selectable() {
    let groups = simulate(3, 6, 150, 0.0, -1.0, 0.5);
    let opts = OddsRatioOptions {
        scaling: Scaling::PerTemplate,
        ..Default::default()
    };
    let fit = fit_odds_ratio(&groups, &opts).unwrap();
    assert_eq!(fit.scaling, Scaling::PerTemplate);
    assert!(fit.beta1 < 0.0);
}

#[test]
fn separation_is_reported() {
    let groups = vec![
        TemplateGroup::new("a", (0..50).map(|i| (i as f64, i >= 25)).collect()),
        TemplateGroup::new("b", (0..50).map(|i| (i as f64, i >= 25)).collect()),
    ];
    assert!(matches!(fit_odds_ratio(&groups, &OddsRatioOptions::default()), Err(AnalyticsError::Separation(_))));
}

#[test]
fn constant_metric_is_reported() {
    let groups = vec![TemplateGroup::new("a", (0..50).map(|i| (1.0, i % 2 == 0)).collect())];
    assert_eq!(fit_odds_ratio(&groups, &OddsRatioOptions::default()).unwrap_err(), AnalyticsError::ConstantMetric);
}

#[test]
fn quantile_saturation() {
    let all = |c: bool| -> Vec<TemplateGroup> {
        (0..4).map(|j| TemplateGroup::new(format!("t{j}"), (0..57).map(|i| ((i * 31 % 57) as f64, c)).collect())).collect()
    };
    let up = quantile_curve(&all(true), DEFAULT_BINS).unwrap();
    assert_eq!(up.drs, 1.0);
    assert!(up.bins.iter().all(|b| b.accuracy == 1.0));
    let down = quantile_curve(&all(false), DEFAULT_BINS).unwrap();
    assert_eq!(down.drs, 0.0);
}

#[test]
fn quantile_bins_follow_difficulty() {
    // Correct exactly when the metric is below 30 of 60.
    let g = TemplateGroup::new("t", (0..60).map(|i| (i as f64, i < 30)).collect());
    let curve = quantile_curve(&[g], 20).unwrap();
    let acc: Vec<f64> = curve.bins.iter().map(|b| b.accuracy).collect();
    assert_eq!(&acc[..10], &[1.0; 10]);
    assert_eq!(&acc[10..], &[0.0; 10]);
    assert_eq!(curve.drs, 0.5);
    assert_eq!(curve.bins[0].f_min, 0.0);
    assert_eq!(curve.bins[19].f_max, 59.0);
    assert!(curve.bins.iter().all(|b| b.count == 3));
}

#[test]
fn small_template_is_flagged_and_stretched() {
    let small = TemplateGroup::new("small", (0..5).map(|i| (i as f64, i < 2)).collect());
    let big = TemplateGroup::new("big", (0..40).map(|i| (i as f64, true)).collect());
    let curve = quantile_curve(&[small, big], 20).unwrap();
    assert_eq!(curve.flagged, vec!["small".to_string()]);
    // Five bins over twenty: global bins 0..8 read small bins 0 and 1 (correct).
    assert_eq!(curve.bins[7].accuracy, 1.0);
    assert_eq!(curve.bins[8].accuracy, 0.5);
    assert_eq!(curve.drs, (8.0 * 1.0 + 12.0 * 0.5) / 20.0);
}

#[test]
fn quantile_reports_spread_across_templates() {
    let a = TemplateGroup::new("a", (0..20).map(|i| (i as f64, true)).collect());
    let b = TemplateGroup::new("b", (0..20).map(|i| (i as f64, false)).collect());
    let curve = quantile_curve(&[a, b], 20).unwrap();
    let bin = &curve.bins[0];
    assert_eq!(bin.accuracy, 0.5);
    assert!((bin.std - 0.5f64.sqrt()).abs() < 1e-15);
    assert!((bin.stderr - 0.5).abs() < 1e-15);
}

#[test]
fn quantile_errors() {
    assert_eq!(quantile_curve(&[], 20).unwrap_err(), AnalyticsError::Empty);
    assert!(matches!(quantile_curve(&[TemplateGroup::new("e", vec![])], 20), Err(AnalyticsError::EmptyTemplate(_))));
}

#[test]
fn bootstrap_degenerate_and_deterministic() {
    let all = vec![TemplateGroup::new("a", vec![(0.0, true); 5]), TemplateGroup::new("b", vec![(0.0, true); 3])];
    let b = bootstrap_accuracy(&all, DEFAULT_RESAMPLES, 4).unwrap();
    assert_eq!(b.values.len(), 1000);
    assert!(b.values.iter().all(|&v| v == 1.0));
    assert_eq!(b.histogram.last().unwrap().count, 1000);

    let mixed = vec![
        TemplateGroup::new("a", vec![(0.0, true), (1.0, false), (2.0, false)]),
        TemplateGroup::new("b", vec![(0.0, true), (1.0, false)]),
    ];
    let x = bootstrap_accuracy(&mixed, DEFAULT_RESAMPLES, 9).unwrap();
    let y = bootstrap_accuracy(&mixed, DEFAULT_RESAMPLES, 9).unwrap();
    assert_eq!(x.values, y.values);
    // Input order does not matter.
    let rev: Vec<_> = mixed.iter().rev().cloned().collect();
    assert_eq!(bootstrap_accuracy(&rev, DEFAULT_RESAMPLES, 9).unwrap().values, x.values);
    assert_ne!(bootstrap_accuracy(&mixed, DEFAULT_RESAMPLES, 10).unwrap().values, x.values);
}

#[test]
fn bootstrap_binomial_frequencies() {
    let g = vec![TemplateGroup::new("a", vec![(0.0, true), (1.0, false)])];
    let b = bootstrap_accuracy(&g, 1000, 1).unwrap();
    assert!(b.values.iter().all(|&v| v == 0.0 || v == 1.0));
    let ones = b.values.iter().filter(|&&v| v == 1.0).count() as f64;
    // Binomial(1000, 0.5): sd = sqrt(250).
    assert!((ones - 500.0).abs() <= 5.0 * 250f64.sqrt(), "{ones}");
}

#[test]
fn bootstrap_mean_converges_to_mean_template_accuracy() {
    let groups: Vec<TemplateGroup> = (0..12)
        .map(|j| TemplateGroup::new(format!("t{j}"), (0..(5 + j)).map(|i| (0.0, (i * (j + 3)) % 7 < 3)).collect()))
        .collect();
    let target = groups.iter().map(|g| g.accuracy().unwrap()).sum::<f64>() / groups.len() as f64;
    let b = bootstrap_accuracy(&groups, 1000, 2).unwrap();
    assert!(b.values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!((b.mean - target).abs() <= 3.0 * b.std / 1000f64.sqrt(), "{} vs {target}", b.mean);
    assert_eq!(b.histogram.iter().map(|h| h.count).sum::<usize>(), 1000);
}

#[test]
fn bootstrap_errors() {
    assert!(matches!(bootstrap_accuracy(&[TemplateGroup::new("e", vec![])], 10, 0), Err(AnalyticsError::EmptyTemplate(_))));
    assert_eq!(bootstrap_accuracy(&[], 10, 0).unwrap_err(), AnalyticsError::Empty);
}

fn candidate(template: &str, key: &str, md_h: f64, correct: bool) -> SplitCandidate {
    SplitCandidate {
        template_id: template.into(),
        key: key.into(),
        md_h,
        correct,
        prompt: format!("problem {key}"),
        reasoning: format!("trace {key}"),
        answer: "4".into(),
    }
}

#[test]
fn nine_records_split_in_rank_order() {
    let cands: Vec<_> = (1..=9).rev().map(|i| candidate("t", &format!("k{i}"), i as f64, false)).collect();
    let s = export_difficulty_splits(&cands, &SplitOptions::default()).unwrap();
    let parts: Vec<Vec<f64>> = s.parts.iter().map(|p| p.rows.iter().map(|r| r.md_h).collect()).collect();
    assert_eq!(parts, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]);
    let labels: Vec<&str> = s.parts.iter().map(|p| p.label.as_str()).collect();
    assert_eq!(labels, ["Q_low", "Q_mid", "Q_high"]);
    assert_eq!(s.parts[0].rows[0].completion, "trace k1\n#### 4");
}

#[test]
fn remainder_goes_to_lower_parts() {
    let cands: Vec<_> = (0..11).map(|i| candidate("t", &format!("k{i:02}"), i as f64, false)).collect();
    let s = export_difficulty_splits(&cands, &SplitOptions::default()).unwrap();
    let sizes: Vec<usize> = s.parts.iter().map(|p| p.rows.len()).collect();
    assert_eq!(sizes, [4, 4, 3]);
}

#[test]
fn large_pool_splits_into_equal_thirds() {
    let cands: Vec<_> = (0..8694).map(|i| candidate(&format!("t{:03}", i % 100), &format!("k{i}"), (i * 37 % 8694) as f64, false)).collect();
    let opts = SplitOptions {
        cap_per_template: None,
        ..Default::default()
    };
    let s = export_difficulty_splits(&cands, &opts).unwrap();
    assert_eq!(s.pool_size, 8694);
    assert!(s.parts.iter().all(|p| p.rows.len() == 2898));
}

#[test]
fn filter_and_cap_apply_per_template() {
    let mut cands = Vec::new();
    for i in 0..150 {
        cands.push(candidate("a", &format!("a{i:03}"), i as f64, i % 2 == 0));
    }
    for i in 0..30 {
        cands.push(candidate("b", &format!("b{i:03}"), i as f64 + 0.5, false));
    }
    let opts = SplitOptions {
        cap_per_template: Some(50),
        filter_incorrect: true,
        seed: 5,
        ..Default::default()
    };
    let s = export_difficulty_splits(&cands, &opts).unwrap();
    let rows: Vec<&SplitRow> = s.parts.iter().flat_map(|p| &p.rows).collect();
    assert_eq!(rows.iter().filter(|r| r.template_id == "a").count(), 50);
    assert_eq!(rows.iter().filter(|r| r.template_id == "b").count(), 30);
    assert!(rows.windows(2).all(|w| w[0].md_h <= w[1].md_h));
    // Only incorrect records from "a" (odd index) survive.
    assert!(rows.iter().filter(|r| r.template_id == "a").all(|r| (r.md_h as usize) % 2 == 1));
    assert_eq!(export_difficulty_splits(&cands, &opts).unwrap(), s);
    let other = SplitOptions { seed: 6, ..opts };
    assert_ne!(export_difficulty_splits(&cands, &other).unwrap(), s);
}

#[test]
fn empty_after_filter() {
    let cands = vec![candidate("t", "k", 1.0, true)];
    let opts = SplitOptions {
        filter_incorrect: true,
        ..Default::default()
    };
    assert_eq!(export_difficulty_splits(&cands, &opts).unwrap_err(), AnalyticsError::EmptyAfterFilter);
    assert_eq!(export_difficulty_splits(&[], &SplitOptions::default()).unwrap_err(), AnalyticsError::EmptyAfterFilter);
}

#[test]
fn mixture_twenty_thirty_fifty() {
    assert_eq!(mixture_counts(2898, &[0.2, 0.3, 0.5]).unwrap(), vec![580, 869, 1449]);
    assert_eq!(mixture_counts(10, &[1.0, 1.0, 1.0]).unwrap(), vec![4, 3, 3]);
    let cands: Vec<_> = (0..300).map(|i| candidate("t", &format!("k{i:03}"), i as f64, false)).collect();
    let opts = SplitOptions {
        cap_per_template: None,
        ..Default::default()
    };
    let s = export_difficulty_splits(&cands, &opts).unwrap();
    let mix = select_mixture(&s, &[20.0, 30.0, 50.0], None, 1).unwrap();
    assert_eq!(mix.len(), 100);
    let per_part = |lo: f64, hi: f64| mix.iter().filter(|r| r.md_h >= lo && r.md_h < hi).count();
    assert_eq!((per_part(0.0, 100.0), per_part(100.0, 200.0), per_part(200.0, 300.0)), (20, 30, 50));
    assert_eq!(select_mixture(&s, &[20.0, 30.0, 50.0], None, 1).unwrap(), mix);
    assert!(select_mixture(&s, &[0.0, 0.0, 1.0], Some(101), 1).is_err());
}

#[test]
fn report_rows_serialize() {
    let groups = simulate(2, 5, 100, 0.0, -1.0, 0.3);
    let row = auc_or_row("search", MetricKind::MdH, &groups, &OddsRatioOptions::default());
    assert_eq!(row.metric, "md_h");
    assert_eq!(row.span, "output");
    assert!(row.auc_micro.is_some() && row.or_point.is_some(), "{row:?}");
    let csv = to_csv(&[row]).unwrap();
    assert!(csv.starts_with("corpus,metric,span,auc_micro,or_point,ci_lo,ci_hi"));

    let bad = auc_or_row("search", MetricKind::LdMin, &[TemplateGroup::new("t", vec![(1.0, true)])], &OddsRatioOptions::default());
    assert_eq!(bad.or_point, None);
    assert!(!bad.note.is_empty());
    assert!(to_csv(&[bad]).unwrap().lines().nth(1).unwrap().contains(",,"));

    let rows = error_rate_rows(&[group("a", &[0.0, 0.0], &[false, false])], &[group("a", &[0.0, 0.0], &[true, false]), group("b", &[0.0], &[true])]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].search_error_rate, Some(1.0));
    assert_eq!(rows[0].baseline_error_rate, Some(0.5));
    assert_eq!(rows[1].search_n, 0);
}
