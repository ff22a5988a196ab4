use std::collections::BTreeSet;

use super::*;
use crate::gateway::{extract_answer, grade, Gateway, GenerationParams, Query, SyntheticConfig, SyntheticModel};
use crate::template::{parse_template, sample_variation, SymbolicTemplate, Variation};

const LINE: &str = r#"
id = "line"
problem = "Add {x} and {y}."
answer = "x + y"
reasoning = "{x} + {y} = <<x + y>>"
grading = "exact_integer"
cot_prompt_id = "gsm_symbolic"

[[slots]]
name = "x"
kind = "integer"
domain = { lo = 0, hi = 99, step = 1 }

[[slots]]
name = "y"
kind = "integer"
domain = [7]
"#;

fn profile_of(m: &SyntheticModel, t: &SymbolicTemplate, v: &Variation) -> ResponseProfile {
    let q = Query { prompt: &v.rendered_problem, template: t, variation: v };
    m.profile(&q, &GenerationParams::default()).unwrap()
}

fn fit_from(profiles: &[ResponseProfile]) -> (ReferenceModel, ReferenceModel) {
    let texts: Vec<String> = profiles.iter().map(|p| p.text.clone()).collect();
    let h = fit_reference(
        Space::Hidden,
        ReferenceSource::SelfModel,
        profiles.iter().map(|p| p.hidden_mean.clone()).collect(),
        texts.clone(),
        RidgePolicy::default(),
    )
    .unwrap();
    let e = fit_reference(
        Space::Embedding,
        ReferenceSource::SelfModel,
        profiles.iter().map(|p| p.input_embedding_mean.clone()).collect(),
        texts,
        RidgePolicy::default(),
    )
    .unwrap();
    (h, e)
}

#[test]
fn member_profile_scores() {
    let t = parse_template(LINE).unwrap();
    let m = SyntheticModel::new(SyntheticConfig::default()).unwrap();
    let profiles: Vec<_> = (0..30).map(|i| profile_of(&m, &t, &t.instantiate(&[i, 0]).unwrap().unwrap())).collect();
    let (h, e) = fit_from(&profiles);
    let all: BTreeSet<_> = MetricKind::ALL.into_iter().collect();
    let s = score_profile(&profiles[3], Some(&h), Some(&e), &all).unwrap();
    assert_eq!(s.ld_min, Some(0.0));
    assert_eq!(s.md_h, Some(h.mahalanobis(&profiles[3].hidden_mean).unwrap()));
    assert_eq!(s.knn_h.is_some(), true);
    assert_eq!(s.present().len(), 11);

    let only: BTreeSet<_> = [MetricKind::Perplexity].into_iter().collect();
    let s = score_profile(&profiles[3], None, None, &only).unwrap();
    assert_eq!(s.present(), vec![MetricKind::Perplexity]);

    let md: BTreeSet<_> = [MetricKind::MdE].into_iter().collect();
    assert_eq!(
        score_profile(&profiles[3], Some(&h), None, &md),
        Err(MetricsError::MissingReference(Space::Embedding))
    );
}

#[test]
fn value_ranges() {
    let t = parse_template(LINE).unwrap();
    let m = SyntheticModel::new(SyntheticConfig::default()).unwrap();
    let profiles: Vec<_> = (0..100).map(|i| profile_of(&m, &t, &t.instantiate(&[i, 0]).unwrap().unwrap())).collect();
    let (h, e) = fit_from(&profiles[..40]);
    let all: BTreeSet<_> = MetricKind::ALL.into_iter().collect();
    for p in &profiles {
        let s = score_profile(p, Some(&h), Some(&e), &all).unwrap();
        assert!(s.perplexity.unwrap() >= 1.0);
        assert!((0.0..=(32_000f64).ln()).contains(&s.entropy.unwrap()));
        for k in [MetricKind::LdMin, MetricKind::LdMax, MetricKind::LdMean, MetricKind::LdMedian] {
            assert!((0.0..=1.0).contains(&s.get(k).unwrap()));
        }
        for k in [MetricKind::MdH, MetricKind::MdE, MetricKind::KnnH, MetricKind::KnnE] {
            assert!(s.get(k).unwrap() >= 0.0);
        }
    }
}

#[test]
fn selector_parsing() {
    assert_eq!(parse_selector("all").unwrap().len(), 11);
    let s = parse_selector("md_h, ld_min").unwrap();
    assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![MetricKind::LdMin, MetricKind::MdH]);
    assert!(parse_selector("md_x").is_err());
}

/// Index of the `x` value whose difficulty is closest to `g`.
fn index_for(cfg: &SyntheticConfig, t: &SymbolicTemplate, g: f64) -> usize {
    (0..100)
        .min_by(|&a, &b| {
            let da = (crate::gateway::difficulty(cfg, t, &t.instantiate(&[a, 0]).unwrap().unwrap()) - g).abs();
            let db = (crate::gateway::difficulty(cfg, t, &t.instantiate(&[b, 0]).unwrap().unwrap()) - g).abs();
            da.total_cmp(&db)
        })
        .unwrap()
}

#[test]
fn hard_variations_score_higher_md_h() {
    let t = parse_template(LINE).unwrap();
    let mut wins = 0;
    for seed in 0..100 {
        let cfg = SyntheticConfig { seed, ..Default::default() };
        let m = SyntheticModel::new(cfg.clone()).unwrap();
        let refs: Vec<_> = (0..100)
            .map(|i| t.instantiate(&[i, 0]).unwrap().unwrap())
            .filter(|v| crate::gateway::difficulty(&cfg, &t, v) < cfg.error_threshold)
            .map(|v| profile_of(&m, &t, &v))
            .collect();
        let (h, _) = fit_from(&refs);
        let hard = t.instantiate(&[index_for(&cfg, &t, 0.9), 0]).unwrap().unwrap();
        let easy = t.instantiate(&[index_for(&cfg, &t, 0.1), 0]).unwrap().unwrap();
        let md = |v: &Variation| h.mahalanobis(&profile_of(&m, &t, v).hidden_mean).unwrap();
        if md(&hard) > md(&easy) {
            wins += 1;
        }
    }
    assert!(wins >= 95, "{wins}/100");
}

#[test]
fn synthetic_md_h_separates_incorrect_responses() {
    let t = crate::template::bundled_template("peel_saute").unwrap();
    let cfg = SyntheticConfig { seed: 7, ..Default::default() };
    let m = SyntheticModel::new(cfg).unwrap();
    let graded = |v: &Variation| {
        let p = profile_of(&m, &t, v);
        let ok = grade(extract_answer(&p.text), v.ground_truth_f64(), t.grading).correct;
        (p, ok)
    };
    let refs: Vec<_> = (10_000..20_000u64)
        .map(|s| graded(&sample_variation(&t, s).unwrap()))
        .filter(|(_, ok)| *ok)
        .take(REFERENCE_N)
        .map(|(p, _)| p)
        .collect();
    assert_eq!(refs.len(), REFERENCE_N);
    let (h, _) = fit_from(&refs);
    let scored: Vec<(f64, bool)> = (0..500u64)
        .map(|s| {
            let (p, ok) = graded(&sample_variation(&t, s).unwrap());
            (h.mahalanobis(&p.hidden_mean).unwrap(), ok)
        })
        .collect();
    let (mut num, mut pairs) = (0.0, 0.0);
    for (fi, ci) in &scored {
        for (fj, cj) in &scored {
            if !ci && *cj {
                pairs += 1.0;
                num += if fi > fj { 1.0 } else if fi == fj { 0.5 } else { 0.0 };
            }
        }
    }
    assert!(pairs > 0.0);
    let auc = num / pairs;
    assert!(auc > 0.9, "auc {auc}");
}

