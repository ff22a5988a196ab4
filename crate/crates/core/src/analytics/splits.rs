use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::quantile::contiguous_sizes;
use super::AnalyticsError;
use crate::seed;

/// A scored variation eligible for export, with its training text rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub template_id: String,
    pub key: String,
    pub md_h: f64,
    pub correct: bool,
    /// The problem as posed to the model.
    pub prompt: String,
    /// Ground-truth reasoning trace.
    pub reasoning: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOptions {
    pub k_parts: usize,
    /// Keep only records the model answered incorrectly.
    pub filter_incorrect: bool,
    pub cap_per_template: Option<usize>,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            k_parts: 3,
            filter_incorrect: false,
            cap_per_template: Some(100),
            seed: 0,
        }
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub template_id: String,
    pub key: String,
    pub md_h: f64,
    pub prompt: String,
    pub reasoning: String,
    pub answer: String,
    /// Target text in the few-shot answer format.
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPart {
    pub label: String,
    pub rows: Vec<SplitRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    /// Easiest part first.
    pub parts: Vec<SplitPart>,
    /// Candidates left after filtering and capping.
    pub pool_size: usize,
}

/// Sizes of `k` rank parts of `n` records; the first `n mod k` parts get one extra.
pub fn part_sizes(n: usize, k: usize) -> Vec<usize> {
    contiguous_sizes(n, k)
}

fn labels(k: usize) -> Vec<String> {
    if k == 3 {
        ["Q_low", "Q_mid", "Q_high"].map(String::from).to_vec()
    } else {
        (1..=k).map(|i| format!("Q{i}")).collect()
    }
}

fn rank(a: &SplitCandidate, b: &SplitCandidate) -> std::cmp::Ordering {
    a.md_h
        .total_cmp(&b.md_h)
        .then_with(|| a.key.cmp(&b.key))
        .then_with(|| a.template_id.cmp(&b.template_id))
}

/// Filters, caps each template by seeded uniform subsampling, ranks the pool
/// by `md_h` ascending and cuts it into `k_parts` contiguous parts.
pub fn export_difficulty_splits(candidates: &[SplitCandidate], opts: &SplitOptions) -> Result<Splits, AnalyticsError> {
    if opts.k_parts == 0 {
        return Err(AnalyticsError::InvalidArgument("k_parts must be at least 1".into()));
    }
    if let Some(c) = candidates.iter().find(|c| !c.md_h.is_finite()) {
        return Err(AnalyticsError::NonFinite(c.template_id.clone()));
    }
    let mut by_template: BTreeMap<&str, Vec<&SplitCandidate>> = BTreeMap::new();
    for c in candidates.iter().filter(|c| !opts.filter_incorrect || !c.correct) {
        by_template.entry(&c.template_id).or_default().push(c);
    }
    let mut pool: Vec<&SplitCandidate> = Vec::new();
    for (id, mut members) in by_template {
        members.sort_by(|a, b| a.key.cmp(&b.key));
        match opts.cap_per_template {
            Some(cap) if members.len() > cap => {
                let mut rng = seed::rng(opts.seed, &["split-cap", id]);
                let mut picked = sample(&mut rng, members.len(), cap).into_vec();
                picked.sort_unstable();
                pool.extend(picked.into_iter().map(|i| members[i]));
            }
            _ => pool.extend(members),
        }
    }
    if pool.is_empty() {
        return Err(AnalyticsError::EmptyAfterFilter);
    }
    pool.sort_by(|a, b| rank(a, b));
    let mut rest = pool.as_slice();
    let parts = part_sizes(pool.len(), opts.k_parts)
        .into_iter()
        .zip(labels(opts.k_parts))
        .map(|(size, label)| {
            let (head, tail) = rest.split_at(size);
            rest = tail;
            SplitPart {
                label,
                rows: head.iter().map(|c| row(c)).collect(),
            }
        })
        .collect();
    Ok(Splits {
        parts,
        pool_size: pool.len(),
    })
}

fn row(c: &SplitCandidate) -> SplitRow {
    SplitRow {
        template_id: c.template_id.clone(),
        key: c.key.clone(),
        md_h: c.md_h,
        prompt: c.prompt.clone(),
        reasoning: c.reasoning.clone(),
        answer: c.answer.clone(),
        completion: format!("{}\n#### {}", c.reasoning, c.answer),
    }
}

/// Largest-remainder apportionment of `total` over `weights`; ties in the
/// remainder go to the earlier part.
pub fn mixture_counts(total: usize, weights: &[f64]) -> Result<Vec<usize>, AnalyticsError> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !(sum > 0.0) {
        return Err(AnalyticsError::InvalidArgument("mixture weights must be non-negative with a positive sum".into()));
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total.saturating_sub(counts.iter().sum());
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Draws a mixed training set: `mixture_counts(total, weights)[i]` rows
/// uniformly from part `i`, kept in rank order. `total` defaults to the size
/// of the smallest part.
pub fn select_mixture(splits: &Splits, weights: &[f64], total: Option<usize>, seed: u64) -> Result<Vec<SplitRow>, AnalyticsError> {
    if weights.len() != splits.parts.len() {
        return Err(AnalyticsError::InvalidArgument(format!(
            "{} mixture weights for {} parts",
            weights.len(),
            splits.parts.len()
        )));
    }
    let total = total.unwrap_or_else(|| splits.parts.iter().map(|p| p.rows.len()).min().unwrap_or(0));
    let counts = mixture_counts(total, weights)?;
    let mut out = Vec::with_capacity(total);
    for (part, count) in splits.parts.iter().zip(counts) {
        if count > part.rows.len() {
            return Err(AnalyticsError::InvalidArgument(format!(
                "{} needs {count} rows but has {}",
                part.label,
                part.rows.len()
            )));
        }
        let mut rng = seed::rng(seed, &["mixture", &part.label]);
        let mut picked = sample(&mut rng, part.rows.len(), count).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| part.rows[i].clone()));
    }
    Ok(out)
}
