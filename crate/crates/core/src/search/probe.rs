use super::{References, Scorer, SearchError};
use crate::metrics::{fit_reference, ReferenceModel, ReferenceSource, RidgePolicy, Space, REFERENCE_N};
use crate::seed;
use crate::template::{sample_variation, SymbolicTemplate, Variation};

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    /// Correct responses to collect.
    pub n_target: usize,
    /// Maximum model calls.
    pub budget: usize,
    pub seed: u64,
    pub ridge: RidgePolicy,
    /// Where the Levenshtein reference texts come from. Pooled vectors always
    /// come from the model under evaluation.
    pub text_source: ReferenceSource,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            n_target: REFERENCE_N,
            budget: 1000,
            seed: 0,
            ridge: RidgePolicy::default(),
            text_source: ReferenceSource::SelfModel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub references: References,
    /// Variations behind the references; excluded from later analysis.
    pub reference_keys: Vec<String>,
    pub queried: usize,
    pub correct_found: usize,
}

// Duplicate draws do not use budget; this bounds the draws on tiny spaces.
const DRAWS_PER_CALL: usize = 20;

/// Samples variations uniformly and keeps the first `n_target` correctly
/// answered ones as references.
///
/// With fewer than two correct responses no Gaussian can be fitted and the
/// references fall back to ground-truth traces of the sampled variations.
/// `other` supplies reference texts when `text_source` is
/// [`ReferenceSource::OtherModel`].
pub fn probe_references(
    t: &SymbolicTemplate,
    scorer: &Scorer,
    opts: &ProbeOptions,
    other: Option<&Scorer>,
) -> Result<ProbeReport, SearchError> {
    if opts.n_target == 0 || opts.budget == 0 {
        return Err(SearchError::InvalidParams("probe needs n_target >= 1 and budget >= 1".into()));
    }
    let sampled = draw_unique(t, opts.seed, "probe", opts.budget)?;
    let batch = (scorer.gateway().concurrency() * 4).max(1);
    let mut correct = Vec::new();
    let mut queried = 0;
    for chunk in sampled.chunks(batch) {
        queried += chunk.len();
        for obs in scorer.observe(t, chunk)? {
            if obs.graded.correct && correct.len() < opts.n_target {
                correct.push(obs);
            }
        }
        if correct.len() >= opts.n_target {
            break;
        }
    }

    if correct.len() < 2 {
        let members: Vec<&Variation> = sampled.iter().take(opts.n_target).collect();
        let traces = members
            .iter()
            .map(|v| t.render_ground_truth_reasoning(v))
            .collect::<Result<Vec<_>, _>>()?;
        let problems = members.iter().map(|v| v.rendered_problem.clone()).collect();
        return Ok(ProbeReport {
            references: References::new(
                ReferenceModel::from_traces(Space::Hidden, traces),
                ReferenceModel::from_traces(Space::Embedding, problems),
            ),
            reference_keys: members.iter().map(|v| v.canonical_key.clone()).collect(),
            queried,
            correct_found: correct.len(),
        });
    }

    let members: Vec<Variation> = correct.iter().map(|o| o.variation.clone()).collect();
    let texts = match opts.text_source {
        ReferenceSource::SelfModel => correct.iter().map(|o| o.profile.text.clone()).collect(),
        ReferenceSource::GroundTruthTraces => members
            .iter()
            .map(|v| t.render_ground_truth_reasoning(v))
            .collect::<Result<Vec<_>, _>>()?,
        ReferenceSource::OtherModel => {
            let other = other.ok_or_else(|| {
                SearchError::InvalidParams("other-model reference texts need a second gateway".into())
            })?;
            other
                .observe(t, &members)?
                .into_iter()
                .filter(|o| o.graded.correct)
                .map(|o| o.profile.text)
                .collect()
        }
    };
    let (hidden, embedding): (Vec<_>, Vec<_>) = correct.into_iter().map(|o| (o.profile.hidden_mean, o.embedding)).unzip();
    // Text and vector counts may differ for other-model texts; the texts are
    // then stored on their own.
    let fit = |space, vectors: Vec<Vec<f64>>| -> Result<ReferenceModel, SearchError> {
        let paired = texts.len() == vectors.len();
        let mut r = fit_reference(space, opts.text_source, vectors, if paired { texts.clone() } else { Vec::new() }, opts.ridge)?;
        if !paired {
            r = r.with_texts(texts.clone());
        }
        Ok(r)
    };
    Ok(ProbeReport {
        references: References::new(fit(Space::Hidden, hidden)?, fit(Space::Embedding, embedding)?),
        reference_keys: members.iter().map(|v| v.canonical_key.clone()).collect(),
        queried,
        correct_found: members.len(),
    })
}

/// Up to `count` distinct uniform samples in draw order.
pub(super) fn draw_unique(t: &SymbolicTemplate, base_seed: u64, label: &str, count: usize) -> Result<Vec<Variation>, SearchError> {
    let mut out = Vec::with_capacity(count);
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..count.saturating_mul(DRAWS_PER_CALL) {
        if out.len() == count {
            break;
        }
        let v = sample_variation(t, seed::derive(base_seed, &[&t.id, label, &i.to_string()])).map_err(|e| {
            SearchError::Infeasible {
                template: t.id.clone(),
                reason: e.to_string(),
            }
        })?;
        if seen.insert(v.canonical_key.clone()) {
            out.push(v);
        }
    }
    Ok(out)
}
