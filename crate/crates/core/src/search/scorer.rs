use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use rayon::prelude::*;

use super::{Origin, References, ScoredRecord, SearchError, Stage};
use crate::gateway::{extract_answer, grade, Dispatcher, Gateway, GenerationParams, GradedOutcome, Query, ResponseProfile};
use crate::metrics::{levenshtein_family_tokens, score_profile_with_tokens, MetricKind};
use crate::template::{render_prompt, PromptLibrary, SymbolicTemplate, Variation};

/// A model call on one variation, before scoring.
#[derive(Debug, Clone)]
pub struct Observation {
    pub variation: Variation,
    pub profile: ResponseProfile,
    /// Mean input embedding of the problem text alone.
    pub embedding: Vec<f64>,
    pub graded: GradedOutcome,
}

/// Issues model calls for one gateway and turns them into scored records.
///
/// Generation uses the full few-shot prompt. Input embeddings are taken over
/// the problem text alone, so that the fixed few-shot prefix does not wash
/// out the variation, and are cached by canonical key.
pub struct Scorer<'a> {
    gateway: &'a dyn Gateway,
    dispatcher: Dispatcher,
    prompts: &'a PromptLibrary,
    params: GenerationParams,
    metrics: BTreeSet<MetricKind>,
    embeddings: Mutex<HashMap<String, Vec<f64>>>,
}

impl<'a> Scorer<'a> {
    pub fn new(
        gateway: &'a dyn Gateway,
        prompts: &'a PromptLibrary,
        params: GenerationParams,
        metrics: BTreeSet<MetricKind>,
    ) -> Self {
        Self {
            gateway,
            dispatcher: Dispatcher::for_gateway(gateway),
            prompts,
            params,
            metrics,
            embeddings: Mutex::new(HashMap::new()),
        }
    }

    pub fn gateway(&self) -> &dyn Gateway {
        self.gateway
    }

    pub fn metrics(&self) -> &BTreeSet<MetricKind> {
        &self.metrics
    }

    pub fn params(&self) -> &GenerationParams {
        &self.params
    }

    /// Problem-text embeddings, in input order.
    pub fn embed(&self, t: &SymbolicTemplate, vars: &[&Variation]) -> Result<Vec<Vec<f64>>, SearchError> {
        let missing: Vec<&Variation> = {
            let cache = self.embeddings.lock().expect("embedding cache");
            let mut seen = BTreeSet::new();
            vars.iter()
                .copied()
                .filter(|v| !cache.contains_key(&v.canonical_key) && seen.insert(v.canonical_key.as_str()))
                .collect()
        };
        if !missing.is_empty() {
            let queries: Vec<Query> = missing
                .iter()
                .map(|v| Query {
                    prompt: &v.rendered_problem,
                    template: t,
                    variation: v,
                })
                .collect();
            let results = self.dispatcher.embed_all(self.gateway, &queries, &self.params);
            let mut cache = self.embeddings.lock().expect("embedding cache");
            for (v, r) in missing.iter().zip(results) {
                cache.insert(v.canonical_key.clone(), r?);
            }
        }
        let cache = self.embeddings.lock().expect("embedding cache");
        Ok(vars.iter().map(|v| cache[&v.canonical_key].clone()).collect())
    }

    /// Generates, grades and embeds each variation.
    pub fn observe(&self, t: &SymbolicTemplate, vars: &[Variation]) -> Result<Vec<Observation>, SearchError> {
        let prompts = vars
            .iter()
            .map(|v| render_prompt(t, v, self.prompts))
            .collect::<Result<Vec<_>, _>>()?;
        let queries: Vec<Query> = vars
            .iter()
            .zip(&prompts)
            .map(|(v, p)| Query {
                prompt: p,
                template: t,
                variation: v,
            })
            .collect();
        let profiles = self.dispatcher.profile_all(self.gateway, &queries, &self.params);
        let refs: Vec<&Variation> = vars.iter().collect();
        let embeddings = self.embed(t, &refs)?;
        vars.iter()
            .zip(profiles)
            .zip(embeddings)
            .map(|((v, p), embedding)| {
                let profile = p?;
                let graded = grade(extract_answer(&profile.text), v.ground_truth_f64(), t.grading);
                Ok(Observation {
                    variation: v.clone(),
                    profile,
                    embedding,
                    graded,
                })
            })
            .collect()
    }

    /// The cheap score `f~` of each variation: problem-embedding Mahalanobis,
    /// or in fallback mode `ld_min` of the problem text against the reference
    /// problems.
    pub fn cheap_scores(&self, t: &SymbolicTemplate, vars: &[&Variation], refs: &References) -> Result<Vec<f64>, SearchError> {
        if refs.fallback {
            let tokens = refs.embedding_tokens();
            return vars
                .par_iter()
                .map(|v| Ok(levenshtein_family_tokens(&v.rendered_problem, tokens)?.min))
                .collect();
        }
        let embeddings = self.embed(t, vars)?;
        embeddings
            .par_iter()
            .map(|e| Ok(refs.embedding.mahalanobis(e)?))
            .collect()
    }

    /// Scores observations against `refs`; metrics are frozen at this point.
    pub fn records(
        &self,
        observations: Vec<Observation>,
        origins: &[Origin],
        iteration: usize,
        refs: &References,
    ) -> Result<Vec<ScoredRecord>, SearchError> {
        let which = refs.supported(&self.metrics);
        let objective = refs.objective();
        observations
            .into_par_iter()
            .zip(origins.par_iter())
            .map(|(obs, &origin)| {
                let mut profile = obs.profile;
                profile.input_embedding_mean = obs.embedding;
                let metrics = score_profile_with_tokens(
                    &profile,
                    Some(&refs.hidden),
                    Some(&refs.embedding),
                    &which,
                    Some(refs.hidden_tokens()),
                )?;
                let score = metrics.get(objective).expect("objective is always computed");
                Ok(ScoredRecord {
                    variation: obs.variation,
                    response: profile.text,
                    extracted_answer: obs.graded.extracted_answer,
                    correct: obs.graded.correct,
                    truncated: profile.truncated,
                    metrics,
                    score,
                    stage: Stage::Exact,
                    origin,
                    iteration,
                    hidden_ref: refs.hidden.snapshot_id.clone(),
                    embedding_ref: refs.embedding.snapshot_id.clone(),
                    hidden_mean: profile.hidden_mean,
                    embedding: profile.input_embedding_mean,
                })
            })
            .collect()
    }
}
