use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rank_order, CheapScore, Origin, References, ScoredRecord, Scorer, SearchError, SearchParams};
use crate::metrics::{fit_reference, MetricKind, ReferenceModel, Space};
use crate::seed;
use crate::store::{RunStore, CHECKPOINT, RECORDS};
use crate::template::{enumerate_neighbors, sample_variation, SymbolicTemplate, Variation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamEntry {
    pub key: String,
    pub score: f64,
    pub correct: bool,
}

/// Per-iteration bookkeeping: the best-so-far and beam-accuracy curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub best_score: f64,
    pub best_key: String,
    pub beam_accuracy: f64,
    pub beam_size: usize,
    /// Candidates generated (neighbors plus exploration samples) over all beam entries.
    pub candidates: usize,
    pub exploration: usize,
    pub exact_scored: usize,
    pub new_correct: usize,
    pub hidden_ref: String,
    pub embedding_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshEvent {
    pub iteration: usize,
    pub added: usize,
    pub reference_n: usize,
    pub hidden_ref: String,
    pub embedding_ref: String,
}

#[derive(Debug, Clone)]
pub struct BeamState {
    pub template_id: String,
    /// Sorted by (score desc, key asc).
    pub beam: Vec<BeamEntry>,
    pub best: BeamEntry,
    pub iteration: usize,
    pub explored: BTreeMap<String, ScoredRecord>,
    /// Keys in the order they were scored.
    pub order: Vec<String>,
    /// Correct responses scored since the last refresh.
    pub pending: Vec<String>,
    pub refs: References,
    pub summaries: Vec<IterationSummary>,
    pub refreshes: Vec<RefreshEvent>,
}

impl BeamState {
    pub fn correct_since_refresh(&self) -> usize {
        self.pending.len()
    }

    /// Records in scoring order.
    pub fn records(&self) -> impl Iterator<Item = &ScoredRecord> {
        self.order.iter().map(|k| &self.explored[k])
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.best_score).collect()
    }

    pub fn beam_accuracy(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.beam_accuracy).collect()
    }
}

/// Everything needed to continue a run, apart from the record log and the
/// reference snapshots it points at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub template_id: String,
    pub params: SearchParams,
    pub cheap: CheapScore,
    pub metrics: BTreeSet<MetricKind>,
    pub initial_hidden_ref: String,
    pub initial_embedding_ref: String,
    pub fallback: bool,
    pub iteration: usize,
    pub record_count: usize,
    pub beam: Vec<BeamEntry>,
    pub best: BeamEntry,
    pub pending: Vec<String>,
    pub hidden_ref: String,
    pub embedding_ref: String,
    pub summaries: Vec<IterationSummary>,
    pub refreshes: Vec<RefreshEvent>,
}

/// Runs the two-stage beam search for `params.iterations` iterations.
///
/// With a store, each completed iteration appends its records and rewrites
/// the checkpoint, and an existing checkpoint is resumed rather than
/// restarted. A failed gateway call aborts the current iteration; the store
/// then still holds the last completed one.
pub fn run_beam_search(
    t: &SymbolicTemplate,
    scorer: &Scorer,
    refs: References,
    params: &SearchParams,
    cheap: CheapScore,
    store: Option<&RunStore>,
) -> Result<BeamState, SearchError> {
    params.validate()?;
    let initial = (refs.hidden.snapshot_id.clone(), refs.embedding.snapshot_id.clone());
    let mut state = match store.map(|s| resume(s, t, scorer, params, cheap, &initial)).transpose()? {
        Some(Some(state)) => state,
        _ => {
            let state = start(t, scorer, refs, params)?;
            if let Some(s) = store {
                s.write_lines::<ScoredRecord>(RECORDS, &[])?;
                save(s, &state, params, cheap, scorer, &initial, 0)?;
            }
            state
        }
    };
    while state.iteration < params.iterations {
        let before = state.order.len();
        iterate(t, scorer, params, cheap, &mut state)?;
        if let Some(s) = store {
            save(s, &state, params, cheap, scorer, &initial, before)?;
        }
    }
    Ok(state)
}

fn start(t: &SymbolicTemplate, scorer: &Scorer, refs: References, params: &SearchParams) -> Result<BeamState, SearchError> {
    let p0 = sample_variation(t, seed::derive(params.seed, &[&t.id, "p0"])).map_err(|e| SearchError::Infeasible {
        template: t.id.clone(),
        reason: e.to_string(),
    })?;
    let obs = scorer.observe(t, std::slice::from_ref(&p0))?;
    let rec = scorer.records(obs, &[Origin::Initial], 0, &refs)?.remove(0);
    let entry = BeamEntry {
        key: rec.key().to_string(),
        score: rec.score,
        correct: rec.correct,
    };
    let mut state = BeamState {
        template_id: t.id.clone(),
        beam: vec![entry.clone()],
        best: entry,
        iteration: 0,
        explored: BTreeMap::new(),
        order: Vec::new(),
        pending: Vec::new(),
        refs,
        summaries: Vec::new(),
        refreshes: Vec::new(),
    };
    let new_correct = usize::from(rec.correct);
    admit(&mut state, vec![rec]);
    let summary = summarize(&state, 0, 0, 1, new_correct);
    state.summaries.push(summary);
    goalpost(&mut state, params)?;
    Ok(state)
}

fn admit(state: &mut BeamState, records: Vec<ScoredRecord>) {
    for r in records {
        let key = r.key().to_string();
        if r.correct {
            state.pending.push(key.clone());
        }
        state.order.push(key.clone());
        state.explored.insert(key, r);
    }
}

fn summarize(state: &BeamState, candidates: usize, exploration: usize, exact: usize, new_correct: usize) -> IterationSummary {
    let correct = state.beam.iter().filter(|e| e.correct).count();
    IterationSummary {
        iteration: state.iteration,
        best_score: state.best.score,
        best_key: state.best.key.clone(),
        beam_accuracy: correct as f64 / state.beam.len().max(1) as f64,
        beam_size: state.beam.len(),
        candidates,
        exploration,
        exact_scored: exact,
        new_correct,
        hidden_ref: state.refs.hidden.snapshot_id.clone(),
        embedding_ref: state.refs.embedding.snapshot_id.clone(),
    }
}

fn iterate(
    t: &SymbolicTemplate,
    scorer: &Scorer,
    params: &SearchParams,
    cheap: CheapScore,
    state: &mut BeamState,
) -> Result<(), SearchError> {
    let it = state.iteration + 1;
    let mut rng = seed::rng(params.seed, &[&t.id, "iteration", &it.to_string()]);
    let beam_keys: HashSet<&str> = state.beam.iter().map(|e| e.key.as_str()).collect();
    let mut pool: Vec<(Variation, Origin)> = Vec::new();
    let mut in_pool: HashSet<String> = HashSet::new();
    // Exact-mode cheap scores are full records; keep them for the exact stage.
    let mut prescored: HashMap<String, ScoredRecord> = HashMap::new();
    let (mut candidates, mut exploration) = (0, 0);

    for entry in &state.beam {
        let base = &state.explored[&entry.key].variation;
        let neighbor_seed = seed::derive(params.seed, &[&t.id, "neighbors", &it.to_string(), &entry.key]);
        let fresh = |key: &str, seen: &HashSet<String>| {
            !beam_keys.contains(key) && !state.explored.contains_key(key) && !in_pool.contains(key) && !seen.contains(key)
        };
        let mut seen = HashSet::new();
        let mut cands: Vec<(Variation, Origin)> = Vec::new();
        for n in enumerate_neighbors(t, base, params.per_slot_cap, neighbor_seed) {
            if fresh(&n.canonical_key, &seen) {
                seen.insert(n.canonical_key.clone());
                cands.push((n, Origin::Neighbor));
            }
        }
        for _ in 0..params.exploration_samples(cands.len()) {
            let s: u64 = rng.random();
            if let Ok(v) = sample_variation(t, s) {
                if fresh(&v.canonical_key, &seen) {
                    seen.insert(v.canonical_key.clone());
                    cands.push((v, Origin::Exploration));
                    exploration += 1;
                }
            }
        }
        candidates += cands.len();
        if cands.is_empty() {
            continue;
        }

        let scores: Vec<f64> = match cheap {
            CheapScore::EmbeddingMahalanobis => {
                let vars: Vec<&Variation> = cands.iter().map(|(v, _)| v).collect();
                scorer.cheap_scores(t, &vars, &state.refs)?
            }
            CheapScore::Exact => {
                let vars: Vec<Variation> = cands.iter().map(|(v, _)| v.clone()).collect();
                let origins: Vec<Origin> = cands.iter().map(|(_, o)| *o).collect();
                let recs = scorer.records(scorer.observe(t, &vars)?, &origins, it, &state.refs)?;
                let scores = recs.iter().map(|r| r.score).collect();
                for r in recs {
                    prescored.insert(r.key().to_string(), r);
                }
                scores
            }
        };

        let picked: Vec<usize> = if cands.len() <= params.branching {
            (0..cands.len()).collect()
        } else {
            let mut ranked: Vec<usize> = (0..cands.len()).collect();
            ranked.sort_by(|&a, &b| rank_order((scores[a], &cands[a].0.canonical_key), (scores[b], &cands[b].0.canonical_key)));
            let top = params.top_picks();
            let rest = &ranked[top..];
            let n_rand = params.random_picks().min(rest.len());
            let mut picked = ranked[..top].to_vec();
            picked.extend(index::sample(&mut rng, rest.len(), n_rand).into_iter().map(|i| rest[i]));
            picked
        };
        for i in picked {
            in_pool.insert(cands[i].0.canonical_key.clone());
            pool.push(cands[i].clone());
        }
    }

    let mut records = Vec::with_capacity(pool.len());
    let mut to_observe: Vec<(Variation, Origin)> = Vec::new();
    for (v, o) in pool {
        match prescored.remove(&v.canonical_key) {
            Some(r) => records.push(r),
            None => to_observe.push((v, o)),
        }
    }
    if !to_observe.is_empty() {
        let (vars, origins): (Vec<Variation>, Vec<Origin>) = to_observe.into_iter().unzip();
        records.extend(scorer.records(scorer.observe(t, &vars)?, &origins, it, &state.refs)?);
    }

    let exact = records.len();
    let new_correct = records.iter().filter(|r| r.correct).count();
    let mut merged: Vec<BeamEntry> = state.beam.clone();
    merged.extend(records.iter().map(|r| BeamEntry {
        key: r.key().to_string(),
        score: r.score,
        correct: r.correct,
    }));
    merged.sort_by(|a, b| rank_order((a.score, &a.key), (b.score, &b.key)));
    merged.truncate(params.width);
    admit(state, records);
    state.beam = merged;
    state.iteration = it;
    if let Some(top) = state.beam.first() {
        if top.score > state.best.score {
            state.best = top.clone();
        }
    }
    let summary = summarize(state, candidates, exploration, exact, new_correct);
    state.summaries.push(summary);
    goalpost(state, params)
}

/// Refits both references once enough newly correct responses have piled up.
/// Text-only fallback references are never refit.
fn goalpost(state: &mut BeamState, params: &SearchParams) -> Result<(), SearchError> {
    if params.goalpost_refresh == 0 || state.refs.fallback || state.pending.len() < params.goalpost_refresh {
        return Ok(());
    }
    let added = std::mem::take(&mut state.pending);
    let grow = |r: &ReferenceModel, space: Space| -> Result<ReferenceModel, SearchError> {
        let mut vectors = r.vectors.clone();
        let mut texts = r.texts.clone();
        let paired = texts.len() == vectors.len();
        for k in &added {
            let rec = &state.explored[k];
            vectors.push(match space {
                Space::Hidden => rec.hidden_mean.clone(),
                Space::Embedding => rec.embedding.clone(),
            });
            if paired {
                texts.push(rec.response.clone());
            }
        }
        let ridge = r.gaussian.as_ref().map(|g| g.policy()).unwrap_or_default();
        let mut out = fit_reference(space, r.source, vectors, if paired { texts } else { Vec::new() }, ridge)?;
        if !paired {
            out = out.with_texts(r.texts.clone());
        }
        Ok(out)
    };
    let hidden = grow(&state.refs.hidden, Space::Hidden)?;
    let embedding = grow(&state.refs.embedding, Space::Embedding)?;
    state.refreshes.push(RefreshEvent {
        iteration: state.iteration,
        added: added.len(),
        reference_n: hidden.n(),
        hidden_ref: hidden.snapshot_id.clone(),
        embedding_ref: embedding.snapshot_id.clone(),
    });
    state.refs = References::new(hidden, embedding);
    Ok(())
}

fn save(
    store: &RunStore,
    state: &BeamState,
    params: &SearchParams,
    cheap: CheapScore,
    scorer: &Scorer,
    initial: &(String, String),
    from: usize,
) -> Result<(), SearchError> {
    store.save_reference(&state.refs.hidden)?;
    store.save_reference(&state.refs.embedding)?;
    let new: Vec<&ScoredRecord> = state.order[from..].iter().map(|k| &state.explored[k]).collect();
    store.append_lines(RECORDS, &new)?;
    let cp = Checkpoint {
        template_id: state.template_id.clone(),
        params: params.clone(),
        cheap,
        metrics: scorer.metrics().clone(),
        initial_hidden_ref: initial.0.clone(),
        initial_embedding_ref: initial.1.clone(),
        fallback: state.refs.fallback,
        iteration: state.iteration,
        record_count: state.order.len(),
        beam: state.beam.clone(),
        best: state.best.clone(),
        pending: state.pending.clone(),
        hidden_ref: state.refs.hidden.snapshot_id.clone(),
        embedding_ref: state.refs.embedding.snapshot_id.clone(),
        summaries: state.summaries.clone(),
        refreshes: state.refreshes.clone(),
    };
    store.write_json(CHECKPOINT, &cp)?;
    Ok(())
}

fn resume(
    store: &RunStore,
    t: &SymbolicTemplate,
    scorer: &Scorer,
    params: &SearchParams,
    cheap: CheapScore,
    initial: &(String, String),
) -> Result<Option<BeamState>, SearchError> {
    let Some(cp) = store.read_json::<Checkpoint>(CHECKPOINT)? else {
        return Ok(None);
    };
    let mismatch = |what: &str| SearchError::Resume(format!("checkpoint was written with a different {what}"));
    if cp.template_id != t.id {
        return Err(mismatch("template"));
    }
    if cp.params != *params {
        return Err(mismatch("parameter set"));
    }
    if cp.cheap != cheap || cp.metrics != *scorer.metrics() {
        return Err(mismatch("scoring configuration"));
    }
    if (&cp.initial_hidden_ref, &cp.initial_embedding_ref) != (&initial.0, &initial.1) {
        return Err(mismatch("reference set"));
    }
    let load = |space, id: &str| -> Result<ReferenceModel, SearchError> {
        store
            .load_reference(space, id)?
            .ok_or_else(|| SearchError::Resume(format!("reference snapshot {id} is missing")))
    };
    let refs = References::new(load(Space::Hidden, &cp.hidden_ref)?, load(Space::Embedding, &cp.embedding_ref)?);
    let mut records: Vec<ScoredRecord> = store.read_lines(RECORDS)?;
    if records.len() < cp.record_count {
        return Err(SearchError::Resume(format!(
            "record log holds {} records, checkpoint expects {}",
            records.len(),
            cp.record_count
        )));
    }
    if records.len() > cp.record_count {
        // Records of an iteration that never reached its checkpoint.
        records.truncate(cp.record_count);
        store.write_lines(RECORDS, &records)?;
    }
    let mut state = BeamState {
        template_id: cp.template_id,
        beam: cp.beam,
        best: cp.best,
        iteration: cp.iteration,
        explored: BTreeMap::new(),
        order: Vec::new(),
        pending: Vec::new(),
        refs,
        summaries: cp.summaries,
        refreshes: cp.refreshes,
    };
    for r in records {
        let key = r.key().to_string();
        state.order.push(key.clone());
        state.explored.insert(key, r);
    }
    state.pending = cp.pending;
    Ok(Some(state))
}
