use super::probe::draw_unique;
use super::{Origin, References, ScoredRecord, Scorer, SearchError};
use crate::template::SymbolicTemplate;

/// `count` distinct uniform samples, exact-scored against `refs`.
///
/// Spaces with fewer than `count` feasible variations yield fewer records.
/// In paired mode the caller passes the explored-set size of a search run.
pub fn random_baseline(
    t: &SymbolicTemplate,
    scorer: &Scorer,
    refs: &References,
    count: usize,
    seed: u64,
) -> Result<Vec<ScoredRecord>, SearchError> {
    if count == 0 {
        return Err(SearchError::InvalidParams("baseline count must be at least 1".into()));
    }
    let vars = draw_unique(t, seed, "baseline", count)?;
    let batch = (scorer.gateway().concurrency() * 4).max(1);
    let mut out = Vec::with_capacity(vars.len());
    for chunk in vars.chunks(batch) {
        let origins = vec![Origin::Random; chunk.len()];
        out.extend(scorer.records(scorer.observe(t, chunk)?, &origins, 0, refs)?);
    }
    Ok(out)
}
