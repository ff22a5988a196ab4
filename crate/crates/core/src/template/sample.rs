use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Rejection, SymbolicTemplate, TemplateError, Variation};

/// Draws attempted by [`sample_variation`] before giving up.
pub const DEFAULT_REJECTION_BUDGET: usize = 10_000;
/// Alternatives considered per slot by [`enumerate_neighbors`].
pub const DEFAULT_PER_SLOT_CAP: usize = 64;

/// Uniform rejection sampling over the slot domains.
///
/// Every valid variation is equally likely. Deterministic for a given seed.
pub fn sample_variation(t: &SymbolicTemplate, seed: u64) -> Result<Variation, TemplateError> {
    sample_with_budget(t, seed, DEFAULT_REJECTION_BUDGET)
}

pub fn sample_with_budget(t: &SymbolicTemplate, seed: u64, budget: usize) -> Result<Variation, TemplateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with_rng(t, &mut rng, budget)
}

pub(crate) fn sample_with_rng<R: Rng>(
    t: &SymbolicTemplate,
    rng: &mut R,
    budget: usize,
) -> Result<Variation, TemplateError> {
    let mut idx = vec![0usize; t.slots.len()];
    for _ in 0..budget {
        for (i, s) in t.slots.iter().enumerate() {
            idx[i] = rng.random_range(0..s.domain.len());
        }
        match t.try_build(&idx) {
            Ok(v) => return Ok(v),
            Err(Rejection::Condition) => {}
            Err(Rejection::Evaluation(field, source)) => {
                return Err(TemplateError::Evaluation {
                    field,
                    assignment: t.describe(&idx),
                    source,
                })
            }
        }
    }
    Err(TemplateError::RejectionBudget {
        template: t.id.clone(),
        budget,
    })
}

/// Valid variations differing from `v` in exactly one slot.
///
/// For slots with more than `per_slot_cap` alternatives a seeded uniform
/// subset of that size is taken. Output is ordered by slot, then index, and
/// holds no duplicates. Assignments whose conditions or answer cannot be
/// evaluated are treated as infeasible, and a variation from another
/// template has no neighbors.
pub fn enumerate_neighbors(t: &SymbolicTemplate, v: &Variation, per_slot_cap: usize, seed: u64) -> Vec<Variation> {
    let Ok(base) = t.indices_of(v) else {
        return Vec::new();
    };
    let per_slot_cap = per_slot_cap.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    seen.insert(v.canonical_key.clone());
    let mut out = Vec::new();
    for (slot, s) in t.slots.iter().enumerate() {
        let n = s.domain.len();
        let others = n.saturating_sub(1);
        let mut picks: Vec<usize> = if others <= per_slot_cap {
            (0..n).filter(|&i| i != base[slot]).collect()
        } else {
            index::sample(&mut rng, others, per_slot_cap)
                .into_iter()
                .map(|i| if i >= base[slot] { i + 1 } else { i })
                .collect()
        };
        picks.sort_unstable();
        let mut idx = base.clone();
        for i in picks {
            idx[slot] = i;
            if let Ok(n) = t.try_build(&idx) {
                if seen.insert(n.canonical_key.clone()) {
                    out.push(n);
                }
            }
        }
    }
    out
}
