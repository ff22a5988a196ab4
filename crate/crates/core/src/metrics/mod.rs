//! Difficulty metrics: likelihood scores, the token Levenshtein family, and
//! Mahalanobis / k-NN distances to reference sets.
//!
//! Mahalanobis distances are squared throughout.

mod levenshtein;
mod likelihood;
mod reference;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gateway::ResponseProfile;

pub use levenshtein::{
    edit_distance, levenshtein_family, levenshtein_family_tokens, normalized_distance, pool, preprocess, text_tokens,
    tokenize, LdFamily,
};
pub use likelihood::{entropy, perplexity, self_certainty, SELF_CERTAINTY_K};
pub use reference::{fit_reference, knn_distance, Gaussian, ReferenceModel, ReferenceSource, RidgePolicy, Space};

/// Neighbor rank used by the k-NN distances.
pub const KNN_K: usize = 10;
/// Reference set size target.
pub const REFERENCE_N: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty token sequence")]
    EmptySequence,
    #[error("need {needed} top-k log-probabilities per token, found {found}")]
    TooFewTopK { needed: usize, found: usize },
    #[error("no reference texts")]
    EmptyReferences,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least 2 reference vectors, got {0}")]
    TooFewVectors(usize),
    #[error("{vectors} vectors but {texts} texts")]
    TextCountMismatch { vectors: usize, texts: usize },
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("k-NN needs at least k={k} references, have {n}")]
    TooFewForKnn { n: usize, k: usize },
    #[error("reference has no fitted Gaussian (text-only fallback)")]
    NoGaussian,
    #[error("missing {0:?} reference for a requested metric")]
    MissingReference(Space),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Perplexity,
    Entropy,
    SelfCertainty,
    LdMin,
    LdMax,
    LdMean,
    LdMedian,
    MdH,
    KnnH,
    MdE,
    KnnE,
}

impl MetricKind {
    pub const ALL: [MetricKind; 11] = [
        MetricKind::Perplexity,
        MetricKind::Entropy,
        MetricKind::SelfCertainty,
        MetricKind::LdMin,
        MetricKind::LdMax,
        MetricKind::LdMean,
        MetricKind::LdMedian,
        MetricKind::MdH,
        MetricKind::KnnH,
        MetricKind::MdE,
        MetricKind::KnnE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Perplexity => "perplexity",
            MetricKind::Entropy => "entropy",
            MetricKind::SelfCertainty => "self_certainty",
            MetricKind::LdMin => "ld_min",
            MetricKind::LdMax => "ld_max",
            MetricKind::LdMean => "ld_mean",
            MetricKind::LdMedian => "ld_median",
            MetricKind::MdH => "md_h",
            MetricKind::KnnH => "knn_h",
            MetricKind::MdE => "md_e",
            MetricKind::KnnE => "knn_e",
        }
    }

    /// `input` for prompt-side metrics, `output` for response-side ones.
    pub fn span(self) -> &'static str {
        match self {
            MetricKind::MdE | MetricKind::KnnE => "input",
            _ => "output",
        }
    }

    pub fn is_levenshtein(self) -> bool {
        matches!(self, MetricKind::LdMin | MetricKind::LdMax | MetricKind::LdMean | MetricKind::LdMedian)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Parses a comma-separated selector; `all` selects everything.
pub fn parse_selector(s: &str) -> Result<BTreeSet<MetricKind>, String> {
    if s.trim() == "all" {
        return Ok(MetricKind::ALL.into_iter().collect());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_certainty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ld_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ld_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ld_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ld_median: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub md_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub md_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knn_e: Option<f64>,
}

impl MetricVector {
    pub fn get(&self, k: MetricKind) -> Option<f64> {
        *self.slot(k)
    }

    pub fn set(&mut self, k: MetricKind, v: Option<f64>) {
        *self.slot_mut(k) = v;
    }

    fn slot(&self, k: MetricKind) -> &Option<f64> {
        match k {
            MetricKind::Perplexity => &self.perplexity,
            MetricKind::Entropy => &self.entropy,
            MetricKind::SelfCertainty => &self.self_certainty,
            MetricKind::LdMin => &self.ld_min,
            MetricKind::LdMax => &self.ld_max,
            MetricKind::LdMean => &self.ld_mean,
            MetricKind::LdMedian => &self.ld_median,
            MetricKind::MdH => &self.md_h,
            MetricKind::KnnH => &self.knn_h,
            MetricKind::MdE => &self.md_e,
            MetricKind::KnnE => &self.knn_e,
        }
    }

    fn slot_mut(&mut self, k: MetricKind) -> &mut Option<f64> {
        match k {
            MetricKind::Perplexity => &mut self.perplexity,
            MetricKind::Entropy => &mut self.entropy,
            MetricKind::SelfCertainty => &mut self.self_certainty,
            MetricKind::LdMin => &mut self.ld_min,
            MetricKind::LdMax => &mut self.ld_max,
            MetricKind::LdMean => &mut self.ld_mean,
            MetricKind::LdMedian => &mut self.ld_median,
            MetricKind::MdH => &mut self.md_h,
            MetricKind::KnnH => &mut self.knn_h,
            MetricKind::MdE => &mut self.md_e,
            MetricKind::KnnE => &mut self.knn_e,
        }
    }

    pub fn present(&self) -> Vec<MetricKind> {
        MetricKind::ALL.into_iter().filter(|k| self.get(*k).is_some()).collect()
    }
}

/// Fills the requested metrics for one profile.
///
/// Levenshtein metrics use the texts of `ref_h` (or `ref_e` when no hidden
/// reference is given). k-NN values stay absent when the reference holds
/// fewer than [`KNN_K`] vectors. Likelihood metrics stay absent for a
/// profile without tokens.
pub fn score_profile(
    profile: &ResponseProfile,
    ref_h: Option<&ReferenceModel>,
    ref_e: Option<&ReferenceModel>,
    which: &BTreeSet<MetricKind>,
) -> Result<MetricVector, MetricsError> {
    score_profile_with_tokens(profile, ref_h, ref_e, which, None)
}

/// As [`score_profile`], with the reference texts already tokenized (see
/// [`text_tokens`]). Callers scoring many profiles against one reference
/// should tokenize once.
pub fn score_profile_with_tokens(
    profile: &ResponseProfile,
    ref_h: Option<&ReferenceModel>,
    ref_e: Option<&ReferenceModel>,
    which: &BTreeSet<MetricKind>,
    ref_tokens: Option<&[Vec<String>]>,
) -> Result<MetricVector, MetricsError> {
    let mut m = MetricVector::default();
    let has_tokens = !profile.tokens.is_empty();
    if which.contains(&MetricKind::Perplexity) && has_tokens {
        m.perplexity = Some(perplexity(&profile.tokens)?);
    }
    if which.contains(&MetricKind::Entropy) && has_tokens {
        m.entropy = Some(entropy(&profile.tokens)?);
    }
    if which.contains(&MetricKind::SelfCertainty) && has_tokens {
        m.self_certainty = Some(self_certainty(&profile.tokens, SELF_CERTAINTY_K)?);
    }
    if which.iter().any(|k| k.is_levenshtein()) {
        let fam = match ref_tokens {
            Some(tokens) => levenshtein_family_tokens(&profile.text, tokens)?,
            None => {
                let texts = &ref_h.or(ref_e).ok_or(MetricsError::MissingReference(Space::Hidden))?.texts;
                levenshtein_family(&profile.text, texts)?
            }
        };
        for (k, v) in [
            (MetricKind::LdMin, fam.min),
            (MetricKind::LdMax, fam.max),
            (MetricKind::LdMean, fam.mean),
            (MetricKind::LdMedian, fam.median),
        ] {
            if which.contains(&k) {
                m.set(k, Some(v));
            }
        }
    }
    for (space, md, knn, r, x) in [
        (Space::Hidden, MetricKind::MdH, MetricKind::KnnH, ref_h, &profile.hidden_mean),
        (Space::Embedding, MetricKind::MdE, MetricKind::KnnE, ref_e, &profile.input_embedding_mean),
    ] {
        if !(which.contains(&md) || which.contains(&knn)) {
            continue;
        }
        let r = r.ok_or(MetricsError::MissingReference(space))?;
        if which.contains(&md) {
            m.set(md, Some(r.mahalanobis(x)?));
        }
        if which.contains(&knn) && r.vectors.len() >= KNN_K {
            m.set(knn, Some(r.knn_distance(x, KNN_K)?));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests;
