//! Two-stage beam search over a template's variation space, reference
//! probing and the paired random baseline.

mod baseline;
mod beam;
mod probe;
mod scorer;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::gateway::GatewayError;
use crate::metrics::{text_tokens, MetricKind, MetricVector, MetricsError, ReferenceModel};
use crate::store::StoreError;
use crate::template::{PromptError, TemplateError, Variation, DEFAULT_PER_SLOT_CAP};

pub use baseline::random_baseline;
pub use beam::{run_beam_search, BeamEntry, BeamState, Checkpoint, IterationSummary, RefreshEvent};
pub use probe::{probe_references, ProbeOptions, ProbeReport};
pub use scorer::{Observation, Scorer};

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("run store: {0}")]
    Store(#[from] StoreError),
    #[error("template `{template}` has no feasible variation: {reason}")]
    Infeasible { template: String, reason: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cannot resume: {0}")]
    Resume(String),
}

impl SearchError {
    pub fn is_gateway(&self) -> bool {
        matches!(self, SearchError::Gateway(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchParams {
    /// Iterations `T`.
    pub iterations: usize,
    /// Branching factor `b`: candidates sent to exact scoring per beam entry.
    pub branching: usize,
    /// Beam width `w`.
    pub width: usize,
    pub rho_expl: f64,
    pub rho_sel: f64,
    /// Alternatives tried per slot when generating neighbors.
    pub per_slot_cap: usize,
    /// Refit both references after this many newly correct responses; 0 disables.
    pub goalpost_refresh: usize,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            iterations: 15,
            branching: 16,
            width: 16,
            rho_expl: 0.2,
            rho_sel: 0.4,
            per_slot_cap: DEFAULT_PER_SLOT_CAP,
            goalpost_refresh: 50,
            seed: 0,
        }
    }
}

// Guards against 0.29 * 100 = 28.999999999999996 and the like.
const ROUNDING_SLACK: f64 = 1e-9;

impl SearchParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.branching == 0 || self.width == 0 {
            return Err(SearchError::InvalidParams("branching and width must be at least 1".into()));
        }
        for (name, v) in [("rho_expl", self.rho_expl), ("rho_sel", self.rho_sel)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SearchError::InvalidParams(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// `floor(rho_sel * b)` random picks per beam entry.
    pub fn random_picks(&self) -> usize {
        ((self.rho_sel * self.branching as f64) + ROUNDING_SLACK).floor() as usize
    }

    /// `ceil((1 - rho_sel) * b)` top picks; with the random picks this is exactly `b`.
    pub fn top_picks(&self) -> usize {
        self.branching - self.random_picks().min(self.branching)
    }

    /// `ceil(rho_expl * |P|)` uniform samples added to `|P|` neighbors.
    pub fn exploration_samples(&self, neighbors: usize) -> usize {
        ((self.rho_expl * neighbors as f64) - ROUNDING_SLACK).ceil().max(0.0) as usize
    }
}

/// How the cheap pre-filter score `f~` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheapScore {
    /// Mahalanobis distance of the problem's mean input embedding.
    EmbeddingMahalanobis,
    /// The exact score itself (a full model call per candidate).
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    CheapOnly,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Neighbor,
    Exploration,
    Random,
}

/// One scored variation as stored in the record log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub variation: Variation,
    pub response: String,
    pub extracted_answer: Option<f64>,
    pub correct: bool,
    pub truncated: bool,
    pub metrics: MetricVector,
    /// The search objective: `md_h`, or `ld_min` against traces in fallback mode.
    pub score: f64,
    pub stage: Stage,
    pub origin: Origin,
    pub iteration: usize,
    pub hidden_ref: String,
    pub embedding_ref: String,
    /// Pooled vectors kept so stored scores can be recomputed from the
    /// reference snapshots named above.
    pub hidden_mean: Vec<f64>,
    pub embedding: Vec<f64>,
}

impl ScoredRecord {
    pub fn key(&self) -> &str {
        &self.variation.canonical_key
    }
}

/// The hidden and embedding references a run scores against.
///
/// In fallback mode both are text-only: the hidden side holds ground-truth
/// traces and the embedding side the matching problem texts, and both
/// scores become `ld_min` against those texts.
#[derive(Debug, Clone)]
pub struct References {
    pub hidden: ReferenceModel,
    pub embedding: ReferenceModel,
    pub fallback: bool,
    hidden_tokens: Vec<Vec<String>>,
    embedding_tokens: Vec<Vec<String>>,
}

impl References {
    pub fn new(hidden: ReferenceModel, embedding: ReferenceModel) -> Self {
        let fallback = hidden.gaussian.is_none() || embedding.gaussian.is_none();
        let hidden_tokens = hidden.texts.iter().map(|t| text_tokens(t)).collect();
        let embedding_tokens = embedding.texts.iter().map(|t| text_tokens(t)).collect();
        Self {
            hidden,
            embedding,
            fallback,
            hidden_tokens,
            embedding_tokens,
        }
    }

    pub fn hidden_tokens(&self) -> &[Vec<String>] {
        &self.hidden_tokens
    }

    pub fn embedding_tokens(&self) -> &[Vec<String>] {
        &self.embedding_tokens
    }

    /// The metric the search maximizes.
    pub fn objective(&self) -> MetricKind {
        if self.fallback {
            MetricKind::LdMin
        } else {
            MetricKind::MdH
        }
    }

    /// The requested metrics that these references can support, plus the objective.
    pub fn supported(&self, requested: &BTreeSet<MetricKind>) -> BTreeSet<MetricKind> {
        let mut out: BTreeSet<MetricKind> = requested
            .iter()
            .copied()
            .filter(|k| !self.fallback || !matches!(k, MetricKind::MdH | MetricKind::KnnH | MetricKind::MdE | MetricKind::KnnE))
            .filter(|k| !k.is_levenshtein() || !self.hidden.texts.is_empty())
            .collect();
        out.insert(self.objective());
        out
    }
}

/// Sort key shared by every top-k selection: score descending, then key.
pub(crate) fn rank_order(a: (f64, &str), b: (f64, &str)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}
