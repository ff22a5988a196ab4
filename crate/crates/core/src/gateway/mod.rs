//! Model access: response profiles, answer extraction and grading, a
//! deterministic synthetic model, and an HTTP client for the profile
//! protocol.
//!
//! Wire protocol (JSON bodies):
//!
//! - `POST /v1/profile` with `{prompt, layer_fraction, topk, max_tokens}`
//!   returns `{model_id, layer_index, text, tokens: [{lp, ent, topk}],
//!   hidden_mean, input_embedding_mean, truncated}`.
//! - `GET /v1/info` returns `{model_id, layer_count, hidden_dim,
//!   embedding_dim, vocab_size}`.
//!
//! Both directions carry the [`PROTOCOL_HEADER`] with [`PROTOCOL_VERSION`].
//! A request with `max_tokens = 0` asks only for the prompt embedding; the
//! response then has no tokens and an empty `hidden_mean`.

mod extract;
mod http;
mod synthetic;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::template::{SymbolicTemplate, Variation};

pub use extract::{extract_answer, grade, within_tolerance, GradedOutcome, ABS_TOLERANCE, REL_TOLERANCE};
pub use http::{HttpConfig, HttpGateway, AUTH_TOKEN_ENV};
pub use synthetic::{difficulty, DifficultyField, SyntheticConfig, SyntheticModel};

pub const PROTOCOL_HEADER: &str = "X-Profile-Protocol";
pub const PROTOCOL_VERSION: &str = "1";
/// Top-k log-probabilities carried per token.
pub const DEFAULT_TOPK: usize = 50;
pub const DEFAULT_LAYER_FRACTION: f64 = 2.0 / 3.0;
pub const DEFAULT_MAX_TOKENS: usize = 1024;
pub const DEFAULT_CONCURRENCY: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStat {
    /// Log-probability of the emitted token.
    pub lp: f64,
    /// Entropy of the full next-token distribution (nats).
    pub ent: f64,
    /// Top-k log-probabilities, descending.
    pub topk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseProfile {
    pub model_id: String,
    pub layer_index: usize,
    pub text: String,
    pub tokens: Vec<TokenStat>,
    /// Mean hidden state over output tokens at `layer_index`.
    pub hidden_mean: Vec<f64>,
    /// Mean input embedding over prompt tokens.
    pub input_embedding_mean: Vec<f64>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub layer_count: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub vocab_size: usize,
}

impl ModelInfo {
    pub fn layer_index(&self, layer_fraction: f64) -> usize {
        layer_index(layer_fraction, self.layer_count)
    }
}

/// `round(fraction * layer_count)`, clamped to `[1, layer_count]`.
pub fn layer_index(layer_fraction: f64, layer_count: usize) -> usize {
    ((layer_fraction * layer_count as f64).round() as usize).clamp(1, layer_count.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub layer_fraction: f64,
    pub topk: usize,
    pub max_tokens: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            layer_fraction: DEFAULT_LAYER_FRACTION,
            topk: DEFAULT_TOPK,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// The request body of `POST /v1/profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRequest {
    pub prompt: String,
    pub layer_fraction: f64,
    pub topk: usize,
    pub max_tokens: usize,
}

/// One model call. Remote backends only see `prompt`; the synthetic model
/// reads the variation directly.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub prompt: &'a str,
    pub template: &'a SymbolicTemplate,
    pub variation: &'a Variation,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("protocol error: empty prompt")]
    EmptyPrompt,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol version mismatch: expected {expected}, server sent {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("server returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

impl GatewayError {
    /// Transport failures and server-side overload are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

pub trait Gateway: Send + Sync {
    fn info(&self) -> Result<ModelInfo, GatewayError>;

    /// Greedy generation with token statistics and pooled vectors.
    fn profile(&self, q: &Query, params: &GenerationParams) -> Result<ResponseProfile, GatewayError>;

    /// Mean input embedding of the prompt, without generating.
    fn embed(&self, q: &Query, params: &GenerationParams) -> Result<Vec<f64>, GatewayError> {
        let params = GenerationParams {
            max_tokens: 0,
            ..params.clone()
        };
        Ok(self.profile(q, &params)?.input_embedding_mean)
    }

    /// Upper bound on in-flight requests.
    fn concurrency(&self) -> usize {
        DEFAULT_CONCURRENCY
    }
}

/// Bounded fan-out over a gateway. Results come back in input order.
pub struct Dispatcher {
    pool: rayon::ThreadPool,
}

impl Dispatcher {
    pub fn new(concurrency: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency.max(1))
            .thread_name(|i| format!("gateway-{i}"))
            .build()
            .expect("thread pool");
        Self { pool }
    }

    pub fn for_gateway(gw: &dyn Gateway) -> Self {
        Self::new(gw.concurrency())
    }

    pub fn profile_all(
        &self,
        gw: &dyn Gateway,
        queries: &[Query],
        params: &GenerationParams,
    ) -> Vec<Result<ResponseProfile, GatewayError>> {
        self.pool.install(|| queries.par_iter().map(|q| gw.profile(q, params)).collect())
    }

    pub fn embed_all(
        &self,
        gw: &dyn Gateway,
        queries: &[Query],
        params: &GenerationParams,
    ) -> Vec<Result<Vec<f64>, GatewayError>> {
        self.pool.install(|| queries.par_iter().map(|q| gw.embed(q, params)).collect())
    }
}

/// Checks the structural invariants of a received profile.
///
/// `dims` is `(hidden_dim, embedding_dim)` when known for this model.
pub fn validate_profile(p: &ResponseProfile, topk: usize, dims: Option<(usize, usize)>) -> Result<(), GatewayError> {
    let bad = |m: String| Err(GatewayError::InvalidProfile(m));
    for (i, t) in p.tokens.iter().enumerate() {
        if t.topk.len() != topk {
            return bad(format!("token {i}: {} top-k entries, expected {topk}", t.topk.len()));
        }
        if t.topk.iter().any(|v| !v.is_finite() && *v != f64::NEG_INFINITY) || t.topk.iter().any(|v| *v > 1e-9) {
            return bad(format!("token {i}: top-k values must be log-probabilities"));
        }
        if t.topk.windows(2).any(|w| w[0] < w[1]) {
            return bad(format!("token {i}: top-k not sorted descending"));
        }
        if !(t.ent.is_finite() && t.ent >= 0.0) {
            return bad(format!("token {i}: entropy {} is not a non-negative number", t.ent));
        }
        if !t.lp.is_finite() && t.lp != f64::NEG_INFINITY {
            return bad(format!("token {i}: emitted log-probability is not a number"));
        }
        if let Some(top) = t.topk.first() {
            if t.lp > top + 1e-6 {
                return bad(format!("token {i}: emitted log-probability {} exceeds top-1 {}", t.lp, top));
            }
        }
    }
    if p.hidden_mean.iter().chain(&p.input_embedding_mean).any(|v| !v.is_finite()) {
        return bad("pooled vectors contain non-finite values".into());
    }
    if p.tokens.is_empty() != p.hidden_mean.is_empty() {
        return bad("hidden_mean must be present exactly when tokens were emitted".into());
    }
    if let Some((h, e)) = dims {
        if !p.hidden_mean.is_empty() && p.hidden_mean.len() != h {
            return bad(format!("hidden_mean has {} dims, model reports {h}", p.hidden_mean.len()));
        }
        if p.input_embedding_mean.len() != e {
            return bad(format!(
                "input_embedding_mean has {} dims, model reports {e}",
                p.input_embedding_mean.len()
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> ResponseProfile {
        ResponseProfile {
            model_id: "m".into(),
            layer_index: 21,
            text: "1 + 1 = 2\n#### 2".into(),
            tokens: vec![TokenStat {
                lp: -0.1,
                ent: 0.4,
                topk: vec![-0.1, -2.5, -3.0],
            }],
            hidden_mean: vec![0.1, -0.2],
            input_embedding_mean: vec![1.0, 2.0, 3.0],
            truncated: false,
        }
    }

    #[test]
    fn layer_rule() {
        assert_eq!(layer_index(2.0 / 3.0, 32), 21);
        assert_eq!(layer_index(1.0, 32), 32);
        assert_eq!(layer_index(0.001, 32), 1);
    }

    #[test]
    fn accepts_well_formed_profile() {
        validate_profile(&profile(), 3, Some((2, 3))).unwrap();
    }

    #[test]
    fn rejects_invariant_violations() {
        let mut p = profile();
        p.tokens[0].topk = vec![-3.0, -2.5, -0.1];
        assert!(validate_profile(&p, 3, None).is_err());
        let mut p = profile();
        p.tokens[0].ent = -0.1;
        assert!(validate_profile(&p, 3, None).is_err());
        let mut p = profile();
        p.tokens[0].lp = 0.0;
        assert!(validate_profile(&p, 3, None).is_err());
        assert!(validate_profile(&profile(), 50, None).is_err());
        assert!(validate_profile(&profile(), 3, Some((4, 3))).is_err());
    }

    #[test]
    fn wire_round_trip_is_identity() {
        let p = profile();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"lp\"") && json.contains("\"ent\"") && json.contains("\"topk\""));
        assert_eq!(serde_json::from_str::<ResponseProfile>(&json).unwrap(), p);
    }

    #[test]
    fn retry_classes() {
        assert!(GatewayError::Transport("reset".into()).is_retryable());
        assert!(GatewayError::Status { status: 503, body: String::new() }.is_retryable());
        assert!(!GatewayError::Status { status: 400, body: String::new() }.is_retryable());
        assert!(!GatewayError::EmptyPrompt.is_retryable());
    }
}
