use num_rational::BigRational;
use num_traits::Signed;
use rand::Rng;
use rand_distr::StandardNormal;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{layer_index, GatewayError, GenerationParams, Gateway, ModelInfo, Query, ResponseProfile, TokenStat};
use crate::seed;
use crate::template::{format_answer, SlotKind, SymbolicTemplate, Variation};

/// Shape of the per-template difficulty field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultyField {
    /// Extra factor applied to text slots.
    pub text_weight: f64,
    /// Slots are ranked in a seeded order; the r-th slot weighs `decay^r`.
    pub decay: f64,
}

impl Default for DifficultyField {
    fn default() -> Self {
        Self {
            text_weight: 0.25,
            decay: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub model_id: String,
    pub seed: u64,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub layer_count: usize,
    pub vocab_size: usize,
    pub difficulty_field: DifficultyField,
    /// Responses are correct exactly when difficulty is below this.
    pub error_threshold: f64,
    pub drift_scale: f64,
    /// Noise scale of the hidden mean, relative to the drift.
    pub hidden_noise: f64,
    /// Noise scale of the input embedding, relative to the drift.
    pub embedding_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            model_id: "synthetic".into(),
            seed: 0,
            hidden_dim: 6,
            embedding_dim: 6,
            layer_count: 32,
            vocab_size: 32_000,
            difficulty_field: DifficultyField::default(),
            error_threshold: 0.5,
            drift_scale: 1.0,
            hidden_noise: 0.02,
            embedding_noise: 0.15,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.error_threshold) {
            return Err(format!("error_threshold {} outside [0, 1]", self.error_threshold));
        }
        if !(self.drift_scale >= 0.0 && self.hidden_noise >= 0.0 && self.embedding_noise >= 0.0) {
            return Err("drift_scale and noise scales must be non-negative".into());
        }
        if self.hidden_dim == 0 || self.embedding_dim == 0 || self.layer_count == 0 {
            return Err("dimensions and layer_count must be positive".into());
        }
        if self.vocab_size <= 64 {
            return Err("vocab_size must exceed 64".into());
        }
        let f = &self.difficulty_field;
        if !(f.text_weight >= 0.0 && f.decay > 0.0 && f.decay <= 1.0) {
            return Err("difficulty_field needs text_weight >= 0 and decay in (0, 1]".into());
        }
        Ok(())
    }
}

/// Difficulty `g` in (0, 1): a weighted mean over slots of each value's
/// midpoint position `(index + 0.5) / n` in its domain, read ascending or
/// descending per slot as fixed by the seed. Weights decay geometrically in a
/// seeded slot order, so one slot sets the coarse level and the others refine
/// it, which keeps `g` spread out rather than bunched around 0.5.
pub fn difficulty(cfg: &SyntheticConfig, t: &SymbolicTemplate, v: &Variation) -> f64 {
    let f = &cfg.difficulty_field;
    let mut order: Vec<(u64, usize)> = t
        .slots
        .iter()
        .enumerate()
        .map(|(i, s)| (seed::derive(cfg.seed, &[&t.id, &s.name, "rank"]), i))
        .collect();
    order.sort_unstable();
    let (mut num, mut den) = (0.0, 0.0);
    for (rank, &(_, i)) in order.iter().enumerate() {
        let s = &t.slots[i];
        let Some(sv) = v.assignment.get(&s.name) else { continue };
        let n = s.domain.len() as f64;
        let mut pos = (sv.index as f64 + 0.5) / n;
        if seed::unit(cfg.seed, &[&t.id, &s.name, "direction"]) < 0.5 {
            pos = 1.0 - pos;
        }
        let mut w = f.decay.powi(rank as i32);
        if s.kind == SlotKind::Text {
            w *= f.text_weight;
        }
        num += w * pos;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.5
    }
}

/// Deterministic stand-in for a language model. Correctness is exactly the
/// event `g < error_threshold`; pooled vectors follow a fixed per-template
/// curve parameterized by `g`.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    cfg: SyntheticConfig,
}

impl SyntheticModel {
    pub fn new(cfg: SyntheticConfig) -> Result<Self, String> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    fn gaussian(&self, labels: &[&str], d: usize) -> Vec<f64> {
        let mut rng = seed::rng(self.cfg.seed, labels);
        (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// `base + drift_scale * (sum_j g^j u_j + noise * xi)` for `j = 1..=d`,
    /// with seeded unit directions `u_j`. The powers of `g` bend the
    /// trajectory so every coordinate carries some difficulty signal.
    fn pooled(&self, t: &SymbolicTemplate, v: &Variation, g: f64, space: &str, d: usize, noise: f64) -> Vec<f64> {
        let mut out = self.gaussian(&[&t.id, space, "base"], d);
        let mut power = 1.0;
        for j in 1..=d {
            power *= g;
            let mut u = self.gaussian(&[&t.id, space, "drift", &j.to_string()], d);
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for (o, x) in out.iter_mut().zip(&mut u) {
                *o += self.cfg.drift_scale * power * *x / norm;
            }
        }
        let xi = self.gaussian(&[&t.id, &v.canonical_key, space, "noise"], d);
        for (o, x) in out.iter_mut().zip(xi) {
            *o += self.cfg.drift_scale * noise * x;
        }
        out
    }

    /// Response text for a variation: the ground-truth trace and answer when
    /// correct, otherwise the trace with the answer replaced by a wrong one.
    pub fn response_text(&self, t: &SymbolicTemplate, v: &Variation) -> String {
        let truth = format_answer(&v.ground_truth);
        let trace = t
            .render_ground_truth_reasoning(v)
            .unwrap_or_else(|_| format!("The answer is {truth}."));
        if difficulty(&self.cfg, t, v) < self.cfg.error_threshold {
            return format!("{trace}\n#### {truth}");
        }
        let wrong = format_answer(&wrong_answer(&v.ground_truth));
        let numeral = Regex::new(r"\d+(?:\.\d+)?").unwrap();
        let bare_truth = truth.trim_start_matches('-');
        let bare_wrong = wrong.trim_start_matches('-');
        let corrupted = numeral.replace_all(&trace, |c: &regex::Captures| {
            if &c[0] == bare_truth {
                bare_wrong.to_string()
            } else {
                c[0].to_string()
            }
        });
        format!("{corrupted}\n#### {wrong}")
    }

    fn token_stats(&self, key: &str, g: f64, count: usize, k: usize) -> Vec<TokenStat> {
        let mut rng = seed::rng(self.cfg.seed, &[key, "tokens"]);
        let tail_slots = (self.cfg.vocab_size - k) as f64;
        (0..count)
            .map(|_| {
                let jitter: f64 = rng.random();
                let p1 = (0.98 - 0.6 * g - 0.2 * jitter).clamp(0.05, 0.99);
                let rest = 1.0 - p1;
                let q: f64 = 0.7;
                // 90% of the remainder spreads geometrically over the other
                // top-k entries, the rest uniformly over the vocabulary tail.
                let top_share = if k > 1 { 0.9 * rest } else { 0.0 };
                let tail = rest - top_share;
                let norm = (1.0 - q.powi(k as i32 - 1)) / (1.0 - q);
                let mut probs = vec![p1];
                probs.extend((0..k - 1).map(|j| top_share * q.powi(j as i32) / norm));
                let mut ent = -probs.iter().map(|p| p * p.ln()).sum::<f64>();
                if tail > 0.0 {
                    ent -= tail * (tail / tail_slots).ln();
                }
                let mut topk: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
                topk.sort_by(|a, b| b.total_cmp(a));
                TokenStat {
                    lp: topk[0],
                    ent: ent.max(0.0),
                    topk,
                }
            })
            .collect()
    }
}

/// `truth + floor(|truth| / 2) + 1`: never within grading tolerance.
fn wrong_answer(truth: &BigRational) -> BigRational {
    let two = BigRational::from_integer(2.into());
    truth + (truth.abs() / two).floor() + BigRational::from_integer(1.into())
}

impl Gateway for SyntheticModel {
    fn info(&self) -> Result<ModelInfo, GatewayError> {
        Ok(ModelInfo {
            model_id: self.cfg.model_id.clone(),
            layer_count: self.cfg.layer_count,
            hidden_dim: self.cfg.hidden_dim,
            embedding_dim: self.cfg.embedding_dim,
            vocab_size: self.cfg.vocab_size,
        })
    }

    fn profile(&self, q: &Query, params: &GenerationParams) -> Result<ResponseProfile, GatewayError> {
        if q.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        if params.topk == 0 || params.topk >= self.cfg.vocab_size {
            return Err(GatewayError::Malformed(format!("topk {} out of range", params.topk)));
        }
        let (t, v) = (q.template, q.variation);
        let g = difficulty(&self.cfg, t, v);
        let input_embedding_mean = self.pooled(t, v, g, "embedding", self.cfg.embedding_dim, self.cfg.embedding_noise);
        if params.max_tokens == 0 {
            return Ok(ResponseProfile {
                model_id: self.cfg.model_id.clone(),
                layer_index: layer_index(params.layer_fraction, self.cfg.layer_count),
                text: String::new(),
                tokens: Vec::new(),
                hidden_mean: Vec::new(),
                input_embedding_mean,
                truncated: false,
            });
        }
        let mut text = self.response_text(t, v);
        let words: Vec<(usize, &str)> = text.split_whitespace().map(|w| (w.as_ptr() as usize - text.as_ptr() as usize, w)).collect();
        let truncated = words.len() > params.max_tokens;
        let count = words.len().min(params.max_tokens);
        if truncated {
            let (start, w) = words[count - 1];
            text.truncate(start + w.len());
        }
        Ok(ResponseProfile {
            model_id: self.cfg.model_id.clone(),
            layer_index: layer_index(params.layer_fraction, self.cfg.layer_count),
            tokens: self.token_stats(&v.canonical_key, g, count, params.topk),
            hidden_mean: self.pooled(t, v, g, "hidden", self.cfg.hidden_dim, self.cfg.hidden_noise),
            input_embedding_mean,
            text,
            truncated,
        })
    }
}
