//! Output-likelihood difficulty scores over per-token statistics.

use super::MetricsError;
use crate::gateway::TokenStat;

/// Top-k size used by self-certainty.
pub const SELF_CERTAINTY_K: usize = 50;

/// `exp(-mean(lp))`.
pub fn perplexity(tokens: &[TokenStat]) -> Result<f64, MetricsError> {
    if tokens.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    let mean = tokens.iter().map(|t| t.lp).sum::<f64>() / tokens.len() as f64;
    Ok((-mean).exp())
}

/// Mean of per-token entropies.
pub fn entropy(tokens: &[TokenStat]) -> Result<f64, MetricsError> {
    if tokens.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    Ok(tokens.iter().map(|t| t.ent).sum::<f64>() / tokens.len() as f64)
}

/// `-(1 / (L k)) * sum_t sum_{v in top-k} log(k * p_v)`, using the first `k`
/// top log-probabilities of each token.
pub fn self_certainty(tokens: &[TokenStat], k: usize) -> Result<f64, MetricsError> {
    if tokens.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    if k == 0 {
        return Err(MetricsError::TooFewTopK { needed: 1, found: 0 });
    }
    let ln_k = (k as f64).ln();
    let mut total = 0.0;
    for t in tokens {
        if t.topk.len() < k {
            return Err(MetricsError::TooFewTopK {
                needed: k,
                found: t.topk.len(),
            });
        }
        total += t.topk[..k].iter().map(|lp| ln_k + lp).sum::<f64>();
    }
    Ok(-total / (tokens.len() * k) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tok(lp: f64, ent: f64, topk: &[f64]) -> TokenStat {
        TokenStat {
            lp,
            ent,
            topk: topk.to_vec(),
        }
    }

    #[test]
    fn perplexity_examples() {
        assert_eq!(perplexity(&vec![tok(0.0, 0.0, &[0.0]); 3]).unwrap(), 1.0);
        let q = 0.25f64.ln();
        assert_relative_eq!(perplexity(&vec![tok(q, 0.0, &[q]); 4]).unwrap(), 4.0, epsilon = 1e-12);
        let seq = [tok(0.5f64.ln(), 0.0, &[0.0]), tok(0.25f64.ln(), 0.0, &[0.0])];
        // exp(-(ln 0.5 + ln 0.25) / 2) = 8^(1/2)
        assert_relative_eq!(perplexity(&seq).unwrap(), 8f64.sqrt(), epsilon = 1e-12);
        assert!(perplexity(&[]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&vec![tok(0.0, 0.0, &[0.0]); 2]).unwrap(), 0.0);
        assert_relative_eq!(entropy(&vec![tok(0.0, 4f64.ln(), &[0.0]); 3]).unwrap(), 4f64.ln());
        assert_eq!(entropy(&[tok(0.0, 0.5, &[0.0]), tok(0.0, 1.5, &[0.0])]).unwrap(), 1.0);
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn self_certainty_examples() {
        let half = 0.5f64.ln();
        assert_relative_eq!(self_certainty(&vec![tok(half, 0.0, &[half, half]); 3], 2).unwrap(), 0.0, epsilon = 1e-12);
        let one = [tok(0.8f64.ln(), 0.0, &[0.8f64.ln(), 0.2f64.ln()])];
        let oracle = -((2.0f64 * 0.8).ln() + (2.0f64 * 0.2).ln()) / 2.0;
        assert_relative_eq!(self_certainty(&one, 2).unwrap(), oracle, epsilon = 1e-12);
        assert_relative_eq!(oracle, 0.2231, epsilon = 1e-4);
        let doubled: Vec<_> = one.iter().chain(one.iter()).cloned().collect();
        assert_relative_eq!(self_certainty(&doubled, 2).unwrap(), self_certainty(&one, 2).unwrap());
        assert!(matches!(self_certainty(&one, 3), Err(MetricsError::TooFewTopK { .. })));
    }
}
