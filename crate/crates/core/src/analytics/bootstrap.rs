use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, AnalyticsError, TemplateGroup};
use crate::seed;

pub const DEFAULT_RESAMPLES: usize = 1000;
const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    /// Equal-width bins on [0, 1]; the last bin is closed.
    pub histogram: Vec<HistogramBin>,
}

/// Accuracy distribution over resamples that draw one record uniformly from
/// every template.
///
/// Resample `r` draws from its own stream `(seed, r)`, so values do not
/// depend on how resamples are spread over threads. Templates are visited in
/// id order.
pub fn bootstrap_accuracy(groups: &[TemplateGroup], resamples: usize, seed: u64) -> Result<Bootstrap, AnalyticsError> {
    if groups.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    if resamples == 0 {
        return Err(AnalyticsError::InvalidArgument("resamples must be at least 1".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.records.is_empty()) {
        return Err(AnalyticsError::EmptyTemplate(g.template_id.clone()));
    }
    let mut ordered: Vec<&TemplateGroup> = groups.iter().collect();
    ordered.sort_by(|a, b| a.template_id.cmp(&b.template_id));
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed, &["bootstrap", &r.to_string()]);
            let correct = ordered
                .iter()
                .filter(|g| g.records[rng.random_range(0..g.records.len())].1)
                .count();
            correct as f64 / ordered.len() as f64
        })
        .collect();
    let (mean, _, std) = mean_std(&values);
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lo: i as f64 / HISTOGRAM_BINS as f64,
            hi: (i + 1) as f64 / HISTOGRAM_BINS as f64,
            count: 0,
        })
        .collect();
    for v in &values {
        let i = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[i].count += 1;
    }
    Ok(Bootstrap {
        values,
        mean,
        std,
        histogram,
    })
}
