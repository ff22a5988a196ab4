//! Robustness statistics over scored records: grouped AUC, random-intercept
//! odds ratios, quantile accuracy curves and DRS, bootstrap accuracy
//! distributions, and difficulty-ranked splits.

mod auc;
mod bootstrap;
mod glmm;
mod quantile;
pub mod report;
mod splits;

use serde::{Deserialize, Serialize};

pub use auc::{micro_auc, MicroAuc, TemplateAuc};
pub use bootstrap::{bootstrap_accuracy, Bootstrap, HistogramBin, DEFAULT_RESAMPLES};
pub use glmm::{fit_logistic, fit_odds_ratio, Exclusion, LogisticFit, OddsRatioFit, OddsRatioOptions, Scaling};
pub use quantile::{quantile_curve, BinSummary, QuantileCurve, DEFAULT_BINS};
pub use splits::{
    export_difficulty_splits, mixture_counts, part_sizes, select_mixture, SplitCandidate, SplitOptions, SplitPart, SplitRow,
    Splits,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no records")]
    Empty,
    #[error("template `{0}` has no records")]
    EmptyTemplate(String),
    #[error("non-finite metric value in template `{0}`")]
    NonFinite(String),
    #[error("every template was excluded: {0}")]
    NoIncludedTemplates(String),
    #[error("metric is constant over the included records")]
    ConstantMetric,
    #[error("complete separation: {0}")]
    Separation(String),
    #[error("odds-ratio fit did not converge after {iterations} iterations (max gradient {gradient:e})")]
    NonConvergence { iterations: usize, gradient: f64 },
    #[error("corpus is empty after filtering")]
    EmptyAfterFilter,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// One template's `(f, correct)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateGroup {
    pub template_id: String,
    pub records: Vec<(f64, bool)>,
}

impl TemplateGroup {
    pub fn new(template_id: impl Into<String>, records: Vec<(f64, bool)>) -> Self {
        Self {
            template_id: template_id.into(),
            records,
        }
    }

    /// Incorrect count.
    pub fn n0(&self) -> usize {
        self.records.iter().filter(|r| !r.1).count()
    }

    /// Correct count.
    pub fn n1(&self) -> usize {
        self.records.iter().filter(|r| r.1).count()
    }

    pub fn accuracy(&self) -> Option<f64> {
        (!self.records.is_empty()).then(|| self.n1() as f64 / self.records.len() as f64)
    }

    fn check_finite(&self) -> Result<(), AnalyticsError> {
        if self.records.iter().any(|r| !r.0.is_finite()) {
            return Err(AnalyticsError::NonFinite(self.template_id.clone()));
        }
        Ok(())
    }
}

/// Mean and standard deviations (population and sample) of a slice.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let pop = (ss / n).sqrt();
    let sample = if xs.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, pop, sample)
}

#[cfg(test)]
mod tests;
