use serde::{Deserialize, Serialize};

use super::{mean_std, AnalyticsError, TemplateGroup};

pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    /// 0-based, increasing difficulty.
    pub bin: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Mean over templates of the per-template bin accuracy.
    pub accuracy: f64,
    /// Sample standard deviation of the per-template accuracies.
    pub std: f64,
    pub stderr: f64,
    /// Records summed over templates.
    pub count: usize,
    pub templates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub n_bins: usize,
    pub bins: Vec<BinSummary>,
    /// Mean of the bin accuracies: the area under the curve with unit-spaced bins.
    pub drs: f64,
    /// Templates with fewer records than bins, binned coarser and stretched
    /// over the global bins.
    pub flagged: Vec<String>,
}

/// Splits `n` ranked items into `k` contiguous parts whose sizes differ by
/// at most one; the lower parts take the remainder.
pub(crate) fn contiguous_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Bins each template by the metric into `n_bins` near-equal quantile bins
/// (lowest metric first), then averages bin accuracy across templates.
///
/// A template with `m < n_bins` records gets `m` bins, and global bin `q`
/// reads its bin `floor((q + 0.5) * m / n_bins)`.
pub fn quantile_curve(groups: &[TemplateGroup], n_bins: usize) -> Result<QuantileCurve, AnalyticsError> {
    if n_bins == 0 {
        return Err(AnalyticsError::InvalidArgument("n_bins must be at least 1".into()));
    }
    if groups.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let mut flagged = Vec::new();
    // per_template[j][q] = (accuracy, count, f_min, f_max) of global bin q.
    let mut per_template = Vec::with_capacity(groups.len());
    for g in groups {
        if g.records.is_empty() {
            return Err(AnalyticsError::EmptyTemplate(g.template_id.clone()));
        }
        g.check_finite()?;
        let mut sorted = g.records.clone();
        // Stable: ties keep input order.
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = n_bins.min(sorted.len());
        if m < n_bins {
            flagged.push(g.template_id.clone());
        }
        let mut local = Vec::with_capacity(m);
        let mut start = 0;
        for size in contiguous_sizes(sorted.len(), m) {
            let chunk = &sorted[start..start + size];
            start += size;
            let correct = chunk.iter().filter(|r| r.1).count();
            local.push((correct as f64 / size as f64, size, chunk[0].0, chunk[size - 1].0));
        }
        let global: Vec<_> = (0..n_bins)
            .map(|q| {
                let b = if m == n_bins { q } else { ((2 * q + 1) * m) / (2 * n_bins) };
                local[b]
            })
            .collect();
        per_template.push(global);
    }

    let t = per_template.len();
    let bins: Vec<BinSummary> = (0..n_bins)
        .map(|q| {
            let accs: Vec<f64> = per_template.iter().map(|p| p[q].0).collect();
            let (accuracy, _, std) = mean_std(&accs);
            BinSummary {
                bin: q,
                f_min: per_template.iter().map(|p| p[q].2).fold(f64::INFINITY, f64::min),
                f_max: per_template.iter().map(|p| p[q].3).fold(f64::NEG_INFINITY, f64::max),
                accuracy,
                std,
                stderr: std / (t as f64).sqrt(),
                count: per_template.iter().map(|p| p[q].1).sum(),
                templates: t,
            }
        })
        .collect();
    let drs = bins.iter().map(|b| b.accuracy).sum::<f64>() / n_bins as f64;
    Ok(QuantileCurve {
        n_bins,
        bins,
        drs,
        flagged,
    })
}
