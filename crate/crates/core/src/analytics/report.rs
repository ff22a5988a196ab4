//! Flat report tables. Every table serializes to CSV and to JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{fit_odds_ratio, micro_auc, Bootstrap, OddsRatioOptions, QuantileCurve, TemplateGroup};
use crate::metrics::MetricKind;

/// One metric's discrimination on one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucOrRow {
    pub corpus: String,
    pub metric: String,
    pub span: String,
    pub auc_micro: Option<f64>,
    pub or_point: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub beta1: Option<f64>,
    pub se_beta1: Option<f64>,
    pub random_intercept_variance: Option<f64>,
    pub included_templates: usize,
    pub excluded_templates: usize,
    /// Why a column is empty, if one is.
    pub note: String,
}

/// AUC and odds ratio of `metric`; fit failures land in `note` rather than
/// failing the whole table.
pub fn auc_or_row(corpus: &str, metric: MetricKind, groups: &[TemplateGroup], opts: &OddsRatioOptions) -> AucOrRow {
    let mut notes = Vec::new();
    let auc = match micro_auc(groups) {
        Ok(a) => {
            notes.extend(a.reason.clone());
            a.auc_micro
        }
        Err(e) => {
            notes.push(format!("auc: {e}"));
            None
        }
    };
    let mut row = AucOrRow {
        corpus: corpus.to_string(),
        metric: metric.name().to_string(),
        span: metric.span().to_string(),
        auc_micro: auc,
        or_point: None,
        ci_lo: None,
        ci_hi: None,
        beta1: None,
        se_beta1: None,
        random_intercept_variance: None,
        included_templates: 0,
        excluded_templates: 0,
        note: String::new(),
    };
    match fit_odds_ratio(groups, opts) {
        Ok(fit) => {
            row.or_point = Some(fit.or_point);
            row.ci_lo = Some(fit.ci95.0);
            row.ci_hi = Some(fit.ci95.1);
            row.beta1 = Some(fit.beta1);
            row.se_beta1 = Some(fit.se_beta1);
            row.random_intercept_variance = Some(fit.random_intercept_variance);
            row.included_templates = fit.included_templates.len();
            row.excluded_templates = fit.excluded_templates.len();
            if fit.fixed_effects_only {
                notes.push("single template: fixed effects only".into());
            }
        }
        Err(e) => notes.push(format!("odds ratio: {e}")),
    }
    row.note = notes.join("; ");
    row
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub corpus: String,
    pub bin: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub accuracy: f64,
    pub std: f64,
    pub stderr: f64,
    pub count: usize,
    pub templates: usize,
}

pub fn quantile_rows(corpus: &str, curve: &QuantileCurve) -> Vec<QuantileRow> {
    curve
        .bins
        .iter()
        .map(|b| QuantileRow {
            corpus: corpus.to_string(),
            bin: b.bin,
            f_min: b.f_min,
            f_max: b.f_max,
            accuracy: b.accuracy,
            std: b.std,
            stderr: b.stderr,
            count: b.count,
            templates: b.templates,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrsRow {
    pub corpus: String,
    pub drs: f64,
    pub n_bins: usize,
    pub templates: usize,
    /// Templates binned with fewer bins, `;`-separated.
    pub flagged: String,
}

pub fn drs_row(corpus: &str, curve: &QuantileCurve) -> DrsRow {
    DrsRow {
        corpus: corpus.to_string(),
        drs: curve.drs,
        n_bins: curve.n_bins,
        templates: curve.bins.first().map_or(0, |b| b.templates),
        flagged: curve.flagged.join(";"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub corpus: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

pub fn histogram_rows(corpus: &str, b: &Bootstrap) -> Vec<HistogramRow> {
    b.histogram
        .iter()
        .map(|h| HistogramRow {
            corpus: corpus.to_string(),
            lo: h.lo,
            hi: h.hi,
            count: h.count,
        })
        .collect()
}

/// Per-template error rate of the searched corpus against the random baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateRow {
    pub template_id: String,
    pub search_n: usize,
    pub search_error_rate: Option<f64>,
    pub baseline_n: usize,
    pub baseline_error_rate: Option<f64>,
}

pub fn error_rate_rows(search: &[TemplateGroup], baseline: &[TemplateGroup]) -> Vec<ErrorRateRow> {
    let rate = |g: &TemplateGroup| g.accuracy().map(|a| 1.0 - a);
    let mut rows: BTreeMap<&str, ErrorRateRow> = BTreeMap::new();
    for g in search {
        let r = rows.entry(&g.template_id).or_insert_with(|| empty_row(&g.template_id));
        r.search_n = g.records.len();
        r.search_error_rate = rate(g);
    }
    for g in baseline {
        let r = rows.entry(&g.template_id).or_insert_with(|| empty_row(&g.template_id));
        r.baseline_n = g.records.len();
        r.baseline_error_rate = rate(g);
    }
    rows.into_values().collect()
}

fn empty_row(id: &str) -> ErrorRateRow {
    ErrorRateRow {
        template_id: id.to_string(),
        search_n: 0,
        search_error_rate: None,
        baseline_n: 0,
        baseline_error_rate: None,
    }
}

/// CSV with a header row; empty cells for absent values.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}
