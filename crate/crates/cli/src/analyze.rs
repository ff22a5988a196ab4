//! Corpus-level commands over finished runs: analysis tables and split export.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use varsearch::analytics::report::{
    auc_or_row, drs_row, error_rate_rows, histogram_rows, quantile_rows, to_csv, to_json, AucOrRow, DrsRow,
    HistogramRow, QuantileRow,
};
use varsearch::analytics::{
    bootstrap_accuracy, export_difficulty_splits, quantile_curve, select_mixture, Bootstrap, OddsRatioOptions,
    QuantileCurve, SplitCandidate, SplitOptions, TemplateGroup,
};
use varsearch::metrics::MetricKind;
use varsearch::search::ScoredRecord;
use varsearch::seed;
use varsearch::store::{write_json_file, MANIFEST};
use varsearch::template::{format_answer, SymbolicTemplate};

use crate::config::Settings;
use crate::error::CliError;
use crate::pipeline::{read_records, reference_keys, Manifest, Status, BASELINE, SEARCH};

pub const ANALYSIS_DIR: &str = "analysis";
pub const SPLITS_DIR: &str = "splits";

/// One corpus: a template's analyzable records, probe references removed.
#[derive(Debug, Default)]
pub struct Corpus {
    pub name: &'static str,
    pub by_template: BTreeMap<String, Vec<ScoredRecord>>,
}

impl Corpus {
    fn groups(&self, f: impl Fn(&ScoredRecord) -> Option<f64>) -> Vec<TemplateGroup> {
        self.by_template
            .iter()
            .map(|(id, rs)| TemplateGroup::new(id.clone(), rs.iter().filter_map(|r| f(r).map(|v| (v, r.correct))).collect()))
            .filter(|g| !g.records.is_empty())
            .collect()
    }
}

/// Search and baseline corpora of the given templates.
pub fn load_corpora(out: &Path, templates: &[&SymbolicTemplate]) -> Result<Vec<Corpus>, CliError> {
    let mut corpora = Vec::new();
    for name in [SEARCH, BASELINE] {
        let mut c = Corpus {
            name,
            by_template: BTreeMap::new(),
        };
        for t in templates {
            let Some(records) = read_records(out, &t.id, name)? else {
                continue;
            };
            let refs = reference_keys(out, &t.id)?;
            c.by_template
                .insert(t.id.clone(), records.into_iter().filter(|r| !refs.contains(r.key())).collect());
        }
        if !c.by_template.is_empty() {
            corpora.push(c);
        }
    }
    if corpora.iter().all(|c| c.name != SEARCH) {
        return Err(CliError::data("no finished search runs under the output directory"));
    }
    Ok(corpora)
}

#[derive(Debug, Serialize)]
struct BootstrapDoc<'a> {
    corpus: &'a str,
    seed: u64,
    #[serde(flatten)]
    bootstrap: &'a Bootstrap,
}

#[derive(Debug, Serialize)]
struct QuantileDoc<'a> {
    corpus: &'a str,
    #[serde(flatten)]
    curve: &'a QuantileCurve,
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    to_csv(rows).map_err(|e| CliError::data(format!("csv: {e}")))
}

/// Summary of an analysis run, for the terminal.
#[derive(Debug, Serialize)]
pub struct AnalysisSummary {
    pub corpora: Vec<String>,
    pub drs: BTreeMap<String, f64>,
    pub auc_md_h: BTreeMap<String, Option<f64>>,
    pub notes: Vec<String>,
}

/// Writes every report table under `<out>/analysis/`.
pub fn analyze(settings: &Settings, templates: &[&SymbolicTemplate]) -> Result<AnalysisSummary, CliError> {
    let out = settings.out()?;
    let seed = settings.seed()?;
    let corpora = load_corpora(out, templates)?;
    let dir = out.join(ANALYSIS_DIR);
    let a = &settings.analytics;
    let config = json!({
        "seed": seed,
        "templates": templates.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(),
        "metrics": settings.metrics.iter().map(|k| k.name()).collect::<Vec<_>>(),
        "analytics": a,
    });
    let mut manifest = Manifest::new("analyze", None, config);
    write_json_file(&dir.join(MANIFEST), &manifest)?;

    let or_opts = OddsRatioOptions {
        scaling: a.scaling,
        imbalance: a.imbalance,
        ..Default::default()
    };
    let metrics: Vec<MetricKind> = MetricKind::ALL.into_iter().filter(|k| settings.metrics.contains(k)).collect();
    let mut auc_rows: Vec<AucOrRow> = Vec::new();
    let mut q_rows: Vec<QuantileRow> = Vec::new();
    let mut q_docs = Vec::new();
    let mut drs_rows: Vec<DrsRow> = Vec::new();
    let mut hist_rows: Vec<HistogramRow> = Vec::new();
    let mut boots = Vec::new();
    let mut summary = AnalysisSummary {
        corpora: corpora.iter().map(|c| c.name.to_string()).collect(),
        drs: BTreeMap::new(),
        auc_md_h: BTreeMap::new(),
        notes: Vec::new(),
    };

    for c in &corpora {
        for &m in &metrics {
            let groups = c.groups(|r| r.metrics.get(m));
            if groups.is_empty() {
                summary.notes.push(format!("{}: no records carry {}", c.name, m.name()));
                continue;
            }
            let row = auc_or_row(c.name, m, &groups, &or_opts);
            if m == MetricKind::MdH {
                summary.auc_md_h.insert(c.name.to_string(), row.auc_micro);
            }
            auc_rows.push(row);
        }

        let by_md_h = c.groups(|r| r.metrics.md_h);
        let missing: Vec<&str> = c
            .by_template
            .keys()
            .filter(|id| !by_md_h.iter().any(|g| &g.template_id == *id))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            summary
                .notes
                .push(format!("{}: templates without md_h left out of quantile curves: {}", c.name, missing.join(", ")));
        }
        if !by_md_h.is_empty() {
            let curve = quantile_curve(&by_md_h, a.bins)?;
            q_rows.extend(quantile_rows(c.name, &curve));
            drs_rows.push(drs_row(c.name, &curve));
            summary.drs.insert(c.name.to_string(), curve.drs);
            q_docs.push((c.name, curve));
        }

        let outcomes = c.groups(|_| Some(0.0));
        if !outcomes.is_empty() {
            let boot_seed = seed::derive(seed, &["analyze", c.name]);
            let b = bootstrap_accuracy(&outcomes, a.resamples, boot_seed)?;
            hist_rows.extend(histogram_rows(c.name, &b));
            boots.push((c.name, boot_seed, b));
        }
    }

    let q_json: Vec<QuantileDoc> = q_docs.iter().map(|(n, c)| QuantileDoc { corpus: n, curve: c }).collect();
    let b_json: Vec<BootstrapDoc> = boots
        .iter()
        .map(|(n, s, b)| BootstrapDoc {
            corpus: n,
            seed: *s,
            bootstrap: b,
        })
        .collect();
    let outcome_groups = |name: &str| {
        corpora
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.groups(|_| Some(0.0)))
            .unwrap_or_default()
    };
    let errors = error_rate_rows(&outcome_groups(SEARCH), &outcome_groups(BASELINE));

    let files: Vec<(&str, String)> = vec![
        ("auc_or.csv", csv(&auc_rows)?),
        ("auc_or.json", to_json(&auc_rows)),
        ("quantile.csv", csv(&q_rows)?),
        ("quantile.json", to_json(&q_json)),
        ("drs.csv", csv(&drs_rows)?),
        ("drs.json", to_json(&drs_rows)),
        ("bootstrap.csv", csv(&hist_rows)?),
        ("bootstrap.json", to_json(&b_json)),
        ("error_rates.csv", csv(&errors)?),
        ("error_rates.json", to_json(&errors)),
    ];
    for (name, text) in &files {
        write_text(&dir.join(name), text)?;
    }
    manifest.outputs = files.iter().map(|(n, _)| n.to_string()).collect();
    manifest.notes = summary.notes.clone();
    manifest.status = Status::Complete;
    write_json_file(&dir.join(MANIFEST), &manifest)?;
    Ok(summary)
}

/// Export summary for the terminal.
#[derive(Debug, Serialize)]
pub struct ExportSummary {
    pub pool_size: usize,
    pub parts: BTreeMap<String, usize>,
    pub mixture: Option<usize>,
}

/// Writes difficulty-ranked parts of the search corpus to
/// `<out>/splits/<label>.jsonl`, one training example per line.
pub fn export(
    settings: &Settings,
    templates: &[&SymbolicTemplate],
    mixture: &[f64],
    mixture_total: Option<usize>,
) -> Result<ExportSummary, CliError> {
    let out = settings.out()?;
    let seed = settings.seed()?;
    let corpora = load_corpora(out, templates)?;
    let search = corpora.iter().find(|c| c.name == SEARCH).expect("load_corpora guarantees a search corpus");
    let by_id: BTreeMap<&str, &SymbolicTemplate> = templates.iter().map(|t| (t.id.as_str(), *t)).collect();
    let mut candidates = Vec::new();
    let mut skipped = BTreeSet::new();
    for (id, records) in &search.by_template {
        let t = by_id[id.as_str()];
        for r in records {
            let Some(md_h) = r.metrics.md_h else {
                skipped.insert(id.clone());
                continue;
            };
            let reasoning = t
                .render_ground_truth_reasoning(&r.variation)
                .map_err(|e| CliError::data(e.to_string()).for_template(id))?;
            candidates.push(SplitCandidate {
                template_id: id.clone(),
                key: r.key().to_string(),
                md_h,
                correct: r.correct,
                prompt: r.variation.rendered_problem.clone(),
                reasoning,
                answer: format_answer(&r.variation.ground_truth),
            });
        }
    }
    let a = &settings.analytics;
    let opts = SplitOptions {
        k_parts: a.splits,
        filter_incorrect: a.filter_incorrect,
        cap_per_template: Some(a.cap_per_template),
        seed,
    };
    let dir = out.join(SPLITS_DIR);
    let config = json!({
        "seed": seed,
        "templates": templates.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(),
        "splits": a.splits,
        "filter_incorrect": a.filter_incorrect,
        "cap_per_template": a.cap_per_template,
        "mixture": mixture,
        "mixture_total": mixture_total,
    });
    let mut manifest = Manifest::new("export", None, config);
    write_json_file(&dir.join(MANIFEST), &manifest)?;
    let splits = export_difficulty_splits(&candidates, &opts)?;
    let mut summary = ExportSummary {
        pool_size: splits.pool_size,
        parts: BTreeMap::new(),
        mixture: None,
    };
    let jsonl = |rows: &[varsearch::analytics::SplitRow]| -> String {
        rows.iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
            .collect()
    };
    for part in &splits.parts {
        let name = format!("{}.jsonl", part.label);
        write_text(&dir.join(&name), &jsonl(&part.rows))?;
        manifest.outputs.push(name);
        summary.parts.insert(part.label.clone(), part.rows.len());
    }
    if !mixture.is_empty() {
        let rows = select_mixture(&splits, mixture, mixture_total, seed).map_err(|e| CliError::usage(e.to_string()))?;
        write_text(&dir.join("mixture.jsonl"), &jsonl(&rows))?;
        manifest.outputs.push("mixture.jsonl".into());
        summary.mixture = Some(rows.len());
    }
    if !skipped.is_empty() {
        manifest.notes.push(format!(
            "records without md_h skipped for: {}",
            skipped.into_iter().collect::<Vec<_>>().join(", ")
        ));
    }
    manifest.status = Status::Complete;
    write_json_file(&dir.join(MANIFEST), &manifest)?;
    Ok(summary)
}
