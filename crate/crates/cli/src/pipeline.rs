//! Per-template commands that call the model: probe, search and baseline.
//! Each writes `<out>/<template>/<command>/` with a manifest.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use varsearch::gateway::Gateway;
use varsearch::metrics::Space;
use varsearch::search::{
    probe_references, random_baseline, run_beam_search, BeamEntry, IterationSummary, ProbeOptions, RefreshEvent,
    References, ScoredRecord, Scorer,
};
use varsearch::store::{RunStore, MANIFEST, RECORDS};
use varsearch::template::{PromptLibrary, SymbolicTemplate};

use crate::config::Settings;
use crate::error::CliError;

pub const PROBE: &str = "probe";
pub const SEARCH: &str = "search";
pub const BASELINE: &str = "baseline";
pub const PROBE_SUMMARY: &str = "probe.json";
pub const SEARCH_SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Started but not finished; outputs may be incomplete.
    Partial,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub version: String,
    pub status: Status,
    /// Everything that determines the outputs.
    pub config: Value,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, template: Option<&str>, config: Value) -> Self {
        Self {
            command: command.into(),
            template: template.map(str::to_string),
            version: env!("CARGO_PKG_VERSION").into(),
            status: Status::Partial,
            config,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// What a run directory already holds for a given configuration.
enum Prior {
    Fresh,
    /// Same configuration, finished.
    Complete,
    /// Same configuration, interrupted.
    Partial,
}

/// Compares an existing manifest with the configuration about to run.
/// A different configuration is refused rather than overwritten.
fn prior(store: &RunStore, manifest: &Manifest) -> Result<Prior, CliError> {
    let Some(old) = store.read_json::<Manifest>(MANIFEST)? else {
        return Ok(Prior::Fresh);
    };
    if old.config != manifest.config || old.command != manifest.command {
        return Err(CliError::usage(format!(
            "{} holds a {} run with a different configuration; use a fresh --out",
            store.dir().display(),
            old.command
        )));
    }
    Ok(match old.status {
        Status::Complete => Prior::Complete,
        Status::Partial => Prior::Partial,
    })
}

/// Reference snapshots chosen by the probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub template: String,
    pub hidden_ref: String,
    pub embedding_ref: String,
    pub fallback: bool,
    pub queried: usize,
    pub correct_found: usize,
    /// Variations behind the references; excluded from analysis.
    pub reference_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub template: String,
    pub best: BeamEntry,
    pub beam: Vec<BeamEntry>,
    pub explored: usize,
    pub fallback: bool,
    pub iterations: Vec<IterationSummary>,
    pub refreshes: Vec<RefreshEvent>,
}

/// Shared state for the model-calling commands.
pub struct Runner<'a> {
    pub settings: &'a Settings,
    pub gateway: &'a dyn Gateway,
    pub prompts: &'a PromptLibrary,
}

impl<'a> Runner<'a> {
    fn scorer(&self) -> Scorer<'a> {
        Scorer::new(self.gateway, self.prompts, self.settings.generation.clone(), self.settings.metrics.clone())
    }

    fn base_config(&self) -> Result<serde_json::Map<String, Value>, CliError> {
        let s = self.settings;
        let mut m = serde_json::Map::new();
        m.insert("seed".into(), json!(s.seed()?));
        m.insert("gateway".into(), json!(s.gateway()?));
        m.insert("generation".into(), json!(s.generation));
        m.insert("metrics".into(), json!(s.metrics.iter().map(|k| k.name()).collect::<Vec<_>>()));
        m.insert("probe".into(), json!(s.probe));
        Ok(m)
    }

    /// Loads the probe output, running the probe first when absent.
    pub fn probe(&self, t: &SymbolicTemplate) -> Result<(ProbeSummary, References), CliError> {
        let out = self.settings.out()?;
        let store = RunStore::open(out, &t.id, PROBE)?;
        let mut manifest = Manifest::new(PROBE, Some(&t.id), Value::Object(self.base_config()?));
        if let Prior::Complete = prior(&store, &manifest)? {
            if let Some(summary) = store.read_json::<ProbeSummary>(PROBE_SUMMARY)? {
                let refs = load_refs(&store, &summary)?;
                return Ok((summary, refs));
            }
        }
        store.write_json(MANIFEST, &manifest)?;
        let p = &self.settings.probe;
        let opts = ProbeOptions {
            n_target: p.n_target,
            budget: p.budget,
            seed: self.settings.seed()?,
            ridge: p.ridge,
            text_source: p.text_source,
        };
        let report = probe_references(t, &self.scorer(), &opts, None)?;
        store.save_reference(&report.references.hidden)?;
        store.save_reference(&report.references.embedding)?;
        let summary = ProbeSummary {
            template: t.id.clone(),
            hidden_ref: report.references.hidden.snapshot_id.clone(),
            embedding_ref: report.references.embedding.snapshot_id.clone(),
            fallback: report.references.fallback,
            queried: report.queried,
            correct_found: report.correct_found,
            reference_keys: report.reference_keys,
        };
        store.write_json(PROBE_SUMMARY, &summary)?;
        if summary.fallback {
            manifest.notes.push(format!(
                "only {} correct responses found; references fall back to ground-truth traces",
                summary.correct_found
            ));
        }
        manifest.outputs = vec![PROBE_SUMMARY.into(), "refs/".into()];
        manifest.status = Status::Complete;
        store.write_json(MANIFEST, &manifest)?;
        Ok((summary, report.references))
    }

    /// Runs or resumes the beam search.
    pub fn search(&self, t: &SymbolicTemplate) -> Result<SearchSummary, CliError> {
        let (probe, refs) = self.probe(t)?;
        let out = self.settings.out()?;
        let store = RunStore::open(out, &t.id, SEARCH)?;
        let mut config = self.base_config()?;
        config.insert("search".into(), json!(self.settings.search));
        config.insert("cheap".into(), json!(self.settings.cheap));
        config.insert("references".into(), json!([probe.hidden_ref, probe.embedding_ref]));
        let mut manifest = Manifest::new(SEARCH, Some(&t.id), Value::Object(config));
        if let Prior::Fresh = prior(&store, &manifest)? {
            store.write_json(MANIFEST, &manifest)?;
        }
        let state = run_beam_search(t, &self.scorer(), refs, &self.settings.search, self.settings.cheap, Some(&store))?;
        let summary = SearchSummary {
            template: t.id.clone(),
            best: state.best.clone(),
            beam: state.beam.clone(),
            explored: state.explored.len(),
            fallback: state.refs.fallback,
            iterations: state.summaries.clone(),
            refreshes: state.refreshes.clone(),
        };
        store.write_json(SEARCH_SUMMARY, &summary)?;
        manifest.outputs = vec![RECORDS.into(), "checkpoint.json".into(), SEARCH_SUMMARY.into(), "refs/".into()];
        manifest.status = Status::Complete;
        store.write_json(MANIFEST, &manifest)?;
        Ok(summary)
    }

    /// Scores `count` uniform variations, by default as many as the search
    /// scored exactly.
    pub fn baseline(&self, t: &SymbolicTemplate, count: Option<usize>) -> Result<usize, CliError> {
        let out = self.settings.out()?;
        let count = match count {
            Some(c) => c,
            None => {
                let search = RunStore::existing(out, &t.id, SEARCH)
                    .filter(|s| s.exists(RECORDS))
                    .ok_or_else(|| CliError::data("no search records to pair with; run search first or pass --count"))?;
                search.read_lines::<ScoredRecord>(RECORDS)?.len()
            }
        };
        let (probe, refs) = self.probe(t)?;
        let store = RunStore::open(out, &t.id, BASELINE)?;
        let mut config = self.base_config()?;
        config.insert("count".into(), json!(count));
        config.insert("references".into(), json!([probe.hidden_ref, probe.embedding_ref]));
        let mut manifest = Manifest::new(BASELINE, Some(&t.id), Value::Object(config));
        if let Prior::Complete = prior(&store, &manifest)? {
            return Ok(store.read_lines::<ScoredRecord>(RECORDS)?.len());
        }
        store.write_json(MANIFEST, &manifest)?;
        let records = random_baseline(t, &self.scorer(), &refs, count, self.settings.seed()?)?;
        store.write_lines(RECORDS, &records)?;
        if records.len() < count {
            manifest.notes.push(format!("variation space yielded {} of {count} requested", records.len()));
        }
        manifest.outputs = vec![RECORDS.into()];
        manifest.status = Status::Complete;
        store.write_json(MANIFEST, &manifest)?;
        Ok(records.len())
    }
}

fn load_refs(store: &RunStore, s: &ProbeSummary) -> Result<References, CliError> {
    let missing = |id: &str| CliError::data(format!("{}: reference snapshot {id} missing", store.dir().display()));
    let hidden = store.load_reference(Space::Hidden, &s.hidden_ref)?.ok_or_else(|| missing(&s.hidden_ref))?;
    let embedding = store
        .load_reference(Space::Embedding, &s.embedding_ref)?
        .ok_or_else(|| missing(&s.embedding_ref))?;
    Ok(References::new(hidden, embedding))
}

/// Records a finished command left for one template, if any.
pub fn read_records(out: &Path, template: &str, command: &str) -> Result<Option<Vec<ScoredRecord>>, CliError> {
    let Some(store) = RunStore::existing(out, template, command) else {
        return Ok(None);
    };
    match store.read_json::<Manifest>(MANIFEST)? {
        Some(m) if m.status == Status::Complete => Ok(Some(store.read_lines(RECORDS)?)),
        Some(_) => Err(CliError::data(format!("{}: run is incomplete", store.dir().display())).for_template(template)),
        None => Ok(None),
    }
}

/// Keys behind the probe references of one template.
pub fn reference_keys(out: &Path, template: &str) -> Result<BTreeSet<String>, CliError> {
    let summary = RunStore::existing(out, template, PROBE)
        .map(|s| s.read_json::<ProbeSummary>(PROBE_SUMMARY))
        .transpose()?
        .flatten();
    Ok(summary.map(|s| s.reference_keys.into_iter().collect()).unwrap_or_default())
}
