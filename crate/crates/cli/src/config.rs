//! Settings resolution. Each value comes from the first of: command-line
//! flag, config file, environment variable, built-in default.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use varsearch::analytics::{Scaling, DEFAULT_BINS, DEFAULT_RESAMPLES};
use varsearch::gateway::{GenerationParams, SyntheticConfig, DEFAULT_CONCURRENCY};
use varsearch::metrics::{parse_selector, MetricKind, ReferenceSource, RidgePolicy, REFERENCE_N};
use varsearch::search::{CheapScore, SearchParams};

use crate::error::CliError;

pub const ENV_CONFIG: &str = "VARSEARCH_CONFIG";
pub const ENV_TEMPLATES: &str = "VARSEARCH_TEMPLATES";
pub const ENV_GATEWAY_URL: &str = "VARSEARCH_GATEWAY_URL";
pub const ENV_SYNTHETIC: &str = "VARSEARCH_SYNTHETIC";
pub const ENV_SEED: &str = "VARSEARCH_SEED";
pub const ENV_OUT: &str = "VARSEARCH_OUT";
pub const ENV_METRICS: &str = "VARSEARCH_METRICS";
pub const ENV_WORKERS: &str = "VARSEARCH_WORKERS";

/// `--synthetic` value selecting the built-in synthetic model configuration.
pub const SYNTHETIC_DEFAULT: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheapArg {
    Embedding,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingArg {
    Global,
    PerTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSourceArg {
    SelfModel,
    GroundTruthTraces,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Template files or directories of `*.toml` templates (comma-separated or repeated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub templates: Vec<PathBuf>,
    /// Extra five-shot prompt sets (TOML files).
    #[arg(long, global = true, value_delimiter = ',')]
    pub prompts: Vec<PathBuf>,
    /// Base URL of a remote profile backend.
    #[arg(long, global = true, conflicts_with = "synthetic")]
    pub gateway_url: Option<String>,
    /// Synthetic model config file, or `default`.
    #[arg(long, global = true)]
    pub synthetic: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; the only location written to.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Templates processed in parallel.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    #[arg(long, global = true)]
    pub beam_width: Option<usize>,
    #[arg(long, global = true)]
    pub branching: Option<usize>,
    #[arg(long, global = true)]
    pub rho_expl: Option<f64>,
    #[arg(long, global = true)]
    pub rho_sel: Option<f64>,
    /// Refit references after this many new correct responses (0 disables).
    #[arg(long, global = true)]
    pub goalpost: Option<usize>,
    /// Cheap pre-filter score.
    #[arg(long, global = true, value_enum)]
    pub cheap: Option<CheapArg>,
    /// Comma-separated metric names, or `all`.
    #[arg(long, global = true)]
    pub metrics: Option<String>,
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    #[arg(long, global = true)]
    pub resamples: Option<usize>,
    /// Number of difficulty-ranked parts to export.
    #[arg(long, global = true)]
    pub splits: Option<usize>,
    /// Export only variations the model answered incorrectly.
    #[arg(long, global = true)]
    pub filter_incorrect: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub templates: Option<Vec<PathBuf>>,
    pub prompts: Option<Vec<PathBuf>>,
    pub gateway_url: Option<String>,
    pub synthetic: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub metrics: Option<String>,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub analytics: AnalyticsSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub iterations: Option<usize>,
    pub beam_width: Option<usize>,
    pub branching: Option<usize>,
    pub rho_expl: Option<f64>,
    pub rho_sel: Option<f64>,
    pub per_slot_cap: Option<usize>,
    pub goalpost: Option<usize>,
    pub cheap: Option<CheapArg>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub n_target: Option<usize>,
    pub budget: Option<usize>,
    pub text_source: Option<TextSourceArg>,
    pub ridge: Option<RidgePolicy>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    pub layer_fraction: Option<f64>,
    pub topk: Option<usize>,
    pub max_tokens: Option<usize>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsSection {
    pub bins: Option<usize>,
    pub resamples: Option<usize>,
    pub splits: Option<usize>,
    pub filter_incorrect: Option<bool>,
    pub cap_per_template: Option<usize>,
    pub scaling: Option<ScalingArg>,
    pub imbalance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewaySource {
    Http { url: String },
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSettings {
    pub n_target: usize,
    pub budget: usize,
    pub text_source: ReferenceSource,
    pub ridge: RidgePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticsSettings {
    pub bins: usize,
    pub resamples: usize,
    pub splits: usize,
    pub filter_incorrect: bool,
    pub cap_per_template: usize,
    pub scaling: Scaling,
    pub imbalance: f64,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub templates: Vec<PathBuf>,
    pub prompts: Vec<PathBuf>,
    pub gateway: Option<GatewaySource>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub concurrency: usize,
    pub search: SearchParams,
    pub cheap: CheapScore,
    pub probe: ProbeSettings,
    pub generation: GenerationParams,
    pub metrics: BTreeSet<MetricKind>,
    pub analytics: AnalyticsSettings,
}

impl Settings {
    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::usage("this command needs a seed (--seed, config `seed` or VARSEARCH_SEED)"))
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::usage("this command needs an output directory (--out, config `out` or VARSEARCH_OUT)"))
    }

    pub fn gateway(&self) -> Result<&GatewaySource, CliError> {
        self.gateway
            .as_ref()
            .ok_or_else(|| CliError::usage("this command needs a model: --gateway-url or --synthetic"))
    }
}

/// Environment lookup, injectable for tests.
pub trait Env {
    fn var(&self, key: &str) -> Option<String>;
}

pub struct ProcessEnv;

impl Env for ProcessEnv {
    fn var(&self, key: &str) -> Option<String> {
        std::env::var(key).ok().filter(|v| !v.is_empty())
    }
}

impl Env for std::collections::BTreeMap<String, String> {
    fn var(&self, key: &str) -> Option<String> {
        self.get(key).cloned()
    }
}

fn parse_env<T: std::str::FromStr>(env: &dyn Env, key: &str) -> Result<Option<T>, CliError> {
    env.var(key)
        .map(|v| v.parse().map_err(|_| CliError::usage(format!("{key}: cannot parse `{v}`"))))
        .transpose()
}

/// Reads the config file named by the flag or the environment.
pub fn load_file_config(flags: &Flags, env: &dyn Env) -> Result<(FileConfig, PathBuf), CliError> {
    let Some(path) = flags.config.clone().or_else(|| env.var(ENV_CONFIG).map(PathBuf::from)) else {
        return Ok((FileConfig::default(), PathBuf::from(".")));
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    let cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, base))
}

pub fn resolve(flags: &Flags, env: &dyn Env) -> Result<Settings, CliError> {
    let (file, base) = load_file_config(flags, env)?;
    // Paths in the config file are relative to the file.
    let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

    let templates = if !flags.templates.is_empty() {
        flags.templates.clone()
    } else if let Some(t) = file.templates.clone() {
        t.into_iter().map(rel).collect()
    } else {
        env.var(ENV_TEMPLATES).map(|v| std::env::split_paths(&v).collect()).unwrap_or_default()
    };
    let prompts = if !flags.prompts.is_empty() {
        flags.prompts.clone()
    } else {
        file.prompts.clone().unwrap_or_default().into_iter().map(rel).collect()
    };

    let gateway_url = flags.gateway_url.clone();
    let synthetic_flag = flags.synthetic.clone();
    let gateway = if let Some(url) = gateway_url {
        Some(GatewaySource::Http { url })
    } else if let Some(s) = synthetic_flag {
        Some(synthetic_source(&s, None)?)
    } else if file.gateway_url.is_some() && file.synthetic.is_some() {
        return Err(CliError::usage("config sets both gateway_url and synthetic"));
    } else if let Some(url) = file.gateway_url.clone() {
        Some(GatewaySource::Http { url })
    } else if let Some(s) = file.synthetic.clone() {
        Some(synthetic_source(&s, Some(&base))?)
    } else if let Some(url) = env.var(ENV_GATEWAY_URL) {
        if env.var(ENV_SYNTHETIC).is_some() {
            return Err(CliError::usage(format!("both {ENV_GATEWAY_URL} and {ENV_SYNTHETIC} are set")));
        }
        Some(GatewaySource::Http { url })
    } else if let Some(s) = env.var(ENV_SYNTHETIC) {
        Some(synthetic_source(&s, None)?)
    } else {
        None
    };

    let seed = match flags.seed.or(file.seed) {
        Some(s) => Some(s),
        None => parse_env(env, ENV_SEED)?,
    };
    let out = flags
        .out
        .clone()
        .or_else(|| file.out.clone().map(rel))
        .or_else(|| env.var(ENV_OUT).map(PathBuf::from));
    let workers = match flags.workers.or(file.workers) {
        Some(w) => w,
        None => parse_env(env, ENV_WORKERS)?.unwrap_or(1),
    }
    .max(1);

    let s = &file.search;
    let defaults = SearchParams::default();
    let search = SearchParams {
        iterations: flags.iterations.or(s.iterations).unwrap_or(defaults.iterations),
        branching: flags.branching.or(s.branching).unwrap_or(defaults.branching),
        width: flags.beam_width.or(s.beam_width).unwrap_or(defaults.width),
        rho_expl: flags.rho_expl.or(s.rho_expl).unwrap_or(defaults.rho_expl),
        rho_sel: flags.rho_sel.or(s.rho_sel).unwrap_or(defaults.rho_sel),
        per_slot_cap: s.per_slot_cap.unwrap_or(defaults.per_slot_cap),
        goalpost_refresh: flags.goalpost.or(s.goalpost).unwrap_or(defaults.goalpost_refresh),
        seed: seed.unwrap_or(0),
    };
    search.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let cheap = match flags.cheap.or(s.cheap).unwrap_or(CheapArg::Embedding) {
        CheapArg::Embedding => CheapScore::EmbeddingMahalanobis,
        CheapArg::Exact => CheapScore::Exact,
    };

    let p = &file.probe;
    let probe = ProbeSettings {
        n_target: p.n_target.unwrap_or(REFERENCE_N),
        budget: p.budget.unwrap_or(1000),
        text_source: match p.text_source.unwrap_or(TextSourceArg::SelfModel) {
            TextSourceArg::SelfModel => ReferenceSource::SelfModel,
            TextSourceArg::GroundTruthTraces => ReferenceSource::GroundTruthTraces,
        },
        ridge: p.ridge.unwrap_or_default(),
    };
    if probe.n_target == 0 || probe.budget == 0 {
        return Err(CliError::usage("probe n_target and budget must be at least 1"));
    }

    let g = &file.generation;
    let gen_defaults = GenerationParams::default();
    let generation = GenerationParams {
        layer_fraction: g.layer_fraction.unwrap_or(gen_defaults.layer_fraction),
        topk: g.topk.unwrap_or(gen_defaults.topk),
        max_tokens: g.max_tokens.unwrap_or(gen_defaults.max_tokens),
    };
    if !(generation.layer_fraction > 0.0 && generation.layer_fraction <= 1.0) {
        return Err(CliError::usage("layer_fraction must lie in (0, 1]"));
    }

    let selector = match flags.metrics.clone().or(file.metrics.clone()) {
        Some(m) => m,
        None => env.var(ENV_METRICS).unwrap_or_else(|| "all".into()),
    };
    let metrics = parse_selector(&selector).map_err(|e| CliError::usage(format!("--metrics: {e}")))?;

    let a = &file.analytics;
    let analytics = AnalyticsSettings {
        bins: flags.bins.or(a.bins).unwrap_or(DEFAULT_BINS),
        resamples: flags.resamples.or(a.resamples).unwrap_or(DEFAULT_RESAMPLES),
        splits: flags.splits.or(a.splits).unwrap_or(3),
        filter_incorrect: flags.filter_incorrect || a.filter_incorrect.unwrap_or(false),
        cap_per_template: a.cap_per_template.unwrap_or(100),
        scaling: match a.scaling.unwrap_or(ScalingArg::Global) {
            ScalingArg::Global => Scaling::Global,
            ScalingArg::PerTemplate => Scaling::PerTemplate,
        },
        imbalance: a.imbalance.unwrap_or(0.99),
    };
    if analytics.bins == 0 || analytics.resamples == 0 || analytics.splits == 0 {
        return Err(CliError::usage("--bins, --resamples and --splits must be at least 1"));
    }
    if !(0.5..1.0).contains(&analytics.imbalance) {
        return Err(CliError::usage("analytics.imbalance must lie in [0.5, 1)"));
    }

    Ok(Settings {
        templates,
        prompts,
        gateway,
        seed,
        out,
        workers,
        concurrency: g.concurrency.unwrap_or(DEFAULT_CONCURRENCY).max(1),
        search,
        cheap,
        probe,
        generation,
        metrics,
        analytics,
    })
}

fn synthetic_source(value: &str, base: Option<&Path>) -> Result<GatewaySource, CliError> {
    let cfg = if value == SYNTHETIC_DEFAULT {
        SyntheticConfig::default()
    } else {
        let path = match base {
            Some(b) if Path::new(value).is_relative() => b.join(value),
            _ => PathBuf::from(value),
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::usage(format!("synthetic config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("synthetic config {}: {e}", path.display())))?
    };
    cfg.validate().map_err(|e| CliError::usage(format!("synthetic config: {e}")))?;
    Ok(GatewaySource::Synthetic(cfg))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;

    fn env(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.toml");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn flags_beat_config_beat_env() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "seed = 2\nout = \"runs\"\n[search]\niterations = 4\nbeam_width = 3\n");
        let e = env(&[(ENV_SEED, "3"), (ENV_OUT, "/elsewhere"), (ENV_METRICS, "md_h")]);

        let flags = Flags {
            config: Some(cfg.clone()),
            seed: Some(1),
            iterations: Some(9),
            ..Default::default()
        };
        let s = resolve(&flags, &e).unwrap();
        assert_eq!(s.seed, Some(1));
        assert_eq!(s.search.iterations, 9);
        assert_eq!(s.search.width, 3);
        assert_eq!(s.search.seed, 1);
        assert_eq!(s.out, Some(dir.path().join("runs")));
        assert_eq!(s.metrics, [MetricKind::MdH].into_iter().collect());

        let s = resolve(&Flags { config: Some(cfg), ..Default::default() }, &e).unwrap();
        assert_eq!(s.seed, Some(2));

        let s = resolve(&Flags::default(), &e).unwrap();
        assert_eq!(s.seed, Some(3));
        assert_eq!(s.out, Some(PathBuf::from("/elsewhere")));
        assert_eq!(s.search.iterations, 15);
    }

    #[test]
    fn defaults_follow_the_method() {
        let s = resolve(&Flags::default(), &env(&[])).unwrap();
        assert_eq!(s.search, SearchParams::default());
        assert_eq!(s.cheap, CheapScore::EmbeddingMahalanobis);
        assert_eq!(s.probe.n_target, 200);
        assert_eq!(s.analytics.bins, 20);
        assert_eq!(s.analytics.resamples, 1000);
        assert_eq!(s.analytics.splits, 3);
        assert_eq!(s.metrics.len(), MetricKind::ALL.len());
        assert!(s.gateway.is_none());
        assert!(s.seed().is_err());
    }

    #[test]
    fn gateway_sources() {
        let s = resolve(&Flags { synthetic: Some("default".into()), ..Default::default() }, &env(&[])).unwrap();
        assert_eq!(s.gateway, Some(GatewaySource::Synthetic(SyntheticConfig::default())));

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("model.toml"), "error_threshold = 0.3\n").unwrap();
        let cfg = write_config(dir.path(), "synthetic = \"model.toml\"\n");
        let s = resolve(&Flags { config: Some(cfg), ..Default::default() }, &env(&[])).unwrap();
        match s.gateway {
            Some(GatewaySource::Synthetic(c)) => assert_eq!(c.error_threshold, 0.3),
            other => panic!("{other:?}"),
        }

        let s = resolve(&Flags::default(), &env(&[(ENV_GATEWAY_URL, "http://h:1")])).unwrap();
        assert_eq!(s.gateway, Some(GatewaySource::Http { url: "http://h:1".into() }));
        assert!(resolve(&Flags::default(), &env(&[(ENV_GATEWAY_URL, "x"), (ENV_SYNTHETIC, "default")])).is_err());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let bad = [
            Flags { rho_sel: Some(1.5), ..Default::default() },
            Flags { metrics: Some("md_x".into()), ..Default::default() },
            Flags { bins: Some(0), ..Default::default() },
            Flags { synthetic: Some("/no/such/file.toml".into()), ..Default::default() },
        ];
        for f in bad {
            assert_eq!(resolve(&f, &env(&[])).unwrap_err().kind, crate::error::ErrorKind::Usage, "{f:?}");
        }
        assert!(resolve(&Flags::default(), &env(&[(ENV_SEED, "x")])).is_err());
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "unknown_key = 1\n");
        assert!(resolve(&Flags { config: Some(cfg), ..Default::default() }, &env(&[])).is_err());
    }
}
