//! The `varsearch` command line: validate templates, probe references, run
//! beam searches and random baselines, compute the analysis tables and
//! export difficulty-ranked splits.
//!
//! Settings come from flags, then a TOML config file, then `VARSEARCH_*`
//! environment variables. Exit codes: 0 success, 1 data error, 2 usage
//! error, 3 gateway error.

pub mod analyze;
pub mod config;
pub mod context;
pub mod error;
pub mod pipeline;

use std::io::Write;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;
use varsearch::seed;
use varsearch::template::{render_prompt, sample_variation, SymbolicTemplate};

use config::{resolve, Env, Flags, Settings};
use context::{load_prompts, load_template, load_templates, open_gateway, template_files};
use error::CliError;
use pipeline::Runner;

#[derive(Debug, Parser)]
#[command(name = "varsearch", version, about = "Search template variations for model failures and measure robustness")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse templates and check that each yields valid variations.
    Validate {
        /// Variations sampled per template.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Collect correct responses and fit the reference sets.
    Probe,
    /// Beam search for difficult variations; resumes from a checkpoint.
    Search,
    /// Score uniformly sampled variations, by default as many as the search did.
    Baseline {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Compute AUC/odds-ratio, quantile, DRS, bootstrap and error-rate tables.
    Analyze,
    /// Write difficulty-ranked training splits.
    Export {
        /// Mixture weights over the parts, e.g. `20,30,50`.
        #[arg(long, value_delimiter = ',')]
        mixture: Vec<f64>,
        /// Mixture size; defaults to the smallest part.
        #[arg(long)]
        mixture_total: Option<usize>,
    },
    /// Probe, search, baseline and analyze in one go.
    Run,
}

/// Runs a parsed command, writing progress lines to `stdout` and error
/// records to `stderr`. Returns the exit code.
pub fn execute(cli: &Cli, env: &dyn Env, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = resolve(&cli.flags, env).and_then(|s| dispatch(&cli.command, &s, stdout, stderr));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.record());
            e.kind.exit_code()
        }
    }
}

/// Parses `args` and runs; clap's own usage errors exit with 2.
pub fn main_with_args<I, T>(args: I, env: &dyn Env, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli, env, stdout, stderr),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            code
        }
    }
}

fn emit(stdout: &mut dyn Write, value: serde_json::Value) {
    let _ = writeln!(stdout, "{value}");
}

fn dispatch(command: &Command, s: &Settings, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if let Command::Validate { samples } = command {
        return validate(s, *samples, stdout, stderr);
    }
    let loaded = load_templates(&s.templates)?;
    let templates: Vec<&SymbolicTemplate> = loaded.iter().map(|l| &l.template).collect();
    match command {
        Command::Validate { .. } => unreachable!("handled above"),
        Command::Analyze => {
            let summary = analyze::analyze(s, &templates)?;
            emit(stdout, json!({ "analyze": summary }));
            Ok(())
        }
        Command::Export { mixture, mixture_total } => {
            let summary = analyze::export(s, &templates, mixture, *mixture_total)?;
            emit(stdout, json!({ "export": summary }));
            Ok(())
        }
        Command::Probe | Command::Search | Command::Baseline { .. } | Command::Run => {
            s.seed()?;
            s.out()?;
            let prompts = load_prompts(&s.prompts)?;
            let gateway = open_gateway(s)?;
            let runner = Runner {
                settings: s,
                gateway: gateway.as_ref(),
                prompts: &prompts,
            };
            let lines = for_each_template(s, &templates, stderr, |t| per_template(&runner, command, t))?;
            for l in lines {
                emit(stdout, l);
            }
            if let Command::Run = command {
                let summary = analyze::analyze(s, &templates)?;
                emit(stdout, json!({ "analyze": summary }));
            }
            Ok(())
        }
    }
}

fn per_template(runner: &Runner, command: &Command, t: &SymbolicTemplate) -> Result<serde_json::Value, CliError> {
    Ok(match command {
        Command::Probe => {
            let (p, _) = runner.probe(t)?;
            json!({ "template": t.id, "probe": { "correct_found": p.correct_found, "queried": p.queried, "fallback": p.fallback } })
        }
        Command::Search => search_line(t, &runner.search(t)?),
        Command::Baseline { count } => json!({ "template": t.id, "baseline": { "records": runner.baseline(t, *count)? } }),
        Command::Run => {
            let summary = runner.search(t)?;
            let n = runner.baseline(t, None)?;
            let mut line = search_line(t, &summary);
            line["baseline"] = json!({ "records": n });
            line
        }
        _ => unreachable!("only model-calling commands run per template"),
    })
}

fn search_line(t: &SymbolicTemplate, s: &pipeline::SearchSummary) -> serde_json::Value {
    json!({
        "template": t.id,
        "search": {
            "best_score": s.best.score,
            "best_correct": s.best.correct,
            "explored": s.explored,
            "final_beam_accuracy": s.iterations.last().map(|i| i.beam_accuracy),
            "refreshes": s.refreshes.len(),
        }
    })
}

/// Runs `f` on every template with up to `workers` in parallel. Output lines
/// come back in template order. On failure every error is reported and the
/// most severe one is returned.
fn for_each_template<F>(
    s: &Settings,
    templates: &[&SymbolicTemplate],
    stderr: &mut dyn Write,
    f: F,
) -> Result<Vec<serde_json::Value>, CliError>
where
    F: Fn(&SymbolicTemplate) -> Result<serde_json::Value, CliError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(s.workers)
        .build()
        .map_err(|e| CliError::usage(format!("worker pool: {e}")))?;
    let results: Vec<Result<serde_json::Value, CliError>> =
        pool.install(|| templates.par_iter().map(|t| f(t).map_err(|e| e.for_template(&t.id))).collect());
    let mut lines = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(l) => lines.push(l),
            Err(e) => errors.push(e),
        }
    }
    let Some(worst) = errors.iter().map(|e| e.kind).max() else {
        return Ok(lines);
    };
    let pos = errors.iter().position(|e| e.kind == worst).expect("worst kind is present");
    let returned = errors.remove(pos);
    for e in errors {
        let _ = writeln!(stderr, "{}", e.record());
    }
    Err(returned)
}

/// Parses every template file, reporting each one; any failure exits 1 with
/// the failing files named.
fn validate(s: &Settings, samples: usize, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let files = template_files(&s.templates)?;
    let prompts = load_prompts(&s.prompts)?;
    let base_seed = s.seed.unwrap_or(0);
    let mut failed = Vec::new();
    let mut ids = std::collections::BTreeMap::new();
    for path in &files {
        let check = || -> Result<serde_json::Value, CliError> {
            let t = load_template(path)?;
            if let Some(other) = ids.get(&t.id) {
                return Err(CliError::data(format!("duplicate template id `{}` (also in {other})", t.id)));
            }
            let mut ok = 0;
            for i in 0..samples {
                let v = sample_variation(&t, seed::derive(base_seed, &[&t.id, "validate", &i.to_string()]))
                    .map_err(|e| CliError::data(e.to_string()))?;
                t.render_ground_truth_reasoning(&v).map_err(|e| CliError::data(e.to_string()))?;
                render_prompt(&t, &v, &prompts).map_err(|e| CliError::data(e.to_string()))?;
                ok += 1;
            }
            Ok(json!({
                "template": t.id,
                "slots": t.slots.len(),
                "conditions": t.conditions.len(),
                "space_size_bound": t.space_size_bound(),
                "samples_ok": ok,
            }))
        };
        match check() {
            Ok(line) => {
                ids.insert(line["template"].as_str().unwrap_or_default().to_string(), path.display().to_string());
                emit(stdout, json!({ "file": path.display().to_string(), "valid": line }));
            }
            Err(e) => {
                let _ = writeln!(stderr, "{}", json!({ "error": { "kind": e.kind, "file": path.display().to_string(), "message": e.message } }));
                failed.push(path.display().to_string());
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::data(format!("invalid templates: {}", failed.join(", "))))
    }
}
