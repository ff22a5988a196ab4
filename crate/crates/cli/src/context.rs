use std::path::{Path, PathBuf};

use varsearch::gateway::{Gateway, HttpConfig, HttpGateway, SyntheticModel};
use varsearch::template::{parse_template, PromptLibrary, PromptSet, SymbolicTemplate};

use crate::config::{GatewaySource, Settings};
use crate::error::CliError;

/// A parsed template and the file it came from.
#[derive(Debug)]
pub struct LoadedTemplate {
    pub path: PathBuf,
    pub template: SymbolicTemplate,
}

/// Template files named by `paths`: files as given, directories expanded to
/// their `*.toml` entries in name order.
pub fn template_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.is_file() && e.extension().is_some_and(|x| x == "toml"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::usage(format!("{}: no such file or directory", p.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::usage("no templates"));
    }
    Ok(files)
}

/// Parses one template file; the error names the file.
pub fn load_template(path: &Path) -> Result<SymbolicTemplate, CliError> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    parse_template(&src).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Every template, sorted by id; fails on the first bad file or a duplicate id.
pub fn load_templates(paths: &[PathBuf]) -> Result<Vec<LoadedTemplate>, CliError> {
    let mut out = Vec::new();
    for path in template_files(paths)? {
        let template = load_template(&path)?;
        out.push(LoadedTemplate { path, template });
    }
    out.sort_by(|a, b| a.template.id.cmp(&b.template.id));
    if let Some(w) = out.windows(2).find(|w| w[0].template.id == w[1].template.id) {
        return Err(CliError::data(format!(
            "template id `{}` defined by both {} and {}",
            w[0].template.id,
            w[0].path.display(),
            w[1].path.display()
        )));
    }
    Ok(out)
}

/// Bundled prompt sets plus any extra files; extras replace bundled sets of the same id.
pub fn load_prompts(paths: &[PathBuf]) -> Result<PromptLibrary, CliError> {
    let mut lib = PromptLibrary::bundled();
    for p in paths {
        let src = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
        lib.insert(PromptSet::parse(&src).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?);
    }
    Ok(lib)
}

/// Builds the gateway and checks that it answers `info`.
pub fn open_gateway(settings: &Settings) -> Result<Box<dyn Gateway>, CliError> {
    let gw: Box<dyn Gateway> = match settings.gateway()? {
        GatewaySource::Http { url } => {
            let mut cfg = HttpConfig::new(url.clone());
            cfg.concurrency = settings.concurrency;
            Box::new(HttpGateway::new(cfg))
        }
        GatewaySource::Synthetic(cfg) => Box::new(SyntheticModel::new(cfg.clone()).map_err(CliError::usage)?),
    };
    gw.info()?;
    Ok(gw)
}
