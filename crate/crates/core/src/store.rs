//! On-disk run store: one directory per (template, command) holding a
//! manifest, an append-only record log, a checkpoint and reference snapshots.
//!
//! Every document is written deterministically (sorted maps, no timestamps)
//! so that identical runs produce identical bytes.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::metrics::{ReferenceModel, Space};

pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.jsonl";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const REFS_DIR: &str = "refs";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunStore {
    dir: PathBuf,
}

impl RunStore {
    /// `root/<template_id>/<command>/`, created if missing.
    pub fn open(root: &Path, template_id: &str, command: &str) -> Result<Self, StoreError> {
        let dir = root.join(template_id).join(command);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir })
    }

    /// Opens an existing directory without creating anything.
    pub fn existing(root: &Path, template_id: &str, command: &str) -> Option<Self> {
        let dir = root.join(template_id).join(command);
        dir.is_dir().then_some(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    /// Pretty JSON with a trailing newline, written through a temporary file
    /// and renamed into place.
    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), StoreError> {
        write_json_file(&self.path(name), value)
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>, StoreError> {
        let path = self.path(name);
        if !path.exists() {
            return Ok(None);
        }
        read_json_file(&path).map(Some)
    }

    pub fn remove(&self, name: &str) -> Result<(), StoreError> {
        let path = self.path(name);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Appends one JSON document per line to `name`.
    pub fn append_lines<T: Serialize>(&self, name: &str, items: &[T]) -> Result<(), StoreError> {
        append_lines_to(&self.path(name), items)
    }

    /// Replaces `name` with exactly these lines.
    pub fn write_lines<T: Serialize>(&self, name: &str, items: &[T]) -> Result<(), StoreError> {
        let path = self.path(name);
        let tmp = tmp_path(&path);
        File::create(&tmp).map_err(io_err(&tmp))?;
        append_lines_to(&tmp, items)?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Reads every line of `name`; a missing file is an empty log.
    pub fn read_lines<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, StoreError> {
        let path = self.path(name);
        let f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|source| StoreError::Json {
                path: path.clone(),
                line: i + 1,
                source,
            })?);
        }
        Ok(out)
    }

    fn reference_name(space: Space, id: &str) -> String {
        let space = match space {
            Space::Hidden => "hidden",
            Space::Embedding => "embedding",
        };
        format!("{REFS_DIR}/{space}-{id}.json")
    }

    /// Stores a reference snapshot under its content id; existing snapshots
    /// are left alone.
    pub fn save_reference(&self, r: &ReferenceModel) -> Result<(), StoreError> {
        let name = Self::reference_name(r.space, &r.snapshot_id);
        let refs = self.path(REFS_DIR);
        fs::create_dir_all(&refs).map_err(io_err(&refs))?;
        if self.exists(&name) {
            return Ok(());
        }
        self.write_json(&name, r)
    }

    pub fn load_reference(&self, space: Space, id: &str) -> Result<Option<ReferenceModel>, StoreError> {
        self.read_json(&Self::reference_name(space, id))
    }
}

fn append_lines_to<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    bytes.push(b'\n');
    let tmp = tmp_path(path);
    fs::write(&tmp, &bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: source.line(),
        source,
    })
}
