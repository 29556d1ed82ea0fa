//! Run directory bookkeeping: resolved config snapshot and checksum manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const CONFIG_SNAPSHOT: &str = "config.resolved.toml";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Output directory of one command.
pub struct RunDir {
    pub dir: PathBuf,
    inputs: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("cannot create output dir {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            inputs: Vec::new(),
        })
    }

    /// Records an input file, failing with a usage error when it is missing.
    pub fn input<'p>(&mut self, path: &'p Path) -> Result<&'p Path, CliError> {
        if !path.is_file() {
            return Err(CliError::Usage(format!("input {} does not exist", path.display())));
        }
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
        Ok(path)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    /// Writes the config snapshot and the manifest of inputs and outputs.
    pub fn finish(&self, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
        let snapshot = toml::to_string(cfg).map_err(|e| CliError::Validation(format!("config snapshot: {e}")))?;
        self.write(CONFIG_SNAPSHOT, snapshot)?;
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(FileEntry {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut names: Vec<String> = std::fs::read_dir(&self.dir)
            .map_err(|e| CliError::Validation(format!("cannot list {}: {e}", self.dir.display())))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != MANIFEST)
            .collect();
        names.sort();
        let outputs = names
            .into_iter()
            .map(|n| {
                Ok(FileEntry {
                    sha256: sha256_file(&self.dir.join(&n))?,
                    path: n,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            inputs,
            outputs,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Validation(e.to_string()))?;
        self.write(MANIFEST, json + "\n")?;
        Ok(())
    }
}
