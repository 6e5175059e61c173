//! Run-stamped output directories and their manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

/// A file produced in memory, written only once a command has fully
/// succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn text(name: impl Into<String>, text: String) -> Self {
        Self {
            name: name.into(),
            bytes: text.into_bytes(),
        }
    }

    pub fn json<T: Serialize>(name: impl Into<String>, value: &T) -> Self {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        Self::text(name, text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: usize,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config_file: String,
    pub commands: Vec<String>,
    pub files: BTreeMap<String, FileEntry>,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    path: PathBuf,
    digest: String,
}

impl RunDir {
    /// `<out>/run-<first 12 hex digits of the config digest>`.
    pub fn locate(out: &Path, cfg: &RunConfig) -> Self {
        let digest = cfg.digest();
        Self {
            path: out.join(format!("run-{}", &digest[..12])),
            digest,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn require(&self, name: &str, producer: &'static str) -> Result<PathBuf, CliError> {
        let p = self.file(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact {
                path: p.display().to_string(),
                producer,
            })
        }
    }

    pub fn read(&self, name: &str, producer: &'static str) -> Result<String, CliError> {
        let p = self.require(name, producer)?;
        fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
    }

    pub fn manifest(&self) -> Result<Option<Manifest>, CliError> {
        let p = self.file(MANIFEST);
        if !p.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Config(format!("corrupt manifest {}: {e}", p.display())))
    }

    /// Writes the config, the artifacts and an updated manifest. Each file
    /// goes through a temporary name and a rename.
    pub fn commit(&self, cfg: &RunConfig, command: &str, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.path).map_err(|e| CliError::io(&self.path, e))?;
        let mut manifest = self.manifest()?.unwrap_or_else(|| Manifest {
            tool: "magtorus".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.digest.clone(),
            config_file: CONFIG_FILE.into(),
            commands: Vec::new(),
            files: BTreeMap::new(),
        });
        let mut config_text = cfg.to_json();
        config_text.push('\n');
        let config = Artifact::text(CONFIG_FILE, config_text);
        let mut written = Vec::new();
        for a in std::iter::once(&config).chain(artifacts) {
            let target = self.file(&a.name);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            write_atomic(&target, &a.bytes)?;
            manifest.files.insert(
                a.name.clone(),
                FileEntry {
                    sha256: sha256_hex(&a.bytes),
                    bytes: a.bytes.len(),
                    command: command.into(),
                },
            );
            written.push(target);
        }
        if !manifest.commands.iter().any(|c| c == command) {
            manifest.commands.push(command.into());
        }
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.file(MANIFEST), text.as_bytes())?;
        Ok(written)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(target: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = target.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, target).map_err(|e| CliError::io(target, e))
}
