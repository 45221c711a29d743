//! Per-invocation output directories and their manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Derivation of every seed from `base_seed`, recorded in manifests.
pub const SEED_DERIVATION: &str =
    "rep_seed = derive_seed(\"repetition\", [base_seed, rep]); origin, event count, \
     injection and training streams are keyed by rep_seed";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_bytes(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub created_at: String,
    pub config_digest: String,
    pub base_seed: u64,
    pub repetition_seeds: Vec<u64>,
    pub seed_derivation: &'static str,
    pub config: &'a RunConfig,
    pub inputs: &'a [InputDigest],
    pub outputs: Vec<String>,
}

pub struct RunDir {
    pub path: PathBuf,
    command: String,
    created_at: chrono::DateTime<chrono::Utc>,
    outputs: Vec<String>,
}

impl RunDir {
    /// Creates `<output_dir>/<command>-<UTC timestamp>-<digest prefix>`,
    /// adding a counter suffix rather than reusing an existing directory.
    pub fn create(cfg: &RunConfig, command: &str) -> CliResult<Self> {
        let created_at = chrono::Utc::now();
        let digest = cfg.digest();
        let stem = format!(
            "{command}-{}-{}",
            created_at.format("%Y%m%dT%H%M%SZ"),
            &digest[..12]
        );
        fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
        for n in 0.. {
            let name = if n == 0 {
                stem.clone()
            } else {
                format!("{stem}-{n}")
            };
            let path = cfg.output_dir.join(name);
            match fs::create_dir(&path) {
                Ok(()) => {
                    return Ok(Self {
                        path,
                        command: command.to_string(),
                        created_at,
                        outputs: Vec::new(),
                    })
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(CliError::io(path, e)),
            }
        }
        unreachable!()
    }

    /// Creates a new file in the run directory and fills it via `f`.
    pub fn write<F>(&mut self, name: &str, f: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> CliResult<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = self.path.join(name);
        let mut file = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        file.write_all(&buf).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn finish(mut self, cfg: &RunConfig, inputs: &[InputDigest]) -> CliResult<PathBuf> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            created_at: self.created_at.to_rfc3339(),
            config_digest: cfg.digest(),
            base_seed: cfg.base_seed,
            repetition_seeds: (0..cfg.n_reps)
                .map(|r| carewatch_core::evaluate::repetition_seed(cfg.base_seed, r))
                .collect(),
            seed_derivation: SEED_DERIVATION,
            config: cfg,
            inputs,
            outputs: self.outputs.clone(),
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(carewatch_core::Error::from)?;
        self.write("manifest.json", |b| {
            b.extend_from_slice(&json);
            b.push(b'\n');
            Ok(())
        })?;
        Ok(self.path)
    }
}

/// File-name-safe form of a device or patient id.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
