//! `run.json`: config snapshot, timings, hashed artifacts, checks.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_NAME: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// One numeric check: passes when `value <= limit` (`value < limit` if
/// strict). A NaN value never passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub limit: f64,
    pub strict: bool,
    pub pass: bool,
}

impl Check {
    pub fn at_most(label: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            label: label.into(),
            value,
            limit,
            strict: false,
            pass: value <= limit,
        }
    }

    pub fn below(label: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            label: label.into(),
            value,
            limit,
            strict: true,
            pass: value < limit,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub timings: Vec<Timing>,
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    pub diagnostics: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Collects artifacts and timings while a command runs.
pub struct Recorder {
    pub out: PathBuf,
    pub manifest: RunManifest,
    previous: Option<RunManifest>,
}

impl Recorder {
    /// Creates the output directory and remembers any earlier manifest in it.
    pub fn new(command: &str, config: &RunConfig, out: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let previous = load(out).ok();
        Ok(Self {
            out: out.to_path_buf(),
            manifest: RunManifest {
                command: command.into(),
                config: config.clone(),
                timings: Vec::new(),
                artifacts: Vec::new(),
                checks: Vec::new(),
                diagnostics: Vec::new(),
            },
            previous,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.manifest.timings.push(Timing {
            stage: stage.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        r
    }

    /// Hashes a file already written under the output directory.
    pub fn artifact(&mut self, name: &str) -> Result<(), CliError> {
        let (sha256, bytes) = sha256_file(&self.out.join(name))?;
        self.manifest.artifacts.retain(|a| a.path != name);
        self.manifest.artifacts.push(Artifact {
            path: name.into(),
            sha256,
            bytes,
        });
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.artifact(name)
    }

    pub fn check(&mut self, check: Check) {
        self.manifest.checks.push(check);
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.manifest.diagnostics.push(msg.into());
    }

    /// Compares against the previous manifest of the same command, then
    /// writes `run.json`.
    pub fn finish(mut self) -> Result<RunManifest, CliError> {
        if let Some(prev) = self.previous.take().filter(|p| p.command == self.manifest.command) {
            let (mut same, mut changed) = (0, Vec::new());
            for a in &self.manifest.artifacts {
                match prev.artifacts.iter().find(|b| b.path == a.path) {
                    Some(b) if b.sha256 == a.sha256 => same += 1,
                    Some(_) => changed.push(a.path.clone()),
                    None => {}
                }
            }
            self.note(format!("rerun: {same} artifact(s) identical to the previous run"));
            if !changed.is_empty() {
                self.note(format!("rerun: changed since the previous run: {}", changed.join(", ")));
            }
        }
        let path = self.out.join(MANIFEST_NAME);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
        Ok(self.manifest)
    }
}

pub fn load(dir: &Path) -> Result<RunManifest, CliError> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Re-hashes every listed artifact; returns the paths that are missing or
/// whose content changed.
pub fn verify(dir: &Path) -> Result<Vec<String>, CliError> {
    let manifest = load(dir)?;
    Ok(manifest
        .artifacts
        .iter()
        .filter(|a| match sha256_file(&dir.join(&a.path)) {
            Ok((h, _)) => h != a.sha256,
            Err(_) => true,
        })
        .map(|a| a.path.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = Recorder::new("test", &RunConfig::default(), dir.path()).unwrap();
        rec.write_text("a.csv", "x\n1\n").unwrap();
        rec.finish().unwrap();
        assert!(verify(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("a.csv"), "x\n2\n").unwrap();
        assert_eq!(verify(dir.path()).unwrap(), vec!["a.csv".to_string()]);
    }

    #[test]
    fn rerun_reports_identical_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        for _ in 0..2 {
            let mut rec = Recorder::new("test", &RunConfig::default(), dir.path()).unwrap();
            rec.write_text("a.csv", "x\n1\n").unwrap();
            rec.finish().unwrap();
        }
        let m = load(dir.path()).unwrap();
        assert!(m.diagnostics.iter().any(|d| d.contains("1 artifact(s) identical")));
    }
}
