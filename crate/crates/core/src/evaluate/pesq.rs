//! Adapter for an externally supplied PESQ executable.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wav;

/// Runs `executable [args..] ref.wav deg.wav` and reads the last number
/// printed on standard output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesqAdapter {
    pub executable: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

impl PesqAdapter {
    pub fn score_files(&self, reference: &Path, degraded: &Path) -> Result<f64> {
        let out = Command::new(&self.executable)
            .args(&self.args)
            .arg(reference)
            .arg(degraded)
            .output()
            .map_err(|e| Error::External(format!("{}: {e}", self.executable.display())))?;
        if !out.status.success() {
            return Err(Error::External(format!(
                "{} exited with {}: {}",
                self.executable.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        stdout
            .split_whitespace()
            .rev()
            .find_map(|tok| tok.parse::<f64>().ok())
            .ok_or_else(|| Error::External(format!("no score in output {:?}", stdout.trim())))
    }

    pub fn score(&self, reference: &[f64], degraded: &[f64], sample_rate: u32) -> Result<f64> {
        let dir = tempfile::tempdir().map_err(|e| Error::storage(std::env::temp_dir(), e))?;
        let r = dir.path().join("ref.wav");
        let d = dir.path().join("deg.wav");
        wav::write_pcm16(&r, reference, sample_rate)?;
        wav::write_pcm16(&d, degraded, sample_rate)?;
        self.score_files(&r, &d)
    }
}
