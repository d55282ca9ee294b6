use std::fs;
use std::path::{Path, PathBuf};

use blowup_core::io::{CsvError, OutputFile, Report, RunConfig, RunManifest};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Output directory that records a digest of everything written to it. The
/// manifest carries no wall-clock time, so reruns are byte-identical.
pub struct OutDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(&format!("create {}", dir.display()), e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&format!("write {}", path.display()), e))?;
        let sha256 = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.files.push(OutputFile { path: name.to_string(), sha256 });
        Ok(())
    }

    pub fn report<T: Serialize>(&mut self, name: &str, kind: &str, body: T) -> Result<(), CliError> {
        let r = Report { manifest: MANIFEST.to_string(), kind: kind.to_string(), body };
        let mut text = serde_json::to_string_pretty(&r).map_err(|e| CliError::numeric(format!("json: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn csv(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>, &str) -> Result<(), CsvError>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf, MANIFEST)?;
        self.write(name, &buf)
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(self, command: &str, config: &RunConfig) -> Result<(), CliError> {
        let m = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: *config,
            seed: config.seed,
            outputs: self.files,
        };
        let mut text = serde_json::to_string_pretty(&m).map_err(|e| CliError::numeric(format!("json: {e}")))?;
        text.push('\n');
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::io(&format!("write {}", path.display()), e))
    }
}
