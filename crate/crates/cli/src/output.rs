use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Output directory of one run. Refuses to touch existing files unless forced.
#[derive(Debug)]
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    /// Creates the directory and checks that none of `files` (nor the manifest) exist.
    pub fn prepare(dir: &Path, files: &[&str], force: bool) -> Result<Self, CliError> {
        for f in files.iter().chain(std::iter::once(&MANIFEST)) {
            let p = dir.join(f);
            if p.exists() && !force {
                return Err(CliError::Config(format!(
                    "{} exists; pass --force to overwrite",
                    p.display()
                )));
            }
        }
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.into()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Run(e.into()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let mut f = fs::File::create(self.path(name))?;
        f.write_all(bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub subcommand: &'a str,
    pub code_version: &'a str,
    pub git_revision: Option<&'a str>,
    pub argv: Vec<String>,
    pub started_utc: String,
    pub finished_utc: String,
    pub elapsed_s: f64,
    pub status: String,
    pub store: Option<String>,
    pub config: &'a C,
    pub outputs: Vec<String>,
}
