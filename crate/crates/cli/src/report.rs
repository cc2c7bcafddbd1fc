//! Artifact writing: CSV tables, JSON summaries and the manifest.
//!
//! CSVs are UTF-8 with a header row, LF line endings and shortest
//! round-trip float formatting, so identical numbers give identical bytes.
//! Wall-clock times go to `timings.json` only, which the manifest leaves out.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gsde_core::validation::Report;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub pipeline: String,
    pub config_hash: String,
    pub seed: u64,
    pub converged: Option<bool>,
    pub passed: bool,
    pub exit_code: i32,
    pub files: Vec<FileEntry>,
}

/// Output directory plus the files written to it so far.
#[derive(Debug)]
pub struct Bundle {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

/// Float formatting shared by every table.
pub fn num(v: f64) -> String {
    format!("{v}")
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(FileEntry {
            name: name.into(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().context("flushing csv buffer")?;
        self.put(name, bytes)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.into_bytes())
    }

    pub fn text(&mut self, name: &str, text: String) -> Result<()> {
        self.put(name, text.into_bytes())
    }

    /// A validation report as `check,t,lhs,bound,margin,se`.
    pub fn report(&mut self, name: &str, rep: &Report) -> Result<()> {
        self.csv(
            name,
            &["check", "t", "lhs", "bound", "margin", "se"],
            rep.rows.iter().map(|r| {
                vec![
                    r.check.clone(),
                    num(r.t),
                    num(r.lhs),
                    num(r.bound),
                    num(r.margin),
                    num(r.se),
                ]
            }),
        )
    }

    /// Writes the manifest last; it lists every other file with its digest.
    pub fn finish(mut self, manifest: impl FnOnce(Vec<FileEntry>) -> Manifest) -> Result<Vec<FileEntry>> {
        let files = std::mem::take(&mut self.files);
        let m = manifest(files.clone());
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(files)
    }
}

/// Wall-clock times, kept out of the deterministic artifacts.
pub fn write_timings(dir: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let path = dir.join(TIMINGS);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}
