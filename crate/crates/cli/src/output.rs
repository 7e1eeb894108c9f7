//! CSV tables, the curves file format and the run manifest.
//!
//! Floats are written in Rust's `Display` form, the shortest decimal string
//! that parses back to the same `f64`, so equal results give equal bytes.

use std::path::{Path, PathBuf};

use dll_core::model::SurvivalCurves;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

pub const CURVES_HEADER: [&str; 6] = ["time_s", "n_uncond", "k_uncond", "n_cond", "k_cond", "n_retained"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A CSV table with a fixed header.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

pub fn curves_table(c: &SurvivalCurves) -> Table {
    let mut t = Table::new(&CURVES_HEADER);
    for i in 0..c.len() {
        t.push(vec![
            fmt_f64(c.times[i]),
            c.n_uncond[i].to_string(),
            c.k_uncond[i].to_string(),
            c.n_cond[i].to_string(),
            c.k_cond[i].to_string(),
            c.n_retained[i].to_string(),
        ]);
    }
    t
}

#[derive(Deserialize)]
struct CurveRow {
    time_s: f64,
    n_uncond: u64,
    k_uncond: u64,
    n_cond: u64,
    k_cond: u64,
    n_retained: u64,
}

/// Parses a curves CSV; the time column is in seconds.
pub fn read_curves(path: &Path, bytes: &[u8]) -> Result<SurvivalCurves, HarnessError> {
    let bad = |message: String| HarnessError::Input {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(CURVES_HEADER) {
        return Err(bad(format!(
            "header must be `{}`, found `{}`",
            CURVES_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut c = SurvivalCurves::default();
    for row in r.deserialize::<CurveRow>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        c.times.push(row.time_s);
        c.n_uncond.push(row.n_uncond);
        c.k_uncond.push(row.k_uncond);
        c.n_cond.push(row.n_cond);
        c.k_cond.push(row.k_cond);
        c.n_retained.push(row.n_retained);
    }
    c.check().map_err(|e| bad(e.to_string()))?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub dll_cli: String,
    pub dll_core: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            dll_cli: env!("CARGO_PKG_VERSION").into(),
            dll_core: dll_core::VERSION.into(),
        }
    }
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config_path: String,
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_sha256: Option<String>,
    /// Seed actually used, after any `--seed` override.
    pub seed: Option<u64>,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
    pub versions: Versions,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
    pub outputs: Vec<OutputFile>,
}

/// Writes output files into one directory and remembers their hashes.
pub struct Artifacts {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::io(format!("creating {}", dir.display()), e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| HarnessError::io(format!("writing {}", path.display()), e))?;
        tracing::debug!(file = %path.display(), bytes = bytes.len(), "wrote");
        self.outputs.push(OutputFile {
            path: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes `manifest.json`, listing every file written so far.
    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest, HarnessError> {
        manifest.outputs = self.outputs;
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("serialisable manifest");
        bytes.push(b'\n');
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, bytes)
            .map_err(|e| HarnessError::io(format!("writing {}", path.display()), e))?;
        Ok(manifest)
    }
}
