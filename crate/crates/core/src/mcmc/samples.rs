//! Retained posterior draws and their on-disk framing.
//!
//! A sample file is JSON Lines: one `header` record, any number of `sample`
//! records, then one `trailer` record holding the per-iteration log-posterior
//! trace and acceptance counts. Floats are written in shortest round-trip
//! form, so writing is byte-stable and reading is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Counter, Flavor};
use crate::data::Standardization;
use crate::error::{Error, Result};

pub const SAMPLE_FORMAT: &str = "hrgm-samples";
pub const SAMPLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleHeader {
    pub format: String,
    pub version: u32,
    pub flavor: Flavor,
    pub p: usize,
    pub q: usize,
    pub n: usize,
    /// Number of known groups; zero for clustering runs.
    pub groups: usize,
    pub seed: u64,
    pub chain: usize,
    pub config_hash: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub y_names: Vec<String>,
    pub x_names: Vec<String>,
    pub standardization: Option<Standardization>,
}

/// Nonzero (thresholded) coefficient `(row, column, value)`.
pub type Entry = (usize, usize, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDraw {
    pub a: Vec<Entry>,
    pub b: Vec<Entry>,
    pub sigma: Vec<f64>,
}

impl GroupDraw {
    pub fn has_a(&self, row: usize, col: usize) -> bool {
        self.a.iter().any(|&(r, c, _)| r == row && c == col)
    }

    pub fn has_b(&self, row: usize, col: usize) -> bool {
        self.b.iter().any(|&(r, c, _)| r == row && c == col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub iter: usize,
    pub log_post: f64,
    /// Number of groups or (non-empty and empty) clusters in the state.
    pub k: usize,
    pub groups: Vec<GroupDraw>,
    /// Relatedness matrix, row-major `k x k`.
    pub omega: Vec<f64>,
    /// Cluster allocation (1-based, canonical order of first appearance).
    pub alloc: Option<Vec<usize>>,
}

impl Sample {
    pub fn omega_entry(&self, i: usize, j: usize) -> f64 {
        self.omega[i * self.k + j]
    }

    /// Number of non-empty clusters (or groups).
    pub fn occupied(&self) -> usize {
        match &self.alloc {
            Some(s) => s.iter().copied().max().unwrap_or(0),
            None => self.k,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub coefficient: Counter,
    pub threshold: Counter,
    pub omega: Counter,
    pub dimension: Counter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub header: SampleHeader,
    pub samples: Vec<Sample>,
    pub log_post_trace: Vec<f64>,
    pub acceptance: AcceptanceSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Header(SampleHeader),
    Sample(Sample),
    Trailer(Trailer),
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    log_post_trace: Vec<f64>,
    acceptance: AcceptanceSummary,
}

impl PosteriorSamples {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let line = |rec: &Record, w: &mut dyn Write| -> Result<()> {
            serde_json::to_writer(&mut *w, rec)?;
            w.write_all(b"\n").map_err(|e| Error::io("<samples>", e))
        };
        line(&Record::Header(self.header.clone()), &mut w)?;
        for s in &self.samples {
            line(&Record::Sample(s.clone()), &mut w)?;
        }
        line(
            &Record::Trailer(Trailer {
                log_post_trace: self.log_post_trace.clone(),
                acceptance: self.acceptance.clone(),
            }),
            &mut w,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |message: String| Error::Format { path: path.to_path_buf(), message };
        let mut header = None;
        let mut samples = Vec::new();
        let mut trailer = None;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record =
                serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
            match rec {
                Record::Header(h) => {
                    if h.format != SAMPLE_FORMAT || h.version != SAMPLE_FORMAT_VERSION {
                        return Err(bad(format!("unsupported format {} v{}", h.format, h.version)));
                    }
                    header = Some(h)
                }
                Record::Sample(s) => samples.push(s),
                Record::Trailer(t) => trailer = Some(t),
            }
        }
        let header = header.ok_or_else(|| bad("missing header record".into()))?;
        let trailer = trailer.ok_or_else(|| bad("missing trailer record (truncated file?)".into()))?;
        Ok(Self { header, samples, log_post_trace: trailer.log_post_trace, acceptance: trailer.acceptance })
    }
}
