//! CSV and JSON persistence of sweep results.
//!
//! A sweep writes three files into its output directory:
//! `summary.csv` (one row per x-value and estimator), `trials.csv` (one row
//! per trial and estimator) and `metadata.json` (resolved configuration).

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::sweep::{Metric, SweepResult, SweepRow, TrialRecord};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRIALS_FILE: &str = "trials.csv";
pub const METADATA_FILE: &str = "metadata.json";

const SUMMARY_HEADER: [&str; 7] = ["snr_db", "frames", "estimator", "nmse_db", "nmse_ci", "ber", "trials"];
const TRIALS_HEADER: [&str; 8] = [
    "snr_db", "frames", "trial", "estimator", "nmse", "iterations", "bit_errors", "bits",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub metric: Metric,
    pub seed: u64,
    /// Frame counts of a frames sweep; empty otherwise.
    pub frames_values: Vec<usize>,
    pub config: ExperimentConfig,
    pub derived: DerivedValues,
    pub version: String,
}

/// Quantities computed from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedValues {
    pub wavelength: f64,
    pub radius: f64,
    pub r_min: f64,
    pub ring_constant: f64,
    pub sampling_arg: f64,
    pub theta_delta: f64,
    pub n_angles: usize,
    pub n_rings: usize,
    pub dictionary_columns: usize,
    pub path_r_min: f64,
    pub path_r_max: f64,
}

impl DerivedValues {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let s = cfg.build_setup()?;
        Ok(Self {
            wavelength: s.bs.wavelength(),
            radius: s.bs.radius(),
            r_min: s.codebook.r_min(),
            ring_constant: s.codebook.ring_constant(),
            sampling_arg: s.codebook.sampling_arg(),
            theta_delta: s.codebook.theta_delta(),
            n_angles: s.codebook.n_angles(),
            n_rings: s.codebook.n_rings(),
            dictionary_columns: s.dictionary.n_columns(),
            path_r_min: s.path_range.0,
            path_r_max: s.path_range.1,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub summary: PathBuf,
    pub trials: PathBuf,
    pub metadata: PathBuf,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let found = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::format(path, format!("unexpected header {found:?}")));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn write_summary(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_csv(path, &SUMMARY_HEADER, rows)
}

pub fn read_summary(path: &Path) -> Result<Vec<SweepRow>> {
    read_csv(path, &SUMMARY_HEADER)
}

pub fn write_trials(path: &Path, records: &[TrialRecord]) -> Result<()> {
    write_csv(path, &TRIALS_HEADER, records)
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    read_csv(path, &TRIALS_HEADER)
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes the summary, per-trial records and metadata into `dir`,
/// creating it if needed.
pub fn emit_results(
    result: &SweepResult,
    cfg: &ExperimentConfig,
    frames_values: &[usize],
    dir: &Path,
) -> Result<EmittedFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = EmittedFiles {
        summary: dir.join(SUMMARY_FILE),
        trials: dir.join(TRIALS_FILE),
        metadata: dir.join(METADATA_FILE),
    };
    write_summary(&files.summary, &result.rows)?;
    write_trials(&files.trials, &result.trials)?;
    let meta = Metadata {
        metric: result.metric,
        seed: cfg.seed,
        frames_values: frames_values.to_vec(),
        config: cfg.clone(),
        derived: DerivedValues::from_config(cfg)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::format(&files.metadata, e.to_string()))?;
    let mut f = File::create(&files.metadata).map_err(|e| Error::io(&files.metadata, e))?;
    f.write_all(json.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| Error::io(&files.metadata, e))?;
    Ok(files)
}

/// Reads back a directory written by [`emit_results`].
pub fn load_results(dir: &Path) -> Result<(SweepResult, Metadata)> {
    let meta = read_metadata(&dir.join(METADATA_FILE))?;
    let result = SweepResult {
        metric: meta.metric,
        rows: read_summary(&dir.join(SUMMARY_FILE))?,
        trials: read_trials(&dir.join(TRIALS_FILE))?,
    };
    Ok((result, meta))
}
