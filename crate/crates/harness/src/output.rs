//! Result persistence: CSV tables and a JSON manifest.
//!
//! `runs.csv` and `curves.csv` are byte-deterministic given identical
//! records; the manifest additionally carries wall time, so only the CSVs
//! are covered by the reproducibility contract.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::aggregate::AggregateCurve;
use crate::config::ExperimentConfig;
use crate::run::{RunFailure, RunRecord};

/// An IO failure annotated with the path it happened on.
#[derive(Debug)]
pub struct IoError {
    pub path: PathBuf,
    pub source: io::Error,
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for IoError {}

fn annotate<T>(path: &Path, r: io::Result<T>) -> Result<T, IoError> {
    r.map_err(|source| IoError { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunStatus {
    pub seed: u64,
    pub strategy: String,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub runs: Vec<RunStatus>,
}

/// Files produced by [`write_results`].
#[derive(Debug, Clone)]
pub struct FileManifest {
    pub runs_csv: PathBuf,
    pub curves_csv: PathBuf,
    pub manifest_json: PathBuf,
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.canonical_json().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    annotate(
        path,
        (|| {
            w.write_record(["seed", "strategy", "t", "perspective", "normalized_reward"])?;
            for r in records {
                w.write_record([
                    r.seed.to_string(),
                    r.strategy.clone(),
                    r.t.to_string(),
                    r.perspective.to_string(),
                    r.normalized_reward.to_string(),
                ])?;
            }
            let bytes = w.into_inner().map_err(io::Error::other)?;
            fs::write(path, bytes)
        })(),
    )
}

fn write_curves_csv(path: &Path, curves: &[AggregateCurve]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    annotate(
        path,
        (|| {
            w.write_record(["strategy", "t", "mean", "ci_lo", "ci_hi", "n"])?;
            for c in curves {
                w.write_record([
                    c.strategy.clone(),
                    c.t.to_string(),
                    c.mean.to_string(),
                    c.ci_lo.to_string(),
                    c.ci_hi.to_string(),
                    c.n_seeds.to_string(),
                ])?;
            }
            let bytes = w.into_inner().map_err(io::Error::other)?;
            fs::write(path, bytes)
        })(),
    )
}

/// Writes `runs.csv`, `curves.csv` and `manifest.json` into `out_dir`,
/// creating it if needed.
pub fn write_results(
    records: &[RunRecord],
    curves: &[AggregateCurve],
    failures: &[RunFailure],
    config: &ExperimentConfig,
    wall_time_secs: f64,
    out_dir: &Path,
) -> Result<FileManifest, IoError> {
    annotate(out_dir, fs::create_dir_all(out_dir))?;
    let runs_csv = out_dir.join("runs.csv");
    let curves_csv = out_dir.join("curves.csv");
    let manifest_json = out_dir.join("manifest.json");

    write_runs_csv(&runs_csv, records)?;
    write_curves_csv(&curves_csv, curves)?;

    let mut runs: Vec<RunStatus> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        if seen.insert((r.strategy.clone(), r.seed)) {
            runs.push(RunStatus {
                seed: r.seed,
                strategy: r.strategy.clone(),
                status: "ok".to_string(),
            });
        }
    }
    for f in failures {
        runs.push(RunStatus {
            seed: f.seed,
            strategy: f.strategy.clone(),
            status: format!("failed: {}", f.error),
        });
    }
    runs.sort_by(|a, b| (a.strategy.as_str(), a.seed).cmp(&(b.strategy.as_str(), b.seed)));

    let manifest = Manifest {
        tool: "tpil".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind: config.kind.to_string(),
        config: config.clone(),
        config_hash: config_hash(config),
        wall_time_secs,
        runs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    annotate(&manifest_json, fs::write(&manifest_json, text))?;

    Ok(FileManifest { runs_csv, curves_csv, manifest_json })
}
