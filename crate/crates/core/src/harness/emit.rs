//! Run artifacts. Every CSV has a fixed header row, written even when the
//! table is empty:
//!
//! - `metrics.csv`: `task,seed,SR,EE,episodes,steps`
//! - `evals.csv`: `seed,phase,trained,task,SR,EE,episodes`
//! - `rounds.csv`: one reflection round per row
//! - `losses.csv`: one world-model update per row
//! - `summary.csv`: per-task mean and standard deviation over seeds
//! - `manifest.json`: config hash, crate version, seeds and failures

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{EvalRow, LossRow, MetricsReport, RoundRow, SeedFailure, TaskMetrics, TaskSummary};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &[&str] = &["task", "seed", "SR", "EE", "episodes", "steps"];
pub const EVALS_HEADER: &[&str] = &["seed", "phase", "trained", "task", "SR", "EE", "episodes"];
pub const ROUNDS_HEADER: &[&str] = &[
    "seed",
    "task",
    "subtask",
    "k",
    "rho_subtask",
    "rho_exp",
    "subtasks_scored",
    "subtasks_selected",
    "fallback",
    "candidates",
    "experiences_selected",
    "skipped",
    "prediction_loss",
    "penalty",
];
pub const LOSSES_HEADER: &[&str] =
    &["seed", "task", "update", "recon", "reward_nll", "continue_nll", "kl", "total", "critic_mse"];
pub const SUMMARY_HEADER: &[&str] = &["task", "seeds", "sr_mean", "sr_std", "ee_mean", "ee_std"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub label: String,
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub failures: Vec<SeedFailure>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Writes every table and the manifest into `dir`.
pub fn emit(report: &MetricsReport, cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv::<TaskMetrics>(&dir.join("metrics.csv"), METRICS_HEADER, &report.metrics)?;
    write_csv::<EvalRow>(&dir.join("evals.csv"), EVALS_HEADER, &report.evals)?;
    write_csv::<RoundRow>(&dir.join("rounds.csv"), ROUNDS_HEADER, &report.rounds)?;
    write_csv::<LossRow>(&dir.join("losses.csv"), LOSSES_HEADER, &report.losses)?;
    write_csv::<TaskSummary>(&dir.join("summary.csv"), SUMMARY_HEADER, &report.summary())?;
    let manifest = Manifest {
        label: report.label.clone(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: cfg.seeds.clone(),
        failures: report.failures.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.into()))?;
    fs::write(dir.join("manifest.json"), json)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

/// Reads back the tables written by [`emit`].
pub fn load_report(dir: &Path) -> Result<MetricsReport> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?).map_err(|e| Error::Io(e.into()))?;
    Ok(MetricsReport {
        label: manifest.label,
        metrics: read_csv(&dir.join("metrics.csv"))?,
        evals: read_csv(&dir.join("evals.csv"))?,
        rounds: read_csv(&dir.join("rounds.csv"))?,
        losses: read_csv(&dir.join("losses.csv"))?,
        failures: manifest.failures,
    })
}
