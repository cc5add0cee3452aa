use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ablation_grid, RunConfig};
use super::emit::{emit, write_csv};
use super::metrics::MetricsReport;
use super::run::run;
use crate::craftworld::TaskName;
use crate::error::Result;

/// One line of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub row: String,
    pub task: TaskName,
    pub seeds: usize,
    pub sr_mean: f64,
    pub sr_std: f64,
    pub ee_mean: f64,
    pub ee_std: f64,
}

pub const ABLATION_HEADER: &[&str] = &["row", "task", "seeds", "sr_mean", "sr_std", "ee_mean", "ee_std"];

pub fn ablation_table(reports: &[MetricsReport]) -> Vec<AblationRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.summary().into_iter().map(move |s| AblationRow {
                row: r.label.clone(),
                task: s.task,
                seeds: s.seeds,
                sr_mean: s.sr_mean,
                sr_std: s.sr_std,
                ee_mean: s.ee_mean,
                ee_std: s.ee_std,
            })
        })
        .collect()
}

/// Runs every grid row with the base config's seeds. With `out`, each row is
/// emitted into its own subdirectory and the table goes to `ablation.csv`.
pub fn ablate(base: &RunConfig, out: Option<&Path>) -> Result<Vec<MetricsReport>> {
    let mut reports = Vec::new();
    for toggles in ablation_grid() {
        let cfg = base.with_toggles(toggles);
        log::info!("ablation row {}", toggles.label());
        let report = run(&cfg)?;
        if out.is_some() {
            emit(&report, &cfg, &cfg.output_dir)?;
        }
        reports.push(report);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("ablation.csv"), ABLATION_HEADER, &ablation_table(&reports))?;
    }
    Ok(reports)
}
