//! Orchestration: configuration, the closed plan-act-reflect loop over a
//! task sequence, metrics, the ablation grid and artifact emission.

mod ablate;
mod config;
mod emit;
mod metrics;
mod run;

pub use ablate::{ablate, ablation_table, AblationRow, ABLATION_HEADER};
pub use config::{ablation_grid, ModelSize, OptimizerKind, RunConfig, Toggles, TrainSchedule};
pub use emit::{emit, load_report, read_csv, write_csv, Manifest, METRICS_HEADER};
pub use metrics::{mean_std, paired_one_sided_p, EvalRow, LossRow, MetricsReport, RoundRow, SeedFailure, TaskMetrics, TaskSummary};
pub use run::{evaluate, run, run_saving, run_seed, task_episode, EpisodeContext, Learning, Mode, SeedOutput, Trainer};

pub use crate::experience_pool::compute_metrics;

#[cfg(test)]
mod tests;
