use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::craftworld::TaskName;
use crate::experience_pool::{compute_metrics, EpisodeStats};
use crate::reflector::CurriculumRound;

/// One `metrics.csv` row: a task's scores under one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: TaskName,
    pub seed: u64,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "EE")]
    pub ee: f64,
    pub episodes: u64,
    pub steps: u64,
}

impl TaskMetrics {
    pub fn new(task: TaskName, seed: u64, stats: &EpisodeStats) -> Self {
        let (sr, ee) = compute_metrics(stats);
        TaskMetrics { task, seed, sr, ee, episodes: stats.episodes_total, steps: stats.steps_total }
    }
}

/// Frozen-parameter evaluation of `task` after training on task `phase` of the sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub seed: u64,
    pub phase: usize,
    pub trained: TaskName,
    pub task: TaskName,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "EE")]
    pub ee: f64,
    pub episodes: u64,
}

impl EvalRow {
    pub fn new(seed: u64, phase: usize, trained: TaskName, task: TaskName, stats: &EpisodeStats) -> Self {
        let (sr, ee) = compute_metrics(stats);
        EvalRow { seed, phase, trained, task, sr, ee, episodes: stats.episodes_total }
    }
}

/// Flattened curriculum round for `rounds.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub seed: u64,
    pub task: TaskName,
    /// Subtask whose episode triggered the round.
    pub subtask: String,
    pub k: u64,
    pub rho_subtask: f64,
    pub rho_exp: f64,
    pub subtasks_scored: usize,
    /// Selected subtask ids joined by `;`.
    pub subtasks_selected: String,
    pub fallback: bool,
    pub candidates: usize,
    pub experiences_selected: usize,
    pub skipped: usize,
    pub prediction_loss: f64,
    pub penalty: f64,
}

impl RoundRow {
    pub fn from_round(seed: u64, task: TaskName, subtask: &str, r: &CurriculumRound) -> Self {
        RoundRow {
            seed,
            task,
            subtask: subtask.to_string(),
            k: r.k,
            rho_subtask: r.rho_subtask,
            rho_exp: r.rho_exp,
            subtasks_scored: r.subtask_scores.len(),
            subtasks_selected: r.selected_subtasks.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>().join(";"),
            fallback: r.fallback,
            candidates: r.candidates,
            experiences_selected: r.selected_experiences.len(),
            skipped: r.skipped,
            prediction_loss: r.loss.map_or(0.0, |l| l.prediction.prediction()),
            penalty: r.loss.map_or(0.0, |l| l.penalty),
        }
    }
}

/// One world-model update for `losses.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub seed: u64,
    pub task: TaskName,
    pub update: u64,
    pub recon: f64,
    pub reward_nll: f64,
    pub continue_nll: f64,
    pub kl: f64,
    pub total: f64,
    pub critic_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Ablation row label.
    pub label: String,
    pub metrics: Vec<TaskMetrics>,
    pub evals: Vec<EvalRow>,
    pub rounds: Vec<RoundRow>,
    pub losses: Vec<LossRow>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: TaskName,
    pub seeds: usize,
    pub sr_mean: f64,
    pub sr_std: f64,
    pub ee_mean: f64,
    pub ee_std: f64,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MetricsReport {
    /// Per-task mean and spread over seeds, in task order.
    pub fn summary(&self) -> Vec<TaskSummary> {
        let mut by_task: BTreeMap<TaskName, Vec<&TaskMetrics>> = BTreeMap::new();
        for m in &self.metrics {
            by_task.entry(m.task).or_default().push(m);
        }
        by_task
            .into_iter()
            .map(|(task, rows)| {
                let (sr_mean, sr_std) = mean_std(&rows.iter().map(|r| r.sr).collect::<Vec<_>>());
                let (ee_mean, ee_std) = mean_std(&rows.iter().map(|r| r.ee).collect::<Vec<_>>());
                TaskSummary { task, seeds: rows.len(), sr_mean, sr_std, ee_mean, ee_std }
            })
            .collect()
    }

    /// SR of `task` for each seed, sorted by seed.
    pub fn sr_by_seed(&self, task: TaskName) -> BTreeMap<u64, f64> {
        self.metrics.iter().filter(|m| m.task == task).map(|m| (m.seed, m.sr)).collect()
    }

    /// Per seed: evaluation SR of `task` right after it was trained minus its
    /// SR after the last task of the sequence.
    pub fn forgetting(&self, task: TaskName) -> BTreeMap<u64, f64> {
        let mut out = BTreeMap::new();
        let seeds: std::collections::BTreeSet<u64> = self.evals.iter().map(|e| e.seed).collect();
        for seed in seeds {
            let rows: Vec<&EvalRow> = self.evals.iter().filter(|e| e.seed == seed && e.task == task).collect();
            let after_own = rows.iter().filter(|e| e.trained == task).min_by_key(|e| e.phase);
            let last = rows.iter().max_by_key(|e| e.phase);
            if let (Some(a), Some(b)) = (after_own, last) {
                out.insert(seed, a.sr - b.sr);
            }
        }
        out
    }
}

/// Exact one-sided p-value of the paired sign-flip test for `mean(x - y) > 0`.
/// Enumerates all `2^n` sign patterns, so `n` is capped at 20.
pub fn paired_one_sided_p(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "paired samples differ in length");
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len();
    assert!(n <= 20, "at most 20 pairs");
    if n == 0 {
        return 1.0;
    }
    let observed: f64 = d.iter().sum();
    let tol = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let mut hits = 0u64;
    for mask in 0u64..1 << n {
        let s: f64 = d.iter().enumerate().map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v }).sum();
        if s >= observed - tol {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}
