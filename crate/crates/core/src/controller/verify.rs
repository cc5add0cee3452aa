use serde::{Deserialize, Serialize};

use super::select::ControlConfig;
use crate::craftworld::Observation;
use crate::planner::{cosine, embed_state, PlanStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Terminal,
    NTerminal,
}

/// Terminal iff the similarity reaches `sigma` or the step cap is hit.
pub fn verify_similarity(cos: f64, t: u64, cfg: &ControlConfig) -> Verdict {
    if cos >= cfg.sigma || t >= cfg.t_max {
        Verdict::Terminal
    } else {
        Verdict::NTerminal
    }
}

/// Similarity between the observed inventory and the step's subtask.
pub fn goal_similarity(obs: &Observation, step: &PlanStep) -> f64 {
    cosine(&embed_state(obs, &step.subtask, step.target_count), &step.subtask.embedding)
}

pub fn verify(obs: &Observation, step: &PlanStep, t: u64, cfg: &ControlConfig) -> Verdict {
    verify_similarity(goal_similarity(obs, step), t, cfg)
}
