//! Curriculum reflection over the experience pool.
//!
//! Stage one ranks the subtasks present in the pool, stage two ranks
//! individual transitions of the kept subtasks, and the survivors drive a
//! weighted prediction-loss step anchored to the archived parameters by the
//! diagonal Fisher penalty.

mod round;
mod score;
mod update;

pub use round::{reflect, CurriculumRound, Reflector, SelectedExperience};
pub use score::{
    experience_score, experience_terms, prior_prediction, select_experiences, select_subtasks, squash,
    subtask_score, threshold, ExperienceTerms, SubtaskScore, SubtaskTerms,
};
pub use update::{anchor_step, ewc_gradient, ewc_penalty, fisher_diag, reflect_update, ReflectLoss};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world_model::DESK_LR;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflectorConfig {
    /// Weights of similarity, efficiency, importance and completion in the subtask score.
    pub lambda: [f64; 4],
    /// Weights of TD error, gradient norm and information gain in the experience score.
    pub eta: [f64; 3],
    pub rho0: f64,
    /// Threshold decay rate for subtasks.
    pub c_s: f64,
    /// Threshold decay rate for experiences.
    pub c_h: f64,
    /// Strength of the Fisher penalty.
    pub mu: f64,
    /// Divide each round's scores by the round maximum before thresholding.
    pub normalize_scores: bool,
    /// When off, every pooled subtask passes stage one.
    pub stage1: bool,
    /// When off, every candidate transition passes stage two with weight 1.
    pub stage2: bool,
    /// Gradient-norm term over all parameters rather than the prediction heads.
    pub full_param_grad: bool,
    /// Discount of the critic's TD error.
    pub gamma_c: f64,
    pub lr: f64,
    /// Transitions drawn per round for scoring.
    pub max_candidates: usize,
}

impl Default for ReflectorConfig {
    fn default() -> Self {
        ReflectorConfig {
            lambda: [0.25; 4],
            eta: [1.0 / 3.0; 3],
            rho0: 5e-3,
            c_s: 0.3,
            c_h: 0.5,
            mu: 0.1,
            normalize_scores: true,
            stage1: true,
            stage2: true,
            full_param_grad: false,
            gamma_c: 0.95,
            lr: DESK_LR,
            max_candidates: 128,
        }
    }
}

impl ReflectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if (self.lambda.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.lambda.iter().any(|l| *l < 0.0) {
            return bad(format!("lambda weights {:?} must be non-negative and sum to 1", self.lambda));
        }
        if (self.eta.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.eta.iter().any(|e| *e < 0.0) {
            return bad(format!("eta weights {:?} must be non-negative and sum to 1", self.eta));
        }
        if !(self.rho0 > 0.0) || !(self.c_s > 0.0) || !(self.c_h > 0.0) {
            return bad("rho0, c_s and c_h must be positive".into());
        }
        if !(self.mu >= 0.0) || !(self.lr > 0.0) {
            return bad("mu must be non-negative and lr positive".into());
        }
        if !(0.0..1.0).contains(&self.gamma_c) {
            return bad(format!("gamma_c {} must lie in [0, 1)", self.gamma_c));
        }
        if self.max_candidates == 0 {
            return bad("max_candidates must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
