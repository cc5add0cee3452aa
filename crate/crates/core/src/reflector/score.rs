use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ReflectorConfig;
use crate::craftworld::TaskSpec;
use crate::error::Result;
use crate::experience_pool::{ExperienceEntry, ExperiencePool};
use crate::planner::{cosine, Subtask};
use crate::world_model::nn::{gaussian_kl, l2_norm};
use crate::world_model::{
    critic_value, loss_and_grad, prior, sequence_step, LatentState, LossConfig, ModelParams, Noise, Transition, Window,
};

/// `rho0 * exp(-c k)`.
pub fn threshold(rho0: f64, c: f64, k: u64) -> f64 {
    rho0 * (-c * k as f64).exp()
}

/// Maps `[0, inf)` onto `[0, 1)`.
pub fn squash(x: f64) -> f64 {
    x / (1.0 + x)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubtaskTerms {
    pub similarity: f64,
    pub efficiency: f64,
    /// Squashed mean KL between the archived and current prior predictions.
    pub importance: f64,
    pub completion: f64,
}

impl SubtaskTerms {
    pub fn score(&self, cfg: &ReflectorConfig) -> f64 {
        let l = cfg.lambda;
        l[0] * self.similarity + l[1] * self.efficiency + l[2] * self.importance + l[3] * self.completion
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtaskScore {
    pub subtask: String,
    pub terms: SubtaskTerms,
    pub tau: f64,
}

/// Gaussian prior over the next stochastic state after `action`, starting
/// from the mean posterior of `obs`.
pub fn prior_prediction(params: &ModelParams, tr: &Transition) -> Result<(Vec<f64>, Vec<f64>)> {
    let start = LatentState::initial(params, &tr.obs, None)?;
    let mut a = vec![0.0; params.dims.action];
    a[tr.action] = 1.0;
    let h = sequence_step(params, &start.h, &start.z, &a)?;
    let p = prior(params, &h, None)?;
    Ok((p.mu, p.sigma))
}

/// Stage-one score of `subtask`. `entries` are the pooled transitions used
/// for the importance term.
pub fn subtask_score(
    subtask: &Subtask,
    goal: &TaskSpec,
    pool: &ExperiencePool,
    entries: &[&ExperienceEntry],
    old: &ModelParams,
    new: &ModelParams,
    cfg: &ReflectorConfig,
) -> Result<SubtaskScore> {
    let goal_subtask = Subtask::for_item(goal.target_item)?;
    let mut kl = 0.0;
    for e in entries {
        let tr = e.transition();
        let (mo, so) = prior_prediction(old, &tr)?;
        let (mn, sn) = prior_prediction(new, &tr)?;
        kl += gaussian_kl(&mo, &so, &mn, &sn);
    }
    let importance = if entries.is_empty() { 0.0 } else { squash(kl / entries.len() as f64) };
    let segments: Vec<f64> = pool
        .segments()
        .into_iter()
        .filter_map(|s| pool.entry(s.start).filter(|e| e.subtask_id == subtask.id).map(|e| e.completion))
        .collect();
    let completion = if segments.is_empty() { 0.0 } else { segments.iter().sum::<f64>() / segments.len() as f64 };
    let terms = SubtaskTerms {
        similarity: cosine(&subtask.embedding, &goal_subtask.embedding),
        efficiency: pool.subtask_stats(&subtask.id).efficiency(),
        importance,
        completion,
    };
    Ok(SubtaskScore { subtask: subtask.id.clone(), tau: terms.score(cfg), terms })
}

/// Indices of the scores at or above the round-`k` threshold.
pub fn select_subtasks(scores: &[SubtaskScore], k: u64, cfg: &ReflectorConfig) -> (f64, Vec<usize>) {
    let rho = threshold(cfg.rho0, cfg.c_s, k);
    let taus: Vec<f64> = scores.iter().map(|s| s.tau).collect();
    (rho, above(&normalized(&taus, cfg.normalize_scores), rho))
}

fn normalized(xs: &[f64], on: bool) -> Vec<f64> {
    let max = xs.iter().copied().fold(0.0, f64::max);
    if on && max > 0.0 {
        xs.iter().map(|x| x / max).collect()
    } else {
        xs.to_vec()
    }
}

fn above(xs: &[f64], rho: f64) -> Vec<usize> {
    xs.iter().enumerate().filter(|(_, x)| **x >= rho).map(|(i, _)| i).collect()
}

/// Raw per-transition terms before squashing and weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperienceTerms {
    /// Absolute TD error of the current critic.
    pub td: f64,
    pub grad_norm: f64,
    /// KL from the current to the archived prior prediction.
    pub kl: f64,
}

impl ExperienceTerms {
    pub fn score(&self, cfg: &ReflectorConfig) -> f64 {
        let f = |x: f64| if cfg.normalize_scores { squash(x) } else { x };
        cfg.eta[0] * f(self.td) + cfg.eta[1] * f(self.grad_norm) + cfg.eta[2] * f(self.kl)
    }
}

pub fn experience_terms(tr: &Transition, old: &ModelParams, new: &ModelParams, cfg: &ReflectorConfig) -> Result<ExperienceTerms> {
    let start = LatentState::initial(new, &tr.obs, None)?;
    let next = start.advance(new, tr.action, &tr.next_obs, None)?;
    let cont = if tr.done { 0.0 } else { 1.0 };
    let td = tr.reward + cfg.gamma_c * cont * critic_value(new, &next.h, &next.z)? - critic_value(new, &start.h, &start.z)?;

    let window = Window::new(vec![tr.clone()]);
    let (_, g) = loss_and_grad(new, &[window], &LossConfig::prediction_only(), Noise::Mean)?;
    let grad_norm = if cfg.full_param_grad {
        l2_norm(&g)
    } else {
        l2_norm(&g[prediction_heads(new)])
    };

    let (mn, sn) = prior_prediction(new, tr)?;
    let (mo, so) = prior_prediction(old, tr)?;
    Ok(ExperienceTerms { td: td.abs(), grad_norm, kl: gaussian_kl(&mn, &sn, &mo, &so) })
}

/// Decoder, reward and continue heads, which sit next to each other.
pub(crate) fn prediction_heads(params: &ModelParams) -> std::ops::Range<usize> {
    let start = params.layout.head_range("decoder").expect("decoder head").start;
    let end = params.layout.head_range("continue").expect("continue head").end;
    start..end
}

/// Stage-two score; NaN when any term is not finite.
pub fn experience_score(tr: &Transition, old: &ModelParams, new: &ModelParams, cfg: &ReflectorConfig) -> Result<f64> {
    let t = experience_terms(tr, old, new, cfg)?;
    if [t.td, t.grad_norm, t.kl].iter().any(|x| !x.is_finite()) {
        return Ok(f64::NAN);
    }
    Ok(t.score(cfg))
}

/// Round-`k` threshold and the `(index, weight)` pairs that pass it, with
/// weights relative to the largest selected score.
pub fn select_experiences(scores: &[f64], k: u64, cfg: &ReflectorConfig) -> (f64, Vec<(usize, f64)>) {
    let rho = threshold(cfg.rho0, cfg.c_h, k);
    let kept = above(&normalized(scores, cfg.normalize_scores), rho);
    let max = kept.iter().map(|&i| scores[i]).fold(0.0, f64::max);
    (rho, kept.into_iter().map(|i| (i, scores[i] / max)).collect())
}

/// Distinct subtask ids in pool order of first appearance, sorted.
pub(crate) fn pooled_subtasks(pool: &ExperiencePool) -> BTreeSet<String> {
    pool.entries().map(|e| e.subtask_id.clone()).collect()
}
