use serde::{Deserialize, Serialize};

use rand::seq::IndexedRandom;
use rand::Rng;

use super::select::{select_actions, ControlConfig, Goal};
use super::verify::{goal_similarity, verify_similarity, Verdict};
use crate::craftworld::{Action, EnvState, Observation, RecipeBook};
use crate::error::Result;
use crate::experience_pool::{completion_ratio, ExperienceEntry, ExperiencePool};
use crate::planner::PlanStep;
use crate::rng;
use crate::world_model::{LatentState, ModelParams};

/// How actions are chosen inside a subtask episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Imagination-based selection with the world model.
    WorldModel,
    /// Uniform over the subtask's admissible actions.
    RandomAdmissible,
    /// Uniform over every action.
    RandomAll,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeReport {
    pub outcome: Outcome,
    pub steps: u64,
    pub completion: f64,
    /// The environment signalled the end of the task during the episode.
    pub env_done: bool,
    pub reward: f64,
}

/// Called after every environment step, e.g. to interleave model training.
pub trait StepHook {
    fn after_step(&mut self, params: &mut ModelParams, pool: &ExperiencePool) -> Result<()>;
}

pub struct NoHook;

impl StepHook for NoHook {
    fn after_step(&mut self, _: &mut ModelParams, _: &ExperiencePool) -> Result<()> {
        Ok(())
    }
}

/// Runs one subtask until verification says terminal, then appends the
/// trajectory to the pool with its completion ratio.
#[allow(clippy::too_many_arguments)]
pub fn run_subtask_episode(
    env: &mut EnvState,
    obs: &mut Observation,
    step: &PlanStep,
    params: &mut ModelParams,
    pool: &mut ExperiencePool,
    cfg: &ControlConfig,
    policy: Policy,
    episode_id: u64,
    seed: u64,
    hook: &mut dyn StepHook,
) -> Result<EpisodeReport> {
    let actions: Vec<Action> = match policy {
        Policy::RandomAll => Action::all(),
        _ => step.subtask.admissible_actions(),
    };
    let action_ids: Vec<usize> = actions.iter().map(|a| a.index()).collect();
    let goal = Goal::new(&step.subtask, step.target_count, obs.radius as usize);
    let mut policy_rng = rng::stream(seed, &[rng::label::POLICY]);
    let mut latent = match policy {
        Policy::WorldModel => Some(LatentState::initial(params, &obs.features(), None)?),
        _ => None,
    };
    let mut entries = Vec::new();
    let mut inventories = vec![obs.inventory];
    let mut t = 0u64;
    let mut env_done = false;
    let mut reward = 0.0;
    let mut cos = goal_similarity(obs, step);
    while verify_similarity(cos, t, cfg) == Verdict::NTerminal && !env_done {
        let explore = latent.is_some() && cfg.explore > 0.0 && policy_rng.random::<f64>() < cfg.explore;
        let action = match &latent {
            Some(l) if !explore => {
                let seq = select_actions(params, l, &action_ids, Some(&goal), cfg, rng::derive_seed(seed, &[t]))?;
                Action::from_index(seq[0])?
            }
            _ => *actions.choose(&mut policy_rng).expect("non-empty action set"),
        };
        let before = obs.clone();
        let out = env.step(action)?;
        *obs = out.observation;
        reward += out.reward;
        env_done = out.continue_flag == 0;
        entries.push(ExperienceEntry::new(before, action, out.reward, obs.clone(), env_done, episode_id, env.step_count - 1));
        inventories.push(obs.inventory);
        t += 1;
        hook.after_step(params, pool)?;
        if let Some(l) = &latent {
            latent = Some(l.advance(params, action.index(), &obs.features(), None)?);
        }
        cos = goal_similarity(obs, step);
    }
    let success = cos >= cfg.sigma;
    let completion = if success {
        1.0
    } else {
        completion_ratio(step.subtask.target_item, step.target_count, &inventories, &RecipeBook::normative())?.min(1.0)
    };
    if !entries.is_empty() {
        pool.append_trajectory(entries, &step.subtask.id, completion)?;
    }
    Ok(EpisodeReport {
        outcome: if success { Outcome::Success } else { Outcome::Timeout },
        steps: t,
        completion,
        env_done,
        reward,
    })
}
