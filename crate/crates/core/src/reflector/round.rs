use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::score::{pooled_subtasks, select_experiences, select_subtasks, subtask_score, SubtaskScore};
use super::update::{fisher_diag, reflect_update, ReflectLoss};
use super::{experience_score, ReflectorConfig};
use crate::craftworld::TaskSpec;
use crate::error::Result;
use crate::experience_pool::ExperiencePool;
use crate::planner::Subtask;
use crate::rng;
use crate::world_model::{ModelParams, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedExperience {
    /// Position in the pool at selection time.
    pub index: usize,
    pub episode_id: u64,
    pub t: u64,
    pub epsilon: f64,
    pub weight: f64,
}

/// Record of one reflection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumRound {
    pub k: u64,
    pub rho_subtask: f64,
    pub rho_exp: f64,
    /// Every pooled subtask with its score.
    pub subtask_scores: Vec<SubtaskScore>,
    pub selected_subtasks: Vec<(String, f64)>,
    /// Stage one kept nothing and the most recent subtask was used instead.
    pub fallback: bool,
    pub candidates: usize,
    /// Candidates dropped for a non-finite score.
    pub skipped: usize,
    pub selected_experiences: Vec<SelectedExperience>,
    pub loss: Option<ReflectLoss>,
}

impl CurriculumRound {
    fn empty(k: u64, cfg: &ReflectorConfig) -> Self {
        CurriculumRound {
            k,
            rho_subtask: super::threshold(cfg.rho0, cfg.c_s, k),
            rho_exp: super::threshold(cfg.rho0, cfg.c_h, k),
            subtask_scores: Vec::new(),
            selected_subtasks: Vec::new(),
            fallback: false,
            candidates: 0,
            skipped: 0,
            selected_experiences: Vec::new(),
            loss: None,
        }
    }
}

/// Uniform subset of at most `cap` positions, in ascending order.
fn subsample(indices: Vec<usize>, cap: usize, seed: u64, label: u64) -> Vec<usize> {
    if indices.len() <= cap {
        return indices;
    }
    let mut r = rng::stream(seed, &[rng::label::TRAIN, label]);
    let mut picked: Vec<usize> = sample(&mut r, indices.len(), cap).into_iter().map(|i| indices[i]).collect();
    picked.sort_unstable();
    picked
}

/// Round `k` of reflection: both selection stages, then the anchored update.
/// The archived parameters serve as the old model. Returns the round record
/// and the selected transitions with their weights.
pub fn reflect(
    pool: &ExperiencePool,
    goal: &TaskSpec,
    params: &mut ModelParams,
    cfg: &ReflectorConfig,
    k: u64,
    seed: u64,
) -> Result<(CurriculumRound, Vec<(Transition, f64)>)> {
    cfg.validate()?;
    let mut round = CurriculumRound::empty(k, cfg);
    if pool.len() == 0 {
        return Ok((round, Vec::new()));
    }
    let mut old = params.clone();
    old.theta.clone_from(&params.theta_old);
    let new = &*params;

    let ids: Vec<String> = pooled_subtasks(pool).into_iter().collect();
    let mut scores = Vec::with_capacity(ids.len());
    for (j, id) in ids.iter().enumerate() {
        let subtask = Subtask::from_id(id)?;
        let positions: Vec<usize> = (0..pool.len()).filter(|&i| pool.entry(i).is_some_and(|e| &e.subtask_id == id)).collect();
        let positions = subsample(positions, cfg.max_candidates, seed, 2 * j as u64);
        let entries: Vec<_> = positions.iter().filter_map(|&i| pool.entry(i)).collect();
        scores.push(subtask_score(&subtask, goal, pool, &entries, &old, new, cfg)?);
    }
    let kept: Vec<usize> = if cfg.stage1 {
        let (_, kept) = select_subtasks(&scores, k, cfg);
        kept
    } else {
        (0..scores.len()).collect()
    };
    round.selected_subtasks = if kept.is_empty() {
        round.fallback = true;
        let recent = pool.entries().next_back().expect("non-empty pool").subtask_id.clone();
        let tau = scores.iter().find(|s| s.subtask == recent).map_or(0.0, |s| s.tau);
        vec![(recent, tau)]
    } else {
        kept.iter().map(|&i| (scores[i].subtask.clone(), scores[i].tau)).collect()
    };
    round.subtask_scores = scores;

    let positions: Vec<usize> = (0..pool.len())
        .filter(|&i| {
            let e = pool.entry(i).expect("in range");
            round.selected_subtasks.iter().any(|(id, _)| *id == e.subtask_id)
        })
        .collect();
    let positions = subsample(positions, cfg.max_candidates, seed, 1);
    round.candidates = positions.len();

    let mut finite = Vec::with_capacity(positions.len());
    let mut eps = Vec::with_capacity(positions.len());
    for &i in &positions {
        let tr = pool.entry(i).expect("in range").transition();
        let e = experience_score(&tr, &old, new, cfg)?;
        if e.is_finite() {
            finite.push((i, tr));
            eps.push(e);
        } else {
            round.skipped += 1;
        }
    }
    if round.skipped > 0 {
        log::warn!("reflection round {k}: skipped {} transitions with non-finite scores", round.skipped);
    }
    let chosen: Vec<(usize, f64)> = if cfg.stage2 {
        select_experiences(&eps, k, cfg).1
    } else {
        (0..eps.len()).map(|j| (j, 1.0)).collect()
    };
    let mut selected = Vec::with_capacity(chosen.len());
    for (j, w) in chosen {
        let (i, tr) = &finite[j];
        let e = pool.entry(*i).expect("in range");
        round.selected_experiences.push(SelectedExperience {
            index: *i,
            episode_id: e.episode_id,
            t: e.t,
            epsilon: eps[j],
            weight: w,
        });
        selected.push((tr.clone(), w));
    }
    round.loss = reflect_update(params, &selected, cfg)?;
    Ok((round, selected))
}

/// Reflection state across rounds: the round counter and the last selection,
/// which feeds the Fisher estimate at task boundaries.
#[derive(Clone, Debug)]
pub struct Reflector {
    pub cfg: ReflectorConfig,
    pub k: u64,
    last_selected: Vec<Transition>,
}

impl Reflector {
    pub fn new(cfg: ReflectorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Reflector { cfg, k: 0, last_selected: Vec::new() })
    }

    pub fn reflect(&mut self, pool: &ExperiencePool, goal: &TaskSpec, params: &mut ModelParams, seed: u64) -> Result<CurriculumRound> {
        let (round, selected) = reflect(pool, goal, params, &self.cfg, self.k, seed)?;
        self.k += 1;
        if !selected.is_empty() {
            self.last_selected = selected.into_iter().map(|(t, _)| t).collect();
        }
        Ok(round)
    }

    /// Task boundary: Fisher over `transitions` (the last selection when
    /// empty), then archive `theta`.
    pub fn consolidate(&self, params: &mut ModelParams, transitions: &[Transition]) -> Result<()> {
        let data = if transitions.is_empty() { &self.last_selected[..] } else { transitions };
        params.fisher = fisher_diag(params, data)?;
        params.archive();
        Ok(())
    }
}
