use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{cosine, Subtask, SubtaskKind};
use crate::rng;
use crate::craftworld::{Item, Observation, Tile, COUNT_CLIP};
use crate::world_model::nn::logistic;
use crate::world_model::rssm::{concat, decode_range, gaussian_head, scalar_head, sequence_cache, Head, ScalarHead};
use crate::world_model::{LatentState, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    /// Imagination horizon.
    pub horizon: usize,
    /// Sampled candidate sequences when enumeration is too large.
    pub candidates: usize,
    /// Discount of the imagined score.
    pub gamma: f64,
    /// Verification similarity threshold.
    pub sigma: f64,
    /// Step cap of one subtask episode.
    pub t_max: u64,
    /// Weight of the goal-similarity bonus.
    pub alpha: f64,
    /// Enumerate every sequence when there are at most this many.
    pub exhaustive_limit: usize,
    /// Cross-entropy refinement rounds after the first sample (0 disables).
    pub cem_iters: usize,
    /// Fraction of candidates kept as elites in each refinement round.
    pub cem_elite_frac: f64,
    /// Weight of the nearest predicted source tile in the bonus of gather subtasks.
    pub view_bonus: f64,
    /// Probability of replacing the planned action by a uniform admissible one.
    pub explore: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            horizon: 15,
            candidates: 64,
            gamma: 0.1,
            sigma: 0.9,
            t_max: 400,
            alpha: 0.5,
            exhaustive_limit: 4096,
            cem_iters: 0,
            cem_elite_frac: 0.125,
            view_bonus: 0.0,
            explore: 0.0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.candidates == 0 || self.t_max == 0 {
            return Err(Error::Config("horizon, candidates and t_max must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::Config(format!("sigma {} outside (0, 1]", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.explore) || !(self.view_bonus >= 0.0) {
            return Err(Error::Config("explore must be in [0, 1] and view_bonus non-negative".into()));
        }
        if !(self.cem_elite_frac > 0.0 && self.cem_elite_frac <= 1.0) {
            return Err(Error::Config("cem_elite_frac must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// What the similarity bonus aims at: a subtask, the count of its target,
/// and where the inventory block sits in the decoder output.
#[derive(Clone, Debug)]
pub struct Goal<'a> {
    pub subtask: &'a Subtask,
    pub target_count: u32,
    pub inventory: Range<usize>,
    /// View radius and the tile that yields the target, for gather subtasks.
    pub source: Option<(usize, Tile)>,
}

impl<'a> Goal<'a> {
    /// Goal over observations with view radius `radius`.
    pub fn new(subtask: &'a Subtask, target_count: u32, radius: usize) -> Self {
        let off = Observation::inventory_offset(radius);
        let source = match subtask.kind {
            SubtaskKind::Gather => Tile::source_of(subtask.target_item).map(|t| (radius, t)),
            SubtaskKind::Craft => None,
        };
        Goal { subtask, target_count, inventory: off..off + Item::COUNT, source }
    }

    /// Largest `p(source) / (1 + d)` over the decoded view, `d` being the
    /// Manhattan distance from the agent.
    pub fn source_proximity(&self, tiles: &[f64]) -> f64 {
        let Some((radius, tile)) = self.source else { return 0.0 };
        let side = 2 * radius + 1;
        let mut best = 0.0f64;
        for cell in 0..side * side {
            let (r, c) = ((cell / side) as isize, (cell % side) as isize);
            let d = (r - radius as isize).abs() + (c - radius as isize).abs();
            let p = tiles[cell * Tile::COUNT + tile.index()].clamp(0.0, 1.0);
            best = best.max(p / (1.0 + d as f64));
        }
        best
    }

    /// Graded version of the verification embedding: each feature is the
    /// fraction of its requirement met, with one extra coordinate holding the
    /// unmet remainder so that partial progress scores below completion.
    pub fn soft_similarity(&self, counts: &[f64; Item::COUNT]) -> f64 {
        let book = crate::craftworld::RecipeBook::normative();
        let row = book.requirements(self.subtask.target_item).expect("registered subtask");
        let target = self.subtask.target_item;
        let done = (counts[target.index()] / self.target_count.max(1) as f64).clamp(0.0, 1.0);
        let mut v = vec![0.0; Item::COUNT + 1];
        let mut unmet = (1.0 - done).powi(2);
        v[target.index()] = done;
        let mut feature = |item: Item, need: f64| {
            let f = (counts[item.index()] / need).clamp(0.0, 1.0).max(done);
            v[item.index()] = f;
            unmet += (1.0 - f).powi(2);
        };
        for &(input, q) in &row.inputs {
            feature(input, q as f64);
        }
        if let Some(tool) = row.tool {
            feature(tool, 1.0);
        }
        v[Item::COUNT] = unmet.sqrt();
        let mut e = self.subtask.embedding.clone();
        e.push(0.0);
        cosine(&v, &e)
    }
}

/// Per-step goal-aligned reward: predicted reward plus the weighted similarity bonus.
fn step_reward(params: &ModelParams, latent: &[f64], goal: Option<&Goal>, cfg: &ControlConfig) -> f64 {
    let r = scalar_head(params, ScalarHead::Reward, latent);
    let Some(g) = goal else { return r };
    let view = cfg.view_bonus != 0.0 && g.source.is_some();
    if cfg.alpha == 0.0 && !view {
        return r;
    }
    let start = if view { 0 } else { g.inventory.start };
    let out = decode_range(params, latent, start..g.inventory.end);
    let mut counts = [0.0; Item::COUNT];
    for (c, o) in counts.iter_mut().zip(&out[g.inventory.start - start..]) {
        *c = o * COUNT_CLIP as f64;
    }
    let mut bonus = cfg.alpha * g.soft_similarity(&counts);
    if view {
        bonus += cfg.view_bonus * g.source_proximity(&out[..g.inventory.start]);
    }
    r + bonus
}

/// Mean-latent rollout step.
fn advance(params: &ModelParams, h: &[f64], z: &[f64], a: usize) -> (Vec<f64>, Vec<f64>) {
    let h2 = sequence_cache(params, h, z, a).h;
    let z2 = gaussian_head(params, Head::Dynamics, &h2).mu;
    (h2, z2)
}

/// Discounted goal-aligned return of one action sequence, scored on the prior mean.
pub fn score_sequence(params: &ModelParams, start: &LatentState, seq: &[usize], goal: Option<&Goal>, cfg: &ControlConfig) -> f64 {
    let (mut h, mut z) = (start.h.clone(), start.z.clone());
    let mut score = 0.0;
    for (tau, &a) in seq.iter().enumerate() {
        (h, z) = advance(params, &h, &z, a);
        let latent = concat(&[&h, &z]);
        score += cfg.gamma.powi(tau as i32) * step_reward(params, &latent, goal, cfg);
    }
    score
}

/// Imagined continuation probability along a sequence (diagnostics).
pub fn continue_probability(params: &ModelParams, start: &LatentState, seq: &[usize]) -> f64 {
    let (mut h, mut z) = (start.h.clone(), start.z.clone());
    let mut p = 1.0;
    for &a in seq {
        (h, z) = advance(params, &h, &z, a);
        p *= logistic(scalar_head(params, ScalarHead::Continue, &concat(&[&h, &z])));
    }
    p
}

struct Best {
    score: f64,
    seq: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    params: &ModelParams,
    h: &[f64],
    z: &[f64],
    prefix: &mut Vec<usize>,
    prefix_score: f64,
    actions: &[usize],
    goal: Option<&Goal>,
    cfg: &ControlConfig,
    best: &mut Option<Best>,
) {
    let tau = prefix.len();
    if tau == cfg.horizon {
        if best.as_ref().is_none_or(|b| prefix_score > b.score) {
            *best = Some(Best { score: prefix_score, seq: prefix.clone() });
        }
        return;
    }
    for &a in actions {
        let (h2, z2) = advance(params, h, z, a);
        let latent = concat(&[&h2, &z2]);
        let s = prefix_score + cfg.gamma.powi(tau as i32) * step_reward(params, &latent, goal, cfg);
        prefix.push(a);
        enumerate(params, &h2, &z2, prefix, s, actions, goal, cfg, best);
        prefix.pop();
    }
}

/// Number of sequences of length `horizon` over `n` actions, saturating.
fn sequence_count(n: usize, horizon: usize) -> usize {
    (0..horizon).try_fold(1usize, |acc, _| acc.checked_mul(n)).unwrap_or(usize::MAX)
}

/// Highest-scoring action sequence of length `cfg.horizon` over `actions`.
/// Small spaces are enumerated in lexicographic order of candidate index;
/// larger ones use `cfg.candidates` uniform samples (optionally refined by
/// cross-entropy rounds). Ties go to the lowest candidate index.
pub fn select_actions(
    params: &ModelParams,
    start: &LatentState,
    actions: &[usize],
    goal: Option<&Goal>,
    cfg: &ControlConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    if actions.is_empty() {
        return Err(Error::Validation("no admissible action".into()));
    }
    if let Some(&a) = actions.iter().find(|&&a| a >= params.dims.action) {
        return Err(Error::Shape(format!("action {a} outside the model's action space")));
    }
    if actions.len() == 1 {
        return Ok(vec![actions[0]; cfg.horizon]);
    }
    if sequence_count(actions.len(), cfg.horizon) <= cfg.exhaustive_limit {
        let mut best = None;
        enumerate(params, &start.h, &start.z, &mut Vec::with_capacity(cfg.horizon), 0.0, actions, goal, cfg, &mut best);
        return Ok(best.expect("at least one sequence").seq);
    }
    let mut r = rng::stream(seed, &[rng::label::SHOOTING]);
    let n = actions.len();
    let mut probs = vec![vec![1.0 / n as f64; n]; cfg.horizon];
    let mut best: Option<Best> = None;
    for round in 0..=cfg.cem_iters {
        let mut scored: Vec<(f64, Vec<usize>)> = (0..cfg.candidates)
            .map(|_| {
                let idx: Vec<usize> = probs.iter().map(|p| sample_categorical(&mut r, p)).collect();
                let seq: Vec<usize> = idx.iter().map(|&i| actions[i]).collect();
                (score_sequence(params, start, &seq, goal, cfg), idx)
            })
            .collect();
        for (s, idx) in &scored {
            if best.as_ref().is_none_or(|b| *s > b.score) {
                best = Some(Best { score: *s, seq: idx.iter().map(|&i| actions[i]).collect() });
            }
        }
        if round == cfg.cem_iters {
            break;
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let n_elite = ((cfg.candidates as f64 * cfg.cem_elite_frac).ceil() as usize).clamp(1, cfg.candidates);
        for (tau, p) in probs.iter_mut().enumerate() {
            let mut counts = vec![0.5 / n as f64; n];
            for (_, idx) in &scored[..n_elite] {
                counts[idx[tau]] += 1.0;
            }
            let total: f64 = counts.iter().sum();
            p.iter_mut().zip(&counts).for_each(|(p, c)| *p = c / total);
        }
    }
    Ok(best.expect("at least one candidate").seq)
}

fn sample_categorical(r: &mut impl Rng, p: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}
