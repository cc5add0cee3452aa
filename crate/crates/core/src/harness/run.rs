use std::path::Path;

use rand::seq::IndexedRandom;
use rayon::prelude::*;

use super::config::{OptimizerKind, RunConfig};
use super::metrics::{EvalRow, LossRow, MetricsReport, RoundRow, SeedFailure, TaskMetrics};
use crate::controller::{run_subtask_episode, ControlConfig, NoHook, Outcome, Policy, StepHook};
use crate::craftworld::{reset, task_success, Action, EnvConfig, TaskName, TaskSpec};
use crate::error::{Error, Result};
use crate::experience_pool::{EpisodeStats, ExperiencePool};
use crate::planner::{self, llm_propose, state_counts, LlmClient, Replanner};
use crate::reflector::{anchor_step, Reflector};
use crate::rng::{self, derive_seed};
use crate::world_model::snapshot;
use crate::world_model::{
    critic_update, train_step, CriticSample, LaProp, LatentState, ModelParams, Noise, Optimizer, Sgd, TrainConfig, Window,
};

/// How a task episode picks actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// No plan; uniform over every action for the whole budget.
    Unplanned,
    /// Plan, then run each subtask with the given policy.
    Planned(Policy),
}

impl Mode {
    pub fn of(cfg: &RunConfig) -> Self {
        match (cfg.toggles.planner, cfg.toggles.controller) {
            (false, _) => Mode::Unplanned,
            (true, false) => Mode::Planned(Policy::RandomAdmissible),
            (true, true) => Mode::Planned(Policy::WorldModel),
        }
    }
}

/// Interleaved world-model and critic training, run every `every` steps.
pub struct Trainer {
    every: u64,
    batch: usize,
    window: usize,
    cfg: TrainConfig,
    critic_lr: f64,
    gamma_c: f64,
    /// Fisher anchor strength; zero unless the continual world model is on.
    anchor_mu: f64,
    opt: Box<dyn Optimizer + Send>,
    seed: u64,
    steps: u64,
    pub updates: u64,
    pub task: TaskName,
    pub log: Vec<LossRow>,
}

impl Trainer {
    pub fn new(cfg: &RunConfig, n_params: usize, seed: u64) -> Self {
        let t = &cfg.train;
        let opt: Box<dyn Optimizer + Send> = match t.optimizer {
            OptimizerKind::Sgd => Box::new(Sgd),
            OptimizerKind::Laprop => Box::new(LaProp::new(n_params)),
        };
        Trainer {
            every: t.every,
            batch: t.batch,
            window: t.window,
            cfg: TrainConfig { lr: t.lr, loss: t.loss, ..TrainConfig::default() },
            critic_lr: t.critic_lr,
            gamma_c: cfg.reflector.gamma_c,
            anchor_mu: if cfg.toggles.continual_wm { cfg.reflector.mu } else { 0.0 },
            opt,
            seed,
            steps: 0,
            updates: 0,
            task: cfg.task_sequence[0],
            log: Vec::new(),
        }
    }

    /// One model update plus one critic update on freshly sampled windows.
    /// Does nothing while no episode is long enough for a window.
    pub fn update(&mut self, params: &mut ModelParams, pool: &ExperiencePool) -> Result<()> {
        let seed = derive_seed(self.seed, &[rng::label::TRAIN, self.updates]);
        let batch = match pool.sample_windows(self.batch, self.window, seed) {
            Ok(b) => b,
            Err(Error::Batch(_)) => return Ok(()),
            Err(e) => return Err(e),
        };
        let l = train_step(params, &batch, &self.cfg, self.opt.as_mut(), Noise::Seeded(seed))?;
        anchor_step(params, self.cfg.lr, self.anchor_mu);
        let samples = critic_samples(params, &batch)?;
        let critic_mse = critic_update(params, &samples, self.gamma_c, self.critic_lr)?;
        self.log.push(LossRow {
            seed: 0,
            task: self.task,
            update: self.updates,
            recon: l.recon,
            reward_nll: l.reward_nll,
            continue_nll: l.continue_nll,
            kl: l.kl_dyn,
            total: l.total,
            critic_mse,
        });
        self.updates += 1;
        Ok(())
    }
}

impl StepHook for Trainer {
    fn after_step(&mut self, params: &mut ModelParams, pool: &ExperiencePool) -> Result<()> {
        self.steps += 1;
        if self.steps % self.every == 0 {
            self.update(params, pool)?;
        }
        Ok(())
    }
}

/// Mean-posterior latents along each window, paired for TD(0).
fn critic_samples(params: &ModelParams, batch: &[Window]) -> Result<Vec<CriticSample>> {
    let mut out = Vec::new();
    for w in batch {
        let mut cur = LatentState::initial(params, &w.steps[0].obs, None)?;
        for tr in &w.steps {
            let next = cur.advance(params, tr.action, &tr.next_obs, None)?;
            out.push(CriticSample {
                h: cur.h.clone(),
                z: cur.z.clone(),
                reward: tr.reward,
                h_next: next.h.clone(),
                z_next: next.z.clone(),
                done: tr.done,
            });
            cur = next;
        }
    }
    Ok(out)
}

/// Learning side effects of a task episode.
pub struct Learning<'a> {
    pub trainer: &'a mut Trainer,
    pub reflector: Option<&'a mut Reflector>,
    pub rounds: &'a mut Vec<RoundRow>,
}

/// Everything one task episode needs besides the learners.
pub struct EpisodeContext<'a> {
    pub env: &'a EnvConfig,
    pub control: &'a ControlConfig,
    pub task_max_steps: u64,
    pub llm: Option<&'a LlmClient>,
}

/// One attempt at `task` from a fresh world. Returns success and steps used.
#[allow(clippy::too_many_arguments)]
pub fn task_episode(
    ctx: &EpisodeContext,
    task: TaskSpec,
    env_seed: u64,
    mode: Mode,
    params: &mut ModelParams,
    pool: &mut ExperiencePool,
    next_episode: &mut u64,
    mut learning: Option<Learning>,
) -> Result<(bool, u64)> {
    let (mut env, mut obs) = reset(env_seed, task, ctx.env)?;
    let budget = ctx.task_max_steps;
    let policy = match mode {
        Mode::Unplanned => {
            let actions = Action::all();
            let mut r = rng::stream(env_seed, &[rng::label::POLICY]);
            while !task_success(&env, &task) && env.step_count < budget {
                env.step(*actions.choose(&mut r).expect("actions"))?;
            }
            return Ok((task_success(&env, &task), env.step_count));
        }
        Mode::Planned(p) => p,
    };

    let proposed = llm_propose(&task, &state_counts(&env), &[], pool.stats(), ctx.llm, 0);
    let mut plan = match proposed {
        Some(p) => p,
        None => planner::plan(&env, &task, pool.stats())?,
    };
    let mut replanner = Replanner::default();
    let mut i = 0;
    let mut no_op = NoHook;
    while !task_success(&env, &task) && env.step_count < budget {
        if i >= plan.steps.len() {
            plan = planner::plan(&env, &task, pool.stats())?;
            i = 0;
            if plan.steps.is_empty() {
                break;
            }
        }
        let step = plan.steps[i].clone();
        let control = ControlConfig { t_max: ctx.control.t_max.min(budget - env.step_count), ..*ctx.control };
        let episode_id = *next_episode;
        *next_episode += 1;
        let seed = derive_seed(env_seed, &[rng::label::POLICY, episode_id]);
        let hook: &mut dyn StepHook = match learning.as_mut() {
            Some(l) => l.trainer,
            None => &mut no_op,
        };
        let report = run_subtask_episode(&mut env, &mut obs, &step, params, pool, &control, policy, episode_id, seed, hook)?;
        if let Some(l) = learning.as_mut() {
            if let Some(r) = l.reflector.as_deref_mut() {
                if report.steps > 0 {
                    let round = r.reflect(pool, &task, params, seed)?;
                    l.rounds.push(RoundRow::from_round(0, task.name, &step.subtask.id, &round));
                }
            }
        }
        match report.outcome {
            Outcome::Success => {
                replanner.on_success(&step.subtask.id);
                i += 1;
            }
            Outcome::Timeout => {
                if env.step_count >= budget {
                    break;
                }
                plan = replanner.replan_on_failure(&plan, &step.subtask, &env, pool.stats())?;
                i = 0;
            }
        }
    }
    Ok((task_success(&env, &task), env.step_count))
}

/// Per-seed results before aggregation.
#[derive(Debug, Default)]
pub struct SeedOutput {
    pub metrics: Vec<TaskMetrics>,
    pub evals: Vec<EvalRow>,
    pub rounds: Vec<RoundRow>,
    pub losses: Vec<LossRow>,
    pub params: Option<ModelParams>,
    pub pool: Option<ExperiencePool>,
}

/// The closed loop for one seed over the whole task sequence.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedOutput> {
    cfg.validate()?;
    let mode = Mode::of(cfg);
    let llm = LlmClient::from_config(&cfg.llm);
    let ctx = EpisodeContext { env: &cfg.env, control: &cfg.control, task_max_steps: cfg.task_max_steps, llm: llm.as_ref() };
    let mut params = ModelParams::init(cfg.dims(), derive_seed(seed, &[rng::label::INIT]));
    let mut pool = ExperiencePool::new(cfg.pool_capacity);
    let mut trainer = Trainer::new(cfg, params.theta.len(), seed);
    let mut reflector = if cfg.toggles.reflector() {
        let mut rc = cfg.reflector.clone();
        rc.stage1 = cfg.toggles.reflector_stage1;
        rc.stage2 = cfg.toggles.reflector_stage2;
        if !cfg.toggles.continual_wm {
            rc.mu = 0.0;
        }
        Some(Reflector::new(rc)?)
    } else {
        None
    };
    let mut out = SeedOutput::default();
    let mut next_episode = 0u64;

    if mode == Mode::Planned(Policy::WorldModel) {
        let task = TaskSpec::new(cfg.task_sequence[0]);
        for e in 0..cfg.train.prefill_episodes {
            let env_seed = derive_seed(seed, &[rng::label::ENV, u64::MAX, e as u64]);
            let prefill = Mode::Planned(Policy::RandomAdmissible);
            task_episode(&ctx, task, env_seed, prefill, &mut params, &mut pool, &mut next_episode, None)?;
        }
        for _ in 0..cfg.train.prefill_updates {
            trainer.update(&mut params, &pool)?;
        }
    }

    for (ti, &name) in cfg.task_sequence.iter().enumerate() {
        let task = TaskSpec::new(name);
        trainer.task = name;
        let first_episode = next_episode;
        let mut stats = EpisodeStats::default();
        for e in 0..cfg.episodes_per_task {
            let env_seed = derive_seed(seed, &[rng::label::ENV, ti as u64, e as u64]);
            let learning = (mode == Mode::Planned(Policy::WorldModel)).then(|| Learning {
                trainer: &mut trainer,
                reflector: reflector.as_mut(),
                rounds: &mut out.rounds,
            });
            let (ok, steps) = task_episode(&ctx, task, env_seed, mode, &mut params, &mut pool, &mut next_episode, learning)?;
            stats.record(steps, ok);
        }
        out.metrics.push(TaskMetrics::new(name, seed, &stats));
        if cfg.toggles.continual_wm {
            if let Some(r) = &reflector {
                let own: Vec<usize> =
                    (0..pool.len()).filter(|&i| pool.entry(i).is_some_and(|e| e.episode_id >= first_episode)).collect();
                let mut pick = rng::stream(seed, &[rng::label::FISHER, ti as u64]);
                let mut idx: Vec<usize> = own.choose_multiple(&mut pick, cfg.reflector.max_candidates).copied().collect();
                idx.sort_unstable();
                let sample: Vec<_> = idx.iter().filter_map(|&i| pool.entry(i)).map(|e| e.transition()).collect();
                r.consolidate(&mut params, &sample)?;
            }
        }
        if cfg.eval_episodes > 0 {
            for (ej, &other) in cfg.task_sequence.iter().enumerate() {
                let stats = evaluate(&ctx, TaskSpec::new(other), mode, &params, &pool, cfg.eval_episodes, derive_seed(seed, &[rng::label::EVAL, ej as u64]))?;
                out.evals.push(EvalRow::new(seed, ti, name, other, &stats));
            }
        }
    }
    out.losses = trainer.log;
    for r in out.losses.iter_mut() {
        r.seed = seed;
    }
    for r in out.rounds.iter_mut() {
        r.seed = seed;
    }
    out.params = Some(params);
    out.pool = Some(pool);
    Ok(out)
}

/// Episodes on `task` with frozen parameters; nothing is written back.
pub fn evaluate(
    ctx: &EpisodeContext,
    task: TaskSpec,
    mode: Mode,
    params: &ModelParams,
    pool: &ExperiencePool,
    episodes: usize,
    seed: u64,
) -> Result<EpisodeStats> {
    let mut frozen = params.clone();
    let mut scratch = ExperiencePool::new(pool.capacity());
    let mut stats = EpisodeStats::default();
    let mut next = 0;
    for e in 0..episodes {
        let env_seed = derive_seed(seed, &[e as u64]);
        let (ok, steps) = task_episode(ctx, task, env_seed, mode, &mut frozen, &mut scratch, &mut next, None)?;
        stats.record(steps, ok);
    }
    Ok(stats)
}

/// All seeds in parallel; a failing seed is recorded and the rest continue.
pub fn run(cfg: &RunConfig) -> Result<MetricsReport> {
    run_saving(cfg, None)
}

/// [`run`], also writing each seed's final model and pool into `snapshots`
/// as `model_seed<N>.evwm` and `pool_seed<N>.evmp`.
pub fn run_saving(cfg: &RunConfig, snapshots: Option<&Path>) -> Result<MetricsReport> {
    cfg.validate()?;
    if let Some(dir) = snapshots {
        std::fs::create_dir_all(dir)?;
    }
    let outputs: Vec<(u64, Result<SeedOutput>)> = cfg
        .seeds
        .par_iter()
        .map(|&s| {
            let out = run_seed(cfg, s).and_then(|o| {
                if let (Some(dir), Some(p), Some(pool)) = (snapshots, &o.params, &o.pool) {
                    snapshot::save(p, &dir.join(format!("model_seed{s}.evwm")))?;
                    pool.snapshot(&dir.join(format!("pool_seed{s}.evmp")))?;
                }
                Ok(o)
            });
            (s, out)
        })
        .collect();
    let mut report = MetricsReport { label: cfg.toggles.label(), ..MetricsReport::default() };
    for (seed, res) in outputs {
        match res {
            Ok(o) => {
                report.metrics.extend(o.metrics);
                report.evals.extend(o.evals);
                report.rounds.extend(o.rounds);
                report.losses.extend(o.losses);
            }
            Err(e) => {
                log::error!("seed {seed} aborted: {e}");
                report.failures.push(SeedFailure { seed, error: e.to_string() });
            }
        }
    }
    Ok(report)
}
