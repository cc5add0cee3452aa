use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::craftworld::{reset, EnvConfig, Item, Observation, Tile, TaskName, TaskSpec};
use crate::experience_pool::ExperiencePool;
use crate::planner::{PlanStep, Subtask};
use crate::world_model::{decode, imagine, LatentState, ModelDims, ModelParams, TabularMdp};

fn cfg(horizon: usize) -> ControlConfig {
    ControlConfig { horizon, alpha: 0.0, ..ControlConfig::default() }
}

#[test]
fn single_step_argmax() {
    let mdp = TabularMdp { n_states: 1, n_actions: 3, next: vec![0, 0, 0], reward: vec![0.1, 0.7, 0.3] };
    let p = mdp.embed(4, 2, 2).unwrap();
    let start = mdp.start_state(&p, 0);
    assert_eq!(select_actions(&p, &start, &[0, 1, 2], None, &cfg(1), 0).unwrap(), vec![1]);
}

#[test]
fn ties_go_to_the_lowest_candidate() {
    let p = ModelParams::zeros(ModelDims { obs: 5, action: 4, deter: 3, stoch: 2, hidden: 3 });
    let start = LatentState::initial(&p, &[0.0; 5], None).unwrap();
    assert_eq!(select_actions(&p, &start, &[2, 1, 3], None, &cfg(3), 9).unwrap(), vec![2, 2, 2]);
    let big = ControlConfig { exhaustive_limit: 1, ..cfg(3) };
    let a = select_actions(&p, &start, &[2, 1, 3], None, &big, 9).unwrap();
    assert_eq!(a, select_actions(&p, &start, &[2, 1, 3], None, &big, 9).unwrap());
    assert!(select_actions(&p, &start, &[], None, &cfg(3), 0).is_err());
    assert!(select_actions(&p, &start, &[7], None, &cfg(3), 0).is_err());
}

fn brute_force(p: &ModelParams, start: &LatentState, actions: &[usize], goal: Option<&Goal>, c: &ControlConfig) -> Vec<usize> {
    let n = actions.len();
    let total = n.pow(c.horizon as u32);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for k in 0..total {
        let mut seq = vec![0; c.horizon];
        let mut rem = k;
        for tau in (0..c.horizon).rev() {
            seq[tau] = actions[rem % n];
            rem /= n;
        }
        let traj = imagine(p, start, &seq, None).unwrap();
        let mut score = 0.0;
        for (tau, step) in traj.iter().enumerate() {
            let mut r = step.reward;
            if let Some(g) = goal {
                let out = decode(p, &step.h, &step.z).unwrap();
                let mut counts = [0.0; Item::COUNT];
                for (i, c) in counts.iter_mut().enumerate() {
                    *c = out[g.inventory.start + i] * 9.0;
                }
                r += c.alpha * g.soft_similarity(&counts);
            }
            score += c.gamma.powi(tau as i32) * r;
        }
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, seq));
        }
    }
    best.unwrap().1
}

#[test]
fn enumeration_matches_brute_force() {
    let radius = 1;
    let obs_len = Observation::feature_len(radius);
    let subtask = Subtask::from_id("craft_planks").unwrap();
    let off = Observation::inventory_offset(radius);
    let goal = Goal { subtask: &subtask, target_count: 4, inventory: off..off + Item::COUNT, source: None };
    for (seed, n_actions, horizon) in [(1u64, 2usize, 6usize), (2, 3, 4), (3, 4, 3), (4, 5, 2), (5, 12, 1)] {
        let p = ModelParams::init(ModelDims { obs: obs_len, action: 12, deter: 6, stoch: 3, hidden: 5 }, seed);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let o: Vec<f64> = (0..obs_len).map(|_| r.random()).collect();
        let start = LatentState::initial(&p, &o, None).unwrap();
        let actions: Vec<usize> = (0..n_actions).map(|i| (i * 5 + seed as usize) % 12).collect();
        for alpha in [0.0, 0.5] {
            let c = ControlConfig { horizon, alpha, gamma: 0.7, ..ControlConfig::default() };
            let got = select_actions(&p, &start, &actions, Some(&goal), &c, 0).unwrap();
            assert_eq!(got, brute_force(&p, &start, &actions, Some(&goal), &c));
        }
    }
}

#[test]
fn argmax_is_invariant_under_affine_reward_maps() {
    let p = ModelParams::init(ModelDims { obs: 6, action: 3, deter: 5, stoch: 3, hidden: 4 }, 11);
    let start = LatentState::initial(&p, &[0.3; 6], None).unwrap();
    let c = cfg(5);
    let base = select_actions(&p, &start, &[0, 1, 2], None, &c, 0).unwrap();
    let mut q = p.clone();
    let o = *q.offsets();
    for i in o.rew_w..o.rew_w + 8 {
        q.theta[i] *= 3.0;
    }
    q.theta[o.rew_b] = 3.0 * q.theta[o.rew_b] + 2.5;
    assert_eq!(select_actions(&q, &start, &[0, 1, 2], None, &c, 0).unwrap(), base);
}

#[test]
fn verification_truth_table() {
    let c = ControlConfig::default();
    let eps = 1e-9;
    for cos in [0.0, c.sigma - eps, c.sigma, 1.0] {
        for t in [0, c.t_max - 1, c.t_max] {
            let expect = cos >= c.sigma || t >= c.t_max;
            let got = verify_similarity(cos, t, &c) == Verdict::Terminal;
            assert_eq!(got, expect, "cos={cos} t={t}");
        }
    }
    assert_eq!(verify_similarity(0.95, 10, &c), Verdict::Terminal);
    assert_eq!(verify_similarity(0.2, c.t_max, &c), Verdict::Terminal);
    assert_eq!(verify_similarity(0.2, c.t_max - 1, &c), Verdict::NTerminal);
    for t in 0..2 * c.t_max {
        if verify_similarity(0.5, t, &c) == Verdict::Terminal {
            assert!((t..t + 10).all(|u| verify_similarity(0.5, u, &c) == Verdict::Terminal));
        }
    }
}

#[test]
fn value_iteration_basics() {
    let one = TabularMDP { n_states: 1, n_actions: 1, p: vec![vec![1.0]], r: vec![1.0], gamma: 0.5 };
    let (v, pi) = value_iteration(&one, 1e-10).unwrap();
    assert!((v[0] - 2.0).abs() < 1e-9);
    assert_eq!(pi, vec![0]);
    let zero = TabularMDP { n_states: 2, n_actions: 2, p: vec![vec![0.5, 0.5]; 4], r: vec![0.0; 4], gamma: 0.9 };
    assert_eq!(value_iteration(&zero, 1e-10).unwrap().0, vec![0.0, 0.0]);
    let bad = TabularMDP { p: vec![vec![0.5, 0.4]; 4], ..zero };
    assert!(value_iteration(&bad, 1e-10).is_err());
}

fn env_with(fill: Tile, seed: u64) -> (crate::craftworld::EnvState, Observation) {
    let task = TaskSpec::new(TaskName::Wood);
    let (mut env, _) = reset(seed, task, &EnvConfig::default()).unwrap();
    for r in 1..env.height - 1 {
        for c in 1..env.width - 1 {
            env.set_tile(r, c, fill);
        }
    }
    let obs = env.observe();
    (env, obs)
}

fn gather_log() -> PlanStep {
    PlanStep { subtask: Subtask::from_id("gather_log").unwrap(), target_count: 1 }
}

#[test]
fn episode_on_a_forest_succeeds_quickly() {
    for policy in [Policy::RandomAdmissible, Policy::RandomAll] {
        let (mut env, mut obs) = env_with(Tile::Tree, 3);
        let mut p = ModelParams::init(
            ModelDims { obs: obs.features().len(), action: 12, deter: 8, stoch: 4, hidden: 8 },
            1,
        );
        let mut pool = ExperiencePool::new(1000);
        let c = ControlConfig { horizon: 3, candidates: 8, ..ControlConfig::default() };
        let rep = run_subtask_episode(&mut env, &mut obs, &gather_log(), &mut p, &mut pool, &c, policy, 0, 5, &mut NoHook).unwrap();
        assert_eq!(rep.outcome, Outcome::Success, "{policy:?}");
        assert_eq!(rep.completion, 1.0);
        assert!(rep.steps <= 120, "{policy:?} took {}", rep.steps);
        assert_eq!(pool.len() as u64, rep.steps);
        assert_eq!(pool.subtask_stats("gather_log").episodes_success, 1);
        assert!(obs.count(Item::Log) >= 1);
    }
}

#[test]
fn unreachable_target_times_out_at_the_cap() {
    let (mut env, mut obs) = env_with(Tile::Empty, 4);
    let mut p = ModelParams::init(ModelDims { obs: obs.features().len(), action: 12, deter: 8, stoch: 4, hidden: 8 }, 1);
    let mut pool = ExperiencePool::new(1000);
    pool.append_trajectory(Vec::new(), "gather_log", 0.0).unwrap();
    let before = pool.len();
    let c = ControlConfig { t_max: 30, horizon: 2, ..ControlConfig::default() };
    let rep = run_subtask_episode(&mut env, &mut obs, &gather_log(), &mut p, &mut pool, &c, Policy::WorldModel, 0, 1, &mut NoHook)
        .unwrap();
    assert_eq!(rep.outcome, Outcome::Timeout);
    assert_eq!(rep.steps, 30);
    assert_eq!(pool.len(), before + 30);
    assert_eq!(env.step_count, 30);
    assert_eq!(rep.completion, 0.0);
}

#[test]
fn episodes_are_seeded() {
    let run = || {
        let (mut env, mut obs) = env_with(Tile::Stone, 2);
        env.set_tile(3, 3, Tile::Tree);
        let mut p = ModelParams::init(ModelDims { obs: obs.features().len(), action: 12, deter: 8, stoch: 4, hidden: 8 }, 2);
        let mut pool = ExperiencePool::new(1000);
        let c = ControlConfig { t_max: 25, horizon: 4, candidates: 6, ..ControlConfig::default() };
        run_subtask_episode(&mut env, &mut obs, &gather_log(), &mut p, &mut pool, &c, Policy::WorldModel, 0, 8, &mut NoHook)
            .unwrap();
        pool.digest()
    };
    assert_eq!(run(), run());
}

#[test]
fn soft_similarity_rewards_progress() {
    let s = Subtask::from_id("craft_wooden_pickaxe").unwrap();
    let g = Goal { subtask: &s, target_count: 1, inventory: 0..12, source: None };
    let mut c = [0.0; Item::COUNT];
    let s0 = g.soft_similarity(&c);
    c[Item::Planks.index()] = 3.0;
    let s1 = g.soft_similarity(&c);
    c[Item::Stick.index()] = 2.0;
    let s2 = g.soft_similarity(&c);
    c[Item::WoodenPickaxe.index()] = 1.0;
    let s3 = g.soft_similarity(&c);
    assert!(s0 < s1 && s1 < s2 && s2 < s3);
    assert!((s3 - 1.0).abs() < 1e-12);
}
