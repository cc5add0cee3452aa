use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::craftworld::{reset, Action, EnvConfig, TaskName, TaskSpec};
use crate::experience_pool::{ExperienceEntry, ExperiencePool};
use crate::world_model::{loss_and_grad, LossConfig, ModelDims, ModelParams, Noise, Transition, Window};

fn env_cfg() -> EnvConfig {
    EnvConfig { height: 8, width: 8, view_radius: 1, ..EnvConfig::default() }
}

fn dims() -> ModelDims {
    ModelDims { obs: env_cfg().observation_len(), action: 12, deter: 6, stoch: 3, hidden: 5 }
}

fn trajectory(episode: u64, len: usize, seed: u64) -> Vec<ExperienceEntry> {
    let (mut env, mut obs) = reset(seed, TaskSpec::new(TaskName::Wood), &env_cfg()).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let moves = Action::gather_set();
    (0..len)
        .map(|t| {
            let a = *moves.choose(&mut r).unwrap();
            let out = env.step(a).unwrap();
            let e = ExperienceEntry::new(obs.clone(), a, out.reward, out.observation.clone(), false, episode, t as u64);
            obs = out.observation;
            e
        })
        .collect()
}

fn two_subtask_pool() -> ExperiencePool {
    let mut pool = ExperiencePool::new(1000);
    pool.append_trajectory(trajectory(0, 12, 1), "gather_log", 1.0).unwrap();
    pool.append_trajectory(trajectory(1, 10, 2), "craft_planks", 0.5).unwrap();
    pool.append_trajectory(trajectory(2, 8, 3), "gather_log", 0.0).unwrap();
    pool
}

fn drifted(seed: u64) -> ModelParams {
    let mut p = ModelParams::init(dims(), seed);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for v in p.theta.iter_mut() {
        *v += r.random_range(-0.05..0.05);
    }
    p
}

#[test]
fn subtask_score_examples() {
    let cfg = ReflectorConfig::default();
    let t = SubtaskTerms { similarity: 1.0, efficiency: 1.0, importance: 0.0, completion: 1.0 };
    assert_eq!(t.score(&cfg), 0.75);
    assert_eq!(SubtaskTerms::default().score(&cfg), 0.0);
}

#[test]
fn subtask_score_on_a_pool_fixture() {
    let mut pool = ExperiencePool::new(1000);
    pool.append_trajectory(trajectory(0, 50, 4), "gather_log", 1.0).unwrap();
    pool.append_trajectory(trajectory(1, 150, 5), "gather_log", 0.0).unwrap();
    let p = ModelParams::init(dims(), 3);
    let s = crate::planner::Subtask::from_id("gather_log").unwrap();
    let entries: Vec<_> = pool.entries().collect();
    let cfg = ReflectorConfig::default();
    let score = subtask_score(&s, &TaskSpec::new(TaskName::Wood), &pool, &entries, &p, &p, &cfg).unwrap();
    assert_eq!(score.terms.similarity, 0.0);
    assert_eq!(score.terms.efficiency, 0.25);
    assert_eq!(score.terms.importance, 0.0);
    assert_eq!(score.terms.completion, 0.5);
    assert!((score.tau - 0.1875).abs() < 1e-12);
}

#[test]
fn thresholds_decay_exponentially() {
    let cfg = ReflectorConfig::default();
    assert_eq!(threshold(cfg.rho0, cfg.c_s, 0), 5e-3);
    assert!((threshold(cfg.rho0, cfg.c_s, 1) - 3.7041e-3).abs() < 1e-7);
    assert!((threshold(cfg.rho0, cfg.c_h, 2) - 1.8394e-3).abs() < 1e-7);
    for c in [cfg.c_s, cfg.c_h] {
        for k in 0..20 {
            let ratio = threshold(cfg.rho0, c, k + 1) / threshold(cfg.rho0, c, k);
            assert!((ratio - (-c).exp()).abs() < 1e-12 && ratio < 1.0);
        }
    }
}

fn scored(taus: &[f64]) -> Vec<SubtaskScore> {
    taus.iter()
        .enumerate()
        .map(|(i, &tau)| SubtaskScore { subtask: format!("s{i}"), terms: SubtaskTerms::default(), tau })
        .collect()
}

#[test]
fn subtask_selection_grows_with_rounds() {
    let raw = ReflectorConfig { normalize_scores: false, ..ReflectorConfig::default() };
    assert!(select_subtasks(&scored(&[0.0, 0.0]), 0, &ReflectorConfig::default()).1.is_empty());
    let taus = [0.006, 0.004, 0.003, 0.0019, 0.00001];
    let mut prev: Vec<usize> = Vec::new();
    for k in 0..30 {
        let (_, sel) = select_subtasks(&scored(&taus), k, &raw);
        assert!(prev.iter().all(|i| sel.contains(i)));
        prev = sel;
    }
    assert_eq!(select_subtasks(&scored(&taus), 0, &raw).1, vec![0]);
    assert_eq!(select_subtasks(&scored(&taus), 1, &raw).1, vec![0, 1]);
    assert_eq!(select_subtasks(&scored(&taus), 0, &ReflectorConfig::default()).1, vec![0, 1, 2, 3]);
}

#[test]
fn experience_score_examples() {
    let cfg = ReflectorConfig { normalize_scores: false, ..ReflectorConfig::default() };
    let t = ExperienceTerms { td: 0.3, grad_norm: 0.6, kl: 0.0 };
    assert!((t.score(&cfg) - 0.3).abs() < 1e-15);

    let p = drifted(7);
    let pool = two_subtask_pool();
    for e in pool.entries() {
        assert_eq!(experience_terms(&e.transition(), &p, &p, &cfg).unwrap().kl, 0.0);
    }
}

#[test]
fn kl_directions_differ() {
    let pool = two_subtask_pool();
    let old = ModelParams::init(dims(), 1);
    let mut new = drifted(2);
    new.theta_old.clone_from(&old.theta);
    let tr = pool.entry(0).unwrap().transition();
    let cfg = ReflectorConfig::default();
    let fwd = experience_terms(&tr, &old, &new, &cfg).unwrap().kl;
    let (mn, sn) = prior_prediction(&new, &tr).unwrap();
    let (mo, so) = prior_prediction(&old, &tr).unwrap();
    use crate::world_model::nn::gaussian_kl;
    assert_eq!(fwd, gaussian_kl(&mn, &sn, &mo, &so));
    assert_ne!(fwd, gaussian_kl(&mo, &so, &mn, &sn));
}

#[test]
fn experience_weights() {
    let cfg = ReflectorConfig::default();
    let (_, one) = select_experiences(&[0.7], 0, &cfg);
    assert_eq!(one, vec![(0, 1.0)]);
    let (_, two) = select_experiences(&[0.2, 0.4], 0, &cfg);
    assert_eq!(two, vec![(0, 0.5), (1, 1.0)]);
    assert!(select_experiences(&[0.0, 0.0], 0, &cfg).1.is_empty());
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let eps: Vec<f64> = (0..40).map(|_| r.random_range(0.0..1.0f64).powi(6)).collect();
    for k in 0..5 {
        let (_, sel) = select_experiences(&eps, k, &cfg);
        let max = sel.iter().map(|s| s.1).fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        assert!(sel.iter().all(|s| s.1 > 0.0 && s.1 <= 1.0));
    }
}

#[test]
fn fisher_examples() {
    let mut zero = ModelParams::zeros(ModelDims { obs: 4, action: 2, deter: 3, stoch: 2, hidden: 3 });
    let cb = zero.offsets().con_b;
    zero.theta[cb] = 40.0;
    let flat = Transition { obs: vec![0.5; 4], action: 1, reward: 0.0, next_obs: vec![0.5; 4], done: false, episode: 0, t: 0 };
    assert!(fisher_diag(&zero, &[flat]).unwrap().iter().all(|f| *f < 1e-30));

    let p = drifted(4);
    let pool = two_subtask_pool();
    let a = pool.entry(0).unwrap().transition();
    let b = pool.entry(15).unwrap().transition();
    let g = |tr: &Transition| {
        loss_and_grad(&p, &[Window::new(vec![tr.clone()])], &LossConfig::prediction_only(), Noise::Mean).unwrap().1
    };
    let fa = fisher_diag(&p, std::slice::from_ref(&a)).unwrap();
    assert_eq!(fa, g(&a).iter().map(|x| x * x).collect::<Vec<_>>());
    let fb = fisher_diag(&p, std::slice::from_ref(&b)).unwrap();
    let fab = fisher_diag(&p, &[a, b]).unwrap();
    for i in 0..fab.len() {
        assert!((fab[i] - 0.5 * (fa[i] + fb[i])).abs() < 1e-12);
    }
    assert!(fisher_diag(&p, &[]).unwrap().iter().all(|f| *f == 0.0));
}

#[test]
fn penalty_vanishes_at_the_anchor_and_matches_finite_differences() {
    let mut p = drifted(5);
    let mut r = ChaCha8Rng::seed_from_u64(5);
    p.fisher = (0..p.theta.len()).map(|_| r.random_range(0.0..2.0)).collect();
    p.theta_old.clone_from(&p.theta);
    assert_eq!(ewc_penalty(&p, 0.1), 0.0);
    assert!(ewc_gradient(&p, 0.1).iter().all(|g| *g == 0.0));

    for i in 0..p.theta.len() {
        p.theta_old[i] = p.theta[i] + r.random_range(-0.5..0.5);
    }
    assert!(ewc_penalty(&p, 0.1) > 0.0);
    let g = ewc_gradient(&p, 0.1);
    let h = 1e-5;
    for i in 0..10 {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus.theta[i] += h;
        minus.theta[i] -= h;
        let fd = (ewc_penalty(&plus, 0.1) - ewc_penalty(&minus, 0.1)) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-8), "{i}: {fd} vs {}", g[i]);
    }

    // Zero off the support of F.
    let mut q = p.clone();
    q.fisher.iter_mut().enumerate().for_each(|(i, f)| *f = if i % 2 == 0 { 0.0 } else { *f });
    for i in (1..q.theta.len()).step_by(2) {
        q.theta[i] = q.theta_old[i];
    }
    assert_eq!(ewc_penalty(&q, 0.1), 0.0);
}

fn selected(pool: &ExperiencePool) -> Vec<(Transition, f64)> {
    pool.entries().take(6).enumerate().map(|(i, e)| (e.transition(), 0.5 + 0.1 * i as f64)).collect()
}

#[test]
fn update_without_penalty_is_a_weighted_step() {
    let pool = two_subtask_pool();
    let mut p = drifted(6);
    p.fisher = vec![1.0; p.theta.len()];
    p.theta_old = vec![0.0; p.theta.len()];
    let sel = selected(&pool);
    let cfg = ReflectorConfig { mu: 0.0, lr: 0.01, ..ReflectorConfig::default() };
    let mut expect = p.theta.clone();
    let mut g = vec![0.0; p.theta.len()];
    for (tr, w) in &sel {
        let gi = loss_and_grad(&p, &[Window::new(vec![tr.clone()])], &LossConfig::prediction_only(), Noise::Mean).unwrap().1;
        for (a, b) in g.iter_mut().zip(&gi) {
            *a += w * b / sel.len() as f64;
        }
    }
    crate::world_model::clip_gradient(&mut g, crate::world_model::clip_bound(&p.theta, 0.3));
    for (t, gi) in expect.iter_mut().zip(&g) {
        *t -= 0.01 * gi;
    }
    let loss = reflect_update(&mut p, &sel, &cfg).unwrap().unwrap();
    assert_eq!(p.theta, expect);
    assert_eq!(loss.penalty, 0.0);
}

#[test]
fn strong_anchor_holds_parameters() {
    let pool = two_subtask_pool();
    let base = drifted(8);
    let sel = selected(&pool);
    let lr = 0.1;
    let mut free = base.clone();
    reflect_update(&mut free, &sel, &ReflectorConfig { mu: 0.0, lr, ..ReflectorConfig::default() }).unwrap();
    let mut anchored = base.clone();
    anchored.fisher = vec![1.0; base.theta.len()];
    anchored.theta_old.clone_from(&base.theta);
    reflect_update(&mut anchored, &sel, &ReflectorConfig { mu: 1e3, lr, ..ReflectorConfig::default() }).unwrap();
    let dist = |a: &[f64]| a.iter().zip(&base.theta).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(dist(&anchored.theta) < 0.01 * dist(&free.theta));
    assert!(dist(&free.theta) > 0.0);
}

#[test]
fn empty_selection_is_a_no_op() {
    let mut p = drifted(9);
    let before = p.clone();
    assert!(reflect_update(&mut p, &[], &ReflectorConfig::default()).unwrap().is_none());
    assert_eq!(p, before);
    let (round, sel) = reflect(&ExperiencePool::new(10), &TaskSpec::new(TaskName::Wood), &mut p, &ReflectorConfig::default(), 0, 1).unwrap();
    assert!(round.selected_subtasks.is_empty() && round.selected_experiences.is_empty() && sel.is_empty());
    assert_eq!(p, before);
}

#[test]
fn rounds_are_reproducible_and_record_both_stages() {
    let pool = two_subtask_pool();
    let run = |cfg: &ReflectorConfig| {
        let mut p = drifted(10);
        p.theta_old = ModelParams::init(dims(), 10).theta;
        let mut r = Reflector::new(cfg.clone()).unwrap();
        let a = r.reflect(&pool, &TaskSpec::new(TaskName::Wood), &mut p, 4).unwrap();
        let b = r.reflect(&pool, &TaskSpec::new(TaskName::Wood), &mut p, 4).unwrap();
        (a, b, p)
    };
    let cfg = ReflectorConfig::default();
    let (a1, b1, p1) = run(&cfg);
    let (a2, b2, p2) = run(&cfg);
    assert_eq!(serde_json::to_string(&(&a1, &b1)).unwrap(), serde_json::to_string(&(&a2, &b2)).unwrap());
    assert_eq!(p1.theta, p2.theta);
    assert_eq!((a1.k, b1.k), (0, 1));
    assert_eq!(a1.subtask_scores.len(), 2);
    assert!(b1.rho_subtask < a1.rho_subtask && b1.rho_exp < a1.rho_exp);
    assert!(!a1.selected_experiences.is_empty());
    assert!(a1.loss.is_some());

    let only2 = ReflectorConfig { stage1: false, ..cfg.clone() };
    let (a3, _, _) = run(&only2);
    assert_eq!(a3.selected_subtasks.len(), 2);
    let only1 = ReflectorConfig { stage2: false, ..cfg };
    let (a4, _, _) = run(&only1);
    assert_eq!(a4.selected_experiences.len(), a4.candidates);
    assert!(a4.selected_experiences.iter().all(|e| e.weight == 1.0));
}

#[test]
fn stage_two_matches_brute_force() {
    let mut pool = ExperiencePool::new(100);
    pool.append_trajectory(trajectory(0, 20, 11), "gather_log", 1.0).unwrap();
    let mut p = drifted(12);
    p.theta_old = ModelParams::init(dims(), 12).theta;
    let mut old = p.clone();
    old.theta.clone_from(&p.theta_old);
    let cfg = ReflectorConfig { stage1: false, ..ReflectorConfig::default() };
    for k in [0, 3] {
        let mut q = p.clone();
        let (round, _) = reflect(&pool, &TaskSpec::new(TaskName::Wood), &mut q, &cfg, k, 0).unwrap();
        let eps: Vec<f64> = pool.entries().map(|e| experience_score(&e.transition(), &old, &p, &cfg).unwrap()).collect();
        let max = eps.iter().copied().fold(0.0, f64::max);
        let rho = cfg.rho0 * (-cfg.c_h * k as f64).exp();
        let keep: Vec<usize> = (0..eps.len()).filter(|&i| eps[i] / max >= rho).collect();
        let smax = keep.iter().map(|&i| eps[i]).fold(0.0, f64::max);
        let got: Vec<(usize, f64)> = round.selected_experiences.iter().map(|s| (s.index, s.weight)).collect();
        let want: Vec<(usize, f64)> = keep.iter().map(|&i| (i, eps[i] / smax)).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn config_validation() {
    assert!(ReflectorConfig::default().validate().is_ok());
    assert!(ReflectorConfig { lambda: [0.5, 0.5, 0.5, 0.0], ..ReflectorConfig::default() }.validate().is_err());
    assert!(ReflectorConfig { eta: [0.2, 0.2, 0.2], ..ReflectorConfig::default() }.validate().is_err());
    assert!(ReflectorConfig { c_s: 0.0, ..ReflectorConfig::default() }.validate().is_err());
}

#[test]
fn anchor_step_is_the_penalty_proximal_map() {
    let mut p = drifted(9);
    p.archive();
    p.fisher = vec![0.0; p.theta.len()];
    p.fisher[0] = 5.0;
    p.fisher[1] = 0.5;
    for v in p.theta.iter_mut() {
        *v += 1.0;
    }
    let before = p.clone();
    anchor_step(&mut p, 0.1, 0.0);
    assert_eq!(p, before);
    anchor_step(&mut p, 0.1, 2.0);
    // k = 2 * 0.1 * 2 * F: 2 and 0.2.
    assert!((p.theta[0] - (before.theta[0] + 2.0 * before.theta_old[0]) / 3.0).abs() < 1e-15);
    assert!((p.theta[1] - (before.theta[1] + 0.2 * before.theta_old[1]) / 1.2).abs() < 1e-15);
    assert_eq!(p.theta[2..], before.theta[2..]);
}
