use evoagent::craftworld::{reset, Action, EnvConfig, TaskName, TaskSpec};
use evoagent::experience_pool::{ExperienceEntry, ExperiencePool};
use evoagent::planner::Subtask;
use evoagent::reflector::{experience_score, subtask_score, ReflectorConfig};
use evoagent::world_model::{
    critic_value, loss_and_grad, prior, sequence_step, LatentState, LossConfig, ModelDims, ModelParams, Noise, Transition,
    Window,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture() -> (ExperiencePool, ModelParams, ModelParams) {
    let cfg = EnvConfig { height: 8, width: 8, view_radius: 1, ..EnvConfig::default() };
    let mut pool = ExperiencePool::new(500);
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let all = Action::all();
    for (ep, (id, completion)) in [("gather_log", 1.0), ("craft_planks", 0.25), ("gather_log", 0.0)].iter().enumerate() {
        let (mut env, mut obs) = reset(ep as u64, TaskSpec::new(TaskName::Wood), &cfg).unwrap();
        let mut entries = Vec::new();
        for t in 0..9 + 3 * ep {
            let a = all[r.random_range(0..all.len())];
            let out = env.step(a).unwrap();
            entries.push(ExperienceEntry::new(obs.clone(), a, out.reward, out.observation.clone(), false, ep as u64, t as u64));
            obs = out.observation;
        }
        pool.append_trajectory(entries, id, *completion).unwrap();
    }
    let dims = ModelDims { obs: cfg.observation_len(), action: 12, deter: 7, stoch: 3, hidden: 6 };
    let old = ModelParams::init(dims, 1);
    let mut new = old.clone();
    for v in new.theta.iter_mut() {
        *v += r.random_range(-0.1..0.1);
    }
    (pool, old, new)
}

fn kl(mq: &[f64], sq: &[f64], mp: &[f64], sp: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..mq.len() {
        s += (sp[i] / sq[i]).ln() + (sq[i] * sq[i] + (mq[i] - mp[i]).powi(2)) / (2.0 * sp[i] * sp[i]) - 0.5;
    }
    s
}

fn predictive(p: &ModelParams, tr: &Transition) -> (Vec<f64>, Vec<f64>) {
    let l = LatentState::initial(p, &tr.obs, None).unwrap();
    let mut a = vec![0.0; 12];
    a[tr.action] = 1.0;
    let h = sequence_step(p, &l.h, &l.z, &a).unwrap();
    let g = prior(p, &h, None).unwrap();
    (g.mu, g.sigma)
}

#[test]
fn subtask_scores_match_straight_line_recomputation() {
    let (pool, old, new) = fixture();
    let cfg = ReflectorConfig::default();
    let goal = TaskSpec::new(TaskName::Wood);
    for id in ["gather_log", "craft_planks"] {
        let s = Subtask::from_id(id).unwrap();
        let entries: Vec<_> = pool.entries().filter(|e| e.subtask_id == id).collect();
        let got = subtask_score(&s, &goal, &pool, &entries, &old, &new, &cfg).unwrap().tau;

        let g = Subtask::from_id("craft_wooden_pickaxe").unwrap().embedding;
        let dot: f64 = s.embedding.iter().zip(&g).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = dot / (norm(&s.embedding) * norm(&g));
        let (mut suc, mut all, mut comp, mut eps) = (0.0, 0.0, 0.0, 0.0);
        let mut last = u64::MAX;
        for e in &entries {
            all += 1.0;
            if e.completion == 1.0 {
                suc += 1.0;
            }
            if e.episode_id != last {
                comp += e.completion;
                eps += 1.0;
                last = e.episode_id;
            }
        }
        let mut k = 0.0;
        for e in &entries {
            let tr = e.transition();
            let (mo, so) = predictive(&old, &tr);
            let (mn, sn) = predictive(&new, &tr);
            k += kl(&mo, &so, &mn, &sn);
        }
        k /= entries.len() as f64;
        let want = 0.25 * cos + 0.25 * (suc / all) + 0.25 * (k / (1.0 + k)) + 0.25 * (comp / eps);
        assert!((got - want).abs() < 1e-10, "{id}: {got} vs {want}");
    }
}

#[test]
fn experience_scores_match_straight_line_recomputation() {
    let (pool, old, new) = fixture();
    let cfg = ReflectorConfig::default();
    let heads = new.layout.head_range("decoder").unwrap().start..new.layout.head_range("continue").unwrap().end;
    for e in pool.entries() {
        let tr = e.transition();
        let got = experience_score(&tr, &old, &new, &cfg).unwrap();

        let s0 = LatentState::initial(&new, &tr.obs, None).unwrap();
        let s1 = s0.advance(&new, tr.action, &tr.next_obs, None).unwrap();
        let td = tr.reward + 0.95 * critic_value(&new, &s1.h, &s1.z).unwrap() - critic_value(&new, &s0.h, &s0.z).unwrap();
        let g = loss_and_grad(&new, &[Window::new(vec![tr.clone()])], &LossConfig::prediction_only(), Noise::Mean)
            .unwrap()
            .1;
        let gn = g[heads.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
        let (mn, sn) = predictive(&new, &tr);
        let (mo, so) = predictive(&old, &tr);
        let ig = kl(&mn, &sn, &mo, &so);
        let sq = |x: f64| x / (1.0 + x);
        let want = (sq(td.abs()) + sq(gn) + sq(ig)) / 3.0;
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}
