use serde_json::Value;

use super::*;
use crate::craftworld::{EnvConfig, TaskName};
use crate::experience_pool::EpisodeStats;

fn tiny(toggles: Toggles) -> RunConfig {
    let mut c = RunConfig {
        task_sequence: vec![TaskName::Wood],
        seeds: vec![3, 4],
        episodes_per_task: 3,
        task_max_steps: 40,
        eval_episodes: 2,
        toggles,
        env: EnvConfig { height: 8, width: 8, view_radius: 1, ..EnvConfig::default() },
        model: ModelSize { deter: 6, stoch: 3, hidden: 6 },
        ..RunConfig::default()
    };
    c.control.horizon = 2;
    c.control.t_max = 15;
    c.train.prefill_episodes = 1;
    c.train.prefill_updates = 3;
    c.train.batch = 2;
    c.train.window = 4;
    c
}

#[test]
fn metrics_fixtures() {
    let s = EpisodeStats { episodes_total: 10, episodes_success: 3, steps_total: 0, steps_success: 0 };
    assert_eq!(compute_metrics(&s).0, 0.3);
    let s = EpisodeStats { episodes_total: 4, episodes_success: 1, steps_total: 200, steps_success: 50 };
    assert_eq!(compute_metrics(&s).1, 0.25);
    assert_eq!(compute_metrics(&EpisodeStats::default()), (0.0, 0.0));
}

#[test]
fn mean_std_uses_the_sample_deviation() {
    assert_eq!(mean_std(&[]), (0.0, 0.0));
    assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn permutation_test_examples() {
    let ones = [1.0; 10];
    let zeros = [0.0; 10];
    assert_eq!(paired_one_sided_p(&ones, &zeros), 1.0 / 1024.0);
    assert_eq!(paired_one_sided_p(&zeros, &zeros), 1.0);
    assert!(paired_one_sided_p(&zeros, &ones) > 0.99);
    // Differences 3, -1, 2: sums of the eight sign patterns are 6, 4, 2, 0, 0, -2, -4, -6.
    assert_eq!(paired_one_sided_p(&[3.0, 0.0, 2.0], &[0.0, 1.0, 0.0]), 2.0 / 8.0);
}

#[test]
fn toggle_rules_and_labels() {
    let labels: Vec<String> = ablation_grid().iter().map(Toggles::label).collect();
    assert_eq!(labels, ["none", "P", "P+C", "P+C+R1", "P+C+R2", "P+C+R", "P+C+R+CWM"]);
    assert!(ablation_grid().iter().all(|t| t.validate().is_ok()));
    let cwm_alone = Toggles { planner: true, controller: true, continual_wm: true, ..Toggles::default() };
    assert!(cwm_alone.validate().is_err());
    assert!(Toggles { controller: true, ..Toggles::default() }.validate().is_err());
    assert!(Toggles { planner: true, reflector_stage1: true, ..Toggles::default() }.validate().is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let c = tiny(Toggles::all());
    let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    let bad = "[toggles]\nplanner = true\ncontroller = true\ncontinual_wm = true\n";
    assert!(RunConfig::from_toml(bad).is_err());
    assert!(RunConfig::from_toml("unknown_key = 1\n").is_err());
    assert!(RunConfig::from_toml("seeds = []\n").is_err());
}

fn leaves(v: &Value, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                path.push(k.clone());
                leaves(child, path, out);
                path.pop();
            }
        }
        Value::Array(a) => {
            for (i, child) in a.iter().enumerate() {
                path.push(i.to_string());
                leaves(child, path, out);
                path.pop();
            }
        }
        _ => out.push(path.clone()),
    }
}

fn leaf_mut<'a>(v: &'a mut Value, path: &[String]) -> &'a mut Value {
    path.iter().fold(v, |v, k| match v {
        Value::Array(a) => &mut a[k.parse::<usize>().unwrap()],
        other => &mut other[k.as_str()],
    })
}

fn mutations(v: &Value) -> Vec<Value> {
    match v {
        Value::Bool(b) => vec![Value::Bool(!b)],
        Value::Number(n) if n.is_u64() => vec![Value::from(n.as_u64().unwrap() + 1), Value::from(n.as_u64().unwrap() + 7)],
        Value::Number(n) => {
            let x = n.as_f64().unwrap();
            vec![Value::from(x + 0.125), Value::from(x * 1.5 + 1.0)]
        }
        Value::String(s) => vec![Value::from(format!("{s}x")), Value::from("Stone"), Value::from("laprop"), Value::from("sgd")],
        Value::Null => vec![Value::from("http://localhost:1/")],
        _ => Vec::new(),
    }
}

#[test]
fn hash_changes_under_single_field_mutations() {
    let base = tiny(Toggles::all());
    let json = serde_json::to_value(&base).unwrap();
    let mut paths = Vec::new();
    leaves(&json, &mut Vec::new(), &mut paths);
    let mut checked = 0;
    'outer: for round in 0..4 {
        for path in &paths {
            let original = leaf_mut(&mut json.clone(), path).clone();
            let Some(new) = mutations(&original).into_iter().filter(|m| *m != original).nth(round) else { continue };
            let mut mutated = json.clone();
            *leaf_mut(&mut mutated, path) = new;
            let Ok(cfg) = serde_json::from_value::<RunConfig>(mutated) else { continue };
            if cfg == base {
                continue;
            }
            assert_ne!(cfg.hash(), base.hash(), "{path:?}");
            checked += 1;
            if checked == 100 {
                break 'outer;
            }
        }
    }
    assert_eq!(checked, 100);
    assert_eq!(serde_json::from_value::<RunConfig>(json).unwrap().hash(), base.hash());
}

#[test]
fn empty_report_emits_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Toggles::default());
    emit(&MetricsReport::default(), &cfg, dir.path()).unwrap();
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics, format!("{}\n", METRICS_HEADER.join(",")));
    for f in ["evals.csv", "rounds.csv", "losses.csv", "summary.csv"] {
        assert_eq!(std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count(), 1, "{f}");
    }
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());
    assert_eq!(RunConfig::load(&dir.path().join("config.toml")).unwrap(), cfg);
}

#[test]
fn runs_are_deterministic_and_round_trip_through_csv() {
    let cfg = tiny(Toggles::all());
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.failures.is_empty());
    assert_eq!(a.metrics.len(), 2);
    assert!(!a.losses.is_empty() && !a.rounds.is_empty());
    for m in &a.metrics {
        assert!((0.0..=1.0).contains(&m.sr) && (0.0..=1.0).contains(&m.ee));
        assert_eq!(m.episodes, 3);
    }

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    emit(&a, &cfg, d1.path()).unwrap();
    emit(&b, &cfg, d2.path()).unwrap();
    let bytes = |d: &tempfile::TempDir| std::fs::read(d.path().join("metrics.csv")).unwrap();
    assert_eq!(bytes(&d1), bytes(&d2));

    let back = load_report(d1.path()).unwrap();
    assert_eq!(back.metrics, a.metrics);
    assert_eq!(back.evals, a.evals);
    assert_eq!(back.losses.len(), a.losses.len());
    assert_eq!(back.label, a.label);
}

#[test]
fn each_ablation_row_matches_its_standalone_run() {
    let base = tiny(Toggles::all());
    let reports = ablate(&base, None).unwrap();
    assert_eq!(reports.len(), 7);
    for (toggles, report) in ablation_grid().into_iter().zip(&reports) {
        assert_eq!(report.label, toggles.label());
        if matches!(report.label.as_str(), "none" | "P" | "P+C+R+CWM") {
            assert_eq!(*report, run(&base.with_toggles(toggles)).unwrap());
        }
    }
    let table = ablation_table(&reports);
    assert_eq!(table.len(), 7);
    assert!(table.iter().all(|r| r.seeds == 2 && r.sr_std >= 0.0));
}

#[test]
fn forgetting_is_the_drop_after_later_tasks() {
    let row = |phase, trained, sr| EvalRow { seed: 0, phase, trained, task: TaskName::Wood, sr, ee: 0.0, episodes: 10 };
    let report = MetricsReport {
        evals: vec![row(0, TaskName::Wood, 0.6), row(1, TaskName::Stone, 0.2)],
        ..MetricsReport::default()
    };
    assert_eq!(report.forgetting(TaskName::Wood)[&0], 0.6 - 0.2);
    assert!(report.forgetting(TaskName::Stone).is_empty());
}

#[test]
fn uncontrolled_rows_never_touch_a_model() {
    let report = run(&tiny(Toggles { planner: true, ..Toggles::default() })).unwrap();
    assert!(report.losses.is_empty() && report.rounds.is_empty());
    let none = run(&tiny(Toggles::default())).unwrap();
    assert!(none.metrics.iter().all(|m| m.steps > 0));
}
