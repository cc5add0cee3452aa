//! Command-line front end: single runs, the ablation grid, pool inspection
//! and evaluation of a saved model.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use evoagent::craftworld::{TaskName, TaskSpec};
use evoagent::experience_pool::ExperiencePool;
use evoagent::harness::{self, EpisodeContext, Mode, RunConfig};
use evoagent::planner::LlmClient;
use evoagent::world_model::snapshot;

#[derive(Parser)]
#[command(name = "evoagent", version, about = "Plan-act-reflect agent on CraftWorld")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured task sequence over every seed and write the artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Single seed; overrides the config and EVOAGENT_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the seven-row module ablation grid.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a pool snapshot.
    InspectPool {
        #[arg(long)]
        snapshot: PathBuf,
        /// Also print every entry as JSON lines.
        #[arg(long)]
        entries: bool,
    },
    /// Evaluate a saved model with the world-model controller.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        task: String,
        /// Environment and controller settings; defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("EVOAGENT_SEED") {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("EVOAGENT_SEED={v} is not an integer"))?)),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed.or(env_seed()?) {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let report = harness::run_saving(&cfg, Some(&cfg.output_dir))?;
            harness::emit(&report, &cfg, &cfg.output_dir)?;
            for s in report.summary() {
                println!("{:<8} SR {:.3} ± {:.3}  EE {:.3} ± {:.3}  ({} seeds)", s.task, s.sr_mean, s.sr_std, s.ee_mean, s.ee_std, s.seeds);
            }
            for f in &report.failures {
                eprintln!("seed {} failed: {}", f.seed, f.error);
            }
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Ablate { config, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = env_seed()? {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let reports = harness::ablate(&cfg, Some(&cfg.output_dir))?;
            println!("{:<12} {:<8} {:>14} {:>14}", "row", "task", "SR", "EE");
            for r in harness::ablation_table(&reports) {
                println!(
                    "{:<12} {:<8} {:>6.3} ± {:<5.3} {:>6.3} ± {:<5.3}",
                    r.row, r.task, r.sr_mean, r.sr_std, r.ee_mean, r.ee_std
                );
            }
        }
        Command::InspectPool { snapshot, entries } => {
            let pool = ExperiencePool::load(&snapshot).with_context(|| format!("loading {}", snapshot.display()))?;
            println!("entries   {} / {}", pool.len(), pool.capacity());
            println!("evicted   {}", pool.evicted());
            println!("episodes  {}", pool.episodes().len());
            println!("digest    {}", pool.digest());
            println!("{:<24} {:>8} {:>8} {:>6} {:>6}", "subtask", "episodes", "steps", "SR", "EE");
            for (id, s) in pool.stats() {
                println!(
                    "{:<24} {:>8} {:>8} {:>6.3} {:>6.3}",
                    id,
                    s.episodes_total,
                    s.steps_total,
                    s.success_rate(),
                    s.efficiency()
                );
            }
            if entries {
                evoagent::experience_pool::export_jsonl(&pool, std::io::stdout().lock())?;
            }
        }
        Command::Eval { model, task, config, episodes, seed } => {
            let cfg = match config {
                Some(p) => load_config(&p)?,
                None => RunConfig::default(),
            };
            let params = snapshot::load(&model).with_context(|| format!("loading {}", model.display()))?;
            if params.dims != cfg.dims() {
                bail!("model dims {:?} do not match the config's {:?}", params.dims, cfg.dims());
            }
            let name: TaskName = task.parse()?;
            let llm = LlmClient::from_config(&cfg.llm);
            let ctx = EpisodeContext {
                env: &cfg.env,
                control: &cfg.control,
                task_max_steps: cfg.task_max_steps,
                llm: llm.as_ref(),
            };
            let pool = ExperiencePool::new(cfg.pool_capacity);
            let mode = Mode::Planned(evoagent::controller::Policy::WorldModel);
            let stats = harness::evaluate(&ctx, TaskSpec::new(name), mode, &params, &pool, episodes, seed)?;
            let (sr, ee) = harness::compute_metrics(&stats);
            println!("{name}: SR {sr:.3}  EE {ee:.3}  over {} episodes, {} steps", stats.episodes_total, stats.steps_total);
        }
    }
    Ok(())
}
