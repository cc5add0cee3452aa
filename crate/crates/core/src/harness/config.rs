use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::ControlConfig;
use crate::craftworld::{Action, EnvConfig, TaskName, TaskSpec};
use crate::error::{Error, Result};
use crate::planner::LlmConfig;
use crate::reflector::ReflectorConfig;
use crate::world_model::{LossConfig, ModelDims, DESK_LR};

/// Module switches of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    pub planner: bool,
    pub controller: bool,
    pub reflector_stage1: bool,
    pub reflector_stage2: bool,
    pub continual_wm: bool,
}

impl Toggles {
    pub fn reflector(&self) -> bool {
        self.reflector_stage1 || self.reflector_stage2
    }

    pub fn all() -> Self {
        Toggles { planner: true, controller: true, reflector_stage1: true, reflector_stage2: true, continual_wm: true }
    }

    /// Short row label: `none`, `P`, `P+C`, `P+C+R1`, `P+C+R2`, `P+C+R`, `P+C+R+CWM`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.planner {
            parts.push("P");
        }
        if self.controller {
            parts.push("C");
        }
        match (self.reflector_stage1, self.reflector_stage2) {
            (true, true) => parts.push("R"),
            (true, false) => parts.push("R1"),
            (false, true) => parts.push("R2"),
            (false, false) => {}
        }
        if self.continual_wm {
            parts.push("CWM");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.continual_wm && !self.reflector() {
            return Err(Error::Config("continual_wm requires a reflector stage".into()));
        }
        if self.reflector() && !self.controller {
            return Err(Error::Config("the reflector requires the controller".into()));
        }
        if self.controller && !self.planner {
            return Err(Error::Config("the controller requires the planner".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSize {
    pub deter: usize,
    pub stoch: usize,
    pub hidden: usize,
}

impl Default for ModelSize {
    fn default() -> Self {
        ModelSize { deter: 32, stoch: 8, hidden: 32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Laprop,
}

/// World-model training interleaved with acting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    /// Environment steps between updates.
    pub every: u64,
    pub batch: usize,
    pub window: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub critic_lr: f64,
    /// Random-policy task episodes collected before the first task, not scored.
    pub prefill_episodes: usize,
    /// Updates run on the prefilled pool.
    pub prefill_updates: usize,
    pub loss: LossConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            every: 16,
            batch: 8,
            window: 8,
            lr: DESK_LR,
            optimizer: OptimizerKind::Laprop,
            critic_lr: 1e-2,
            prefill_episodes: 4,
            prefill_updates: 200,
            loss: LossConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task_sequence: Vec<TaskName>,
    pub seeds: Vec<u64>,
    pub episodes_per_task: usize,
    /// Step budget of one task episode.
    pub task_max_steps: u64,
    /// Evaluation episodes per task after each task of the sequence.
    pub eval_episodes: usize,
    pub pool_capacity: usize,
    pub output_dir: PathBuf,
    pub toggles: Toggles,
    pub env: EnvConfig,
    pub model: ModelSize,
    pub train: TrainSchedule,
    pub control: ControlConfig,
    pub reflector: ReflectorConfig,
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task_sequence: vec![TaskName::Wood],
            seeds: (0..10).collect(),
            episodes_per_task: 50,
            task_max_steps: 400,
            eval_episodes: 0,
            pool_capacity: crate::experience_pool::DEFAULT_CAPACITY,
            output_dir: PathBuf::from("runs/default"),
            toggles: Toggles::all(),
            env: EnvConfig::default(),
            model: ModelSize::default(),
            train: TrainSchedule::default(),
            control: ControlConfig::default(),
            reflector: ReflectorConfig::default(),
            llm: LlmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_sequence.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("task_sequence and seeds must be non-empty".into()));
        }
        if self.task_max_steps == 0 || self.pool_capacity == 0 {
            return Err(Error::Config("task_max_steps and pool_capacity must be positive".into()));
        }
        let t = &self.train;
        if t.every == 0 || t.batch == 0 || t.window == 0 || !(t.lr > 0.0) || !(t.critic_lr > 0.0) {
            return Err(Error::Config("train.every, batch, window, lr and critic_lr must be positive".into()));
        }
        let m = &self.model;
        if m.deter == 0 || m.stoch == 0 || m.hidden == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        self.toggles.validate()?;
        self.control.validate()?;
        self.reflector.validate()?;
        for &task in &self.task_sequence {
            self.env.validate_for(&TaskSpec::new(task))?;
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            obs: self.env.observation_len(),
            action: Action::all().len(),
            deter: self.model.deter,
            stoch: self.model.stoch,
            hidden: self.model.hidden,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Copy with the given switches and a per-row output directory.
    pub fn with_toggles(&self, toggles: Toggles) -> Self {
        let mut c = self.clone();
        c.toggles = toggles;
        c.output_dir = self.output_dir.join(toggles.label().replace('+', "_"));
        c
    }
}

/// The seven ablation rows, in table order.
pub fn ablation_grid() -> Vec<Toggles> {
    let p = Toggles { planner: true, ..Toggles::default() };
    let pc = Toggles { controller: true, ..p };
    vec![
        Toggles::default(),
        p,
        pc,
        Toggles { reflector_stage1: true, ..pc },
        Toggles { reflector_stage2: true, ..pc },
        Toggles { reflector_stage1: true, reflector_stage2: true, ..pc },
        Toggles::all(),
    ]
}
