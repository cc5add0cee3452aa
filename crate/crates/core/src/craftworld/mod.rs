//! CraftWorld: a seeded, partially observable gridworld with a tiered
//! crafting hierarchy (wood, stone, iron, gold, diamond).
//!
//! The agent sees a small window around itself plus its inventory. Resource
//! tiles are walkable; `gather` harvests the tile under the agent when the
//! gating tool is held and turns it into empty ground.

mod action;
mod dump;
mod env;
mod items;
mod recipes;
mod task;

pub use action::{Action, Direction, CRAFTABLE};
pub use dump::{read_records, write_records, TrajectoryRecord};
pub use env::{
    reset, task_success, Densities, EnvConfig, EnvState, Observation, StepOutcome, COUNT_CLIP,
    STEP_COST, TARGET_REWARD,
};
pub use items::{Item, Tile};
pub use recipes::{craft_requirements, craft_requirements_by_name, Method, Recipe, RecipeBook};
pub use task::{TaskName, TaskSpec};
