//! Closed-loop planning, control and reflection over a continual recurrent
//! state-space world model, exercised on the CraftWorld gridworld.

pub mod controller;
pub mod craftworld;
pub mod error;
pub mod experience_pool;
pub mod harness;
pub mod planner;
pub mod reflector;
pub mod rng;
pub mod world_model;

pub use error::{Error, Result};
