//! Action controller: imagination-based action selection over the world
//! model, similarity-based self-verification, and the subtask episode loop.

mod episode;
mod oracle;
mod select;
mod verify;

pub use episode::{run_subtask_episode, EpisodeReport, NoHook, Outcome, Policy, StepHook};
pub use oracle::{value_iteration, TabularMDP};
pub use select::{continue_probability, score_sequence, select_actions, ControlConfig, Goal};
pub use verify::{goal_similarity, verify, verify_similarity, Verdict};

#[cfg(test)]
mod tests;
