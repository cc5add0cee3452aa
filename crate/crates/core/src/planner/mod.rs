//! Task planner: backward-chains a task target over the recipe graph into an
//! ordered list of gather/craft subtasks, re-plans after failures, and can
//! optionally take proposals from a remote service.

mod llm;
mod plan;
mod subtask;

pub use llm::{build_prompt, llm_propose, parse_response, validate_proposal, LlmClient, LlmConfig, TOKEN_VAR};
pub use plan::{demands, plan, plan_from_counts, plan_with_book, state_counts, Plan, PlanStep, Provenance, Replanner};
pub use subtask::{cosine, embed_counts, embed_state, embed_subtask, registry, Subtask, SubtaskKind};
