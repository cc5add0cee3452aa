//! Optional remote plan proposals.
//!
//! Request: `POST <endpoint>` with JSON `{"model": .., "prompt": ..}` and a
//! bearer token from `EVOAGENT_LLM_TOKEN` when set. Response body: a line
//! `PLAN`, one subtask id per line, then `END`. Anything else is rejected and
//! the caller keeps the rule-based plan.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::plan::{demands, Plan, PlanStep, Provenance};
use super::subtask::Subtask;
use crate::craftworld::{Item, RecipeBook, TaskSpec};
use crate::error::{Error, Result};
use crate::experience_pool::PoolStats;

pub const TOKEN_VAR: &str = "EVOAGENT_LLM_TOKEN";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// No endpoint means offline.
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig { endpoint: None, model: "planner".into(), timeout_secs: 10 }
    }
}

pub struct LlmClient {
    endpoint: String,
    model: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl LlmClient {
    /// `None` in offline mode.
    pub fn from_config(cfg: &LlmConfig) -> Option<Self> {
        let endpoint = cfg.endpoint.clone()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        Some(LlmClient { endpoint, model: cfg.model.clone(), token: std::env::var(TOKEN_VAR).ok(), agent })
    }

    pub fn complete(&self, prompt: &str) -> Result<String> {
        let body = serde_json::json!({ "model": self.model, "prompt": prompt }).to_string();
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send(body.as_str()).map_err(|e| Error::Llm(e.to_string()))?;
        resp.body_mut().read_to_string().map_err(|e| Error::Llm(e.to_string()))
    }
}

/// Structured prompt: task, inventory, recent failures and success rates.
pub fn build_prompt(task: &TaskSpec, counts: &[u32; Item::COUNT], failures: &[String], stats: &PoolStats) -> String {
    let mut p = format!("TASK {}\nTARGET {}\nINVENTORY", task.name, task.target_item);
    for item in Item::ALL {
        if counts[item.index()] > 0 {
            p.push_str(&format!(" {}={}", item, counts[item.index()]));
        }
    }
    p.push_str("\nFAILURES");
    for f in failures {
        p.push(' ');
        p.push_str(f);
    }
    p.push_str("\nSTATS");
    for (id, s) in stats {
        p.push_str(&format!(" {id}:{}/{}", s.episodes_success, s.episodes_total));
    }
    p.push_str("\nSUBTASKS");
    for s in super::subtask::registry() {
        p.push(' ');
        p.push_str(&s.id);
    }
    p.push_str("\nReply with PLAN, one subtask id per line, END.\n");
    p
}

/// Subtask ids between the `PLAN` and `END` lines.
pub fn parse_response(text: &str) -> Result<Vec<String>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("PLAN") {
        return Err(Error::Llm("response does not start with PLAN".into()));
    }
    let mut ids = Vec::new();
    for line in lines {
        if line == "END" {
            return Ok(ids);
        }
        ids.push(line.to_string());
    }
    Err(Error::Llm("response is missing END".into()))
}

/// Turns proposed ids into a plan and checks it against the registry, the
/// recipe order and coverage of the task target.
pub fn validate_proposal(ids: &[String], task: &TaskSpec, counts: &[u32; Item::COUNT], step: u64) -> Result<Plan> {
    let book = RecipeBook::normative();
    let demand = demands(counts, task.target_item, &book)?;
    let mut steps = Vec::with_capacity(ids.len());
    for id in ids {
        let subtask = Subtask::from_id(id)?;
        let item = subtask.target_item;
        let fallback = if item.is_tool() { 1 } else { counts[item.index()] + book.requirements(item)?.yield_count };
        let target_count = demand.get(&item).copied().unwrap_or(fallback);
        steps.push(PlanStep { subtask, target_count });
    }
    let plan = Plan { steps, provenance: Provenance::Llm, created_at_step: step };
    plan.validate(counts, task)?;
    Ok(plan)
}

/// Asks the remote planner. Offline mode, transport failures and invalid
/// answers all yield `None`.
pub fn llm_propose(
    task: &TaskSpec,
    counts: &[u32; Item::COUNT],
    failures: &[String],
    stats: &PoolStats,
    client: Option<&LlmClient>,
    step: u64,
) -> Option<Plan> {
    let client = client?;
    let reply = match client.complete(&build_prompt(task, counts, failures, stats)) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("planner service unavailable, using rule-based plan: {e}");
            return None;
        }
    };
    match parse_response(&reply).and_then(|ids| validate_proposal(&ids, task, counts, step)) {
        Ok(p) => Some(p),
        Err(e) => {
            log::warn!("rejected planner service proposal: {e}");
            None
        }
    }
}
