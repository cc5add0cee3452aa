use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::subtask::Subtask;
use crate::craftworld::{EnvState, Item, RecipeBook, TaskSpec};
use crate::error::{Error, Result};
use crate::experience_pool::PoolStats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RuleBased,
    Llm,
    Replanned,
}

/// A subtask together with the count of its target the plan needs on hand.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanStep {
    pub subtask: Subtask,
    pub target_count: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub provenance: Provenance,
    pub created_at_step: u64,
}

impl Plan {
    pub fn ids(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.subtask.id.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Executes the plan on an unlimited-resource inventory starting from
    /// `counts`, failing on the first step whose inputs or tool are missing.
    /// Returns the final counts.
    pub fn simulate(&self, counts: &[u32; Item::COUNT]) -> Result<[u32; Item::COUNT]> {
        let book = RecipeBook::normative();
        let mut c = *counts;
        for step in &self.steps {
            let item = step.subtask.target_item;
            let row = book.requirements(item)?;
            while c[item.index()] < step.target_count {
                if let Some(tool) = row.tool {
                    if c[tool.index()] == 0 {
                        return Err(Error::Planning(format!("{} needs {tool}", step.subtask.id)));
                    }
                }
                for &(input, q) in &row.inputs {
                    if c[input.index()] < q {
                        return Err(Error::Planning(format!("{} needs {q} {input}", step.subtask.id)));
                    }
                }
                for &(input, q) in &row.inputs {
                    c[input.index()] -= q;
                }
                c[item.index()] = if item.is_tool() { 1 } else { c[item.index()] + row.yield_count };
                if item.is_tool() && step.target_count > 1 {
                    return Err(Error::Planning("tool target above one".into()));
                }
            }
        }
        Ok(c)
    }

    /// Topological validity plus coverage of the task target.
    pub fn validate(&self, counts: &[u32; Item::COUNT], task: &TaskSpec) -> Result<()> {
        let end = self.simulate(counts)?;
        if end[task.target_item.index()] == 0 {
            return Err(Error::Planning(format!("plan does not produce {}", task.target_item)));
        }
        Ok(())
    }
}

/// Inventory counts of a state with tools as 0/1.
pub fn state_counts(state: &EnvState) -> [u32; Item::COUNT] {
    Item::ALL.map(|i| state.count(i))
}

/// Amount of each item the task needs on hand at some point, netted against
/// what is already held. Items absent from the map need no work.
pub fn demands(counts: &[u32; Item::COUNT], target: Item, book: &RecipeBook) -> Result<BTreeMap<Item, u32>> {
    let items = book.milestones(target)?;
    let mut dependents: BTreeMap<Item, usize> = items.iter().map(|&i| (i, 0)).collect();
    for &i in &items {
        for p in book.direct_prerequisites(i)? {
            *dependents.get_mut(&p).expect("closed under prerequisites") += 1;
        }
    }
    let mut need: BTreeMap<Item, u32> = BTreeMap::new();
    need.insert(target, 1);
    let mut ready = vec![target];
    let mut out = BTreeMap::new();
    while let Some(x) = ready.pop() {
        let row = book.requirements(x)?;
        let n = need.get(&x).copied().unwrap_or(0);
        let short = n.saturating_sub(counts[x.index()]);
        let runs = if short == 0 { 0 } else { short.div_ceil(row.yield_count.max(1)) };
        if runs > 0 {
            out.insert(x, n);
        }
        for &(input, q) in &row.inputs {
            *need.entry(input).or_default() += runs * q;
        }
        if let Some(tool) = row.tool {
            if runs > 0 {
                let e = need.entry(tool).or_default();
                *e = (*e).max(1);
            }
        }
        for p in book.direct_prerequisites(x)? {
            let d = dependents.get_mut(&p).expect("closed under prerequisites");
            *d -= 1;
            if *d == 0 {
                ready.push(p);
            }
        }
    }
    Ok(out)
}

fn success_rate(stats: &PoolStats, id: &str) -> f64 {
    stats.get(id).map_or(0.0, |s| s.success_rate())
}

/// Orders the demanded subtasks topologically. Among ready subtasks the one
/// with higher historical success rate goes first, then the smaller id;
/// `avoid` is postponed whenever another subtask is ready.
fn order(demand: &BTreeMap<Item, u32>, book: &RecipeBook, stats: &PoolStats, avoid: Option<&str>) -> Result<Vec<PlanStep>> {
    let items: BTreeSet<Item> = demand.keys().copied().collect();
    let mut pending: BTreeMap<Item, BTreeSet<Item>> = BTreeMap::new();
    for &i in &items {
        let pre: BTreeSet<Item> = book.direct_prerequisites(i)?.into_iter().filter(|p| items.contains(p)).collect();
        pending.insert(i, pre);
    }
    let subtasks: BTreeMap<Item, Subtask> =
        items.iter().map(|&i| Subtask::for_item(i).map(|s| (i, s))).collect::<Result<_>>()?;
    let mut steps = Vec::with_capacity(items.len());
    while !pending.is_empty() {
        let ready: Vec<Item> = pending.iter().filter(|(_, pre)| pre.is_empty()).map(|(&i, _)| i).collect();
        let best = ready
            .iter()
            .copied()
            .min_by(|a, b| {
                let (sa, sb) = (&subtasks[a], &subtasks[b]);
                let key = |s: &Subtask| (avoid == Some(s.id.as_str()) && ready.len() > 1, -success_rate(stats, &s.id));
                let (ka, kb) = (key(sa), key(sb));
                ka.0.cmp(&kb.0)
                    .then(ka.1.partial_cmp(&kb.1).expect("finite rates"))
                    .then(sa.id.cmp(&sb.id))
            })
            .ok_or_else(|| Error::Planning("cyclic recipe dependencies".into()))?;
        pending.remove(&best);
        for pre in pending.values_mut() {
            pre.remove(&best);
        }
        steps.push(PlanStep { subtask: subtasks[&best].clone(), target_count: demand[&best] });
    }
    Ok(steps)
}

/// Rule-based plan for `task` from the current state, backward-chained over
/// the recipe graph and pruned by what is already held.
pub fn plan(state: &EnvState, task: &TaskSpec, stats: &PoolStats) -> Result<Plan> {
    plan_from_counts(&state_counts(state), task, stats, None, state.step_count)
}

pub fn plan_from_counts(
    counts: &[u32; Item::COUNT],
    task: &TaskSpec,
    stats: &PoolStats,
    avoid: Option<&str>,
    step: u64,
) -> Result<Plan> {
    plan_with_book(counts, task, stats, avoid, step, &RecipeBook::normative())
}

/// Same as [`plan_from_counts`] against an arbitrary recipe book.
pub fn plan_with_book(
    counts: &[u32; Item::COUNT],
    task: &TaskSpec,
    stats: &PoolStats,
    avoid: Option<&str>,
    step: u64,
    book: &RecipeBook,
) -> Result<Plan> {
    let target = task.target_item;
    let unreachable = |e: Error| Error::Planning(format!("{target} is unreachable: {e}"));
    for m in book.milestones(target).map_err(unreachable)? {
        book.requirements(m).map_err(unreachable)?;
    }
    let demand = demands(counts, target, book)?;
    let steps = order(&demand, book, stats, avoid)?;
    Ok(Plan { steps, provenance: Provenance::RuleBased, created_at_step: step })
}

/// Failure-driven re-planning with per-subtask consecutive failure counters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Replanner {
    consecutive: BTreeMap<String, u32>,
}

impl Replanner {
    pub fn failures(&self, id: &str) -> u32 {
        self.consecutive.get(id).copied().unwrap_or(0)
    }

    pub fn on_success(&mut self, id: &str) {
        self.consecutive.remove(id);
    }

    /// Re-derives the plan from the current state. Missing tools of the
    /// failed subtask reappear as prerequisite chains; when other subtasks
    /// are ready the failed one is postponed, otherwise it is retried.
    pub fn replan_on_failure(&mut self, plan: &Plan, failed: &Subtask, state: &EnvState, stats: &PoolStats) -> Result<Plan> {
        if !plan.steps.iter().any(|s| s.subtask.id == failed.id) {
            return Err(Error::Planning(format!("{} is not part of the plan", failed.id)));
        }
        *self.consecutive.entry(failed.id.clone()).or_default() += 1;
        let mut p = plan_from_counts(&state_counts(state), &state.task, stats, Some(&failed.id), state.step_count)?;
        p.provenance = Provenance::Replanned;
        Ok(p)
    }
}
