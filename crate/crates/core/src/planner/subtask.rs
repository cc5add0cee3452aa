use std::fmt;

use serde::{Deserialize, Serialize};

use crate::craftworld::{Item, Method, Observation, RecipeBook};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskKind {
    Gather,
    Craft,
}

/// A registered unit of work: obtain `target_item` by gathering or crafting.
#[derive(Clone, Debug, PartialEq)]
pub struct Subtask {
    pub id: String,
    pub target_item: Item,
    pub kind: SubtaskKind,
    /// Unit-norm indicator over the target, its inputs and its tool, in `Item::ALL` order.
    pub embedding: Vec<f64>,
    pub tier: u8,
}

fn gather_id(item: Item) -> &'static str {
    match item {
        Item::Log => "gather_log",
        Item::Cobblestone => "gather_cobblestone",
        Item::IronOre => "gather_iron",
        Item::GoldOre => "gather_gold",
        Item::Diamond => "gather_diamond",
        _ => unreachable!("{item} is not gathered"),
    }
}

fn book() -> &'static RecipeBook {
    static BOOK: std::sync::OnceLock<RecipeBook> = std::sync::OnceLock::new();
    BOOK.get_or_init(RecipeBook::normative)
}

impl Subtask {
    /// Subtask that produces `item` under the normative recipes.
    pub fn for_item(item: Item) -> Result<Self> {
        let row = book().requirements(item)?;
        let (id, kind) = match row.method {
            Method::Gather => (gather_id(item).to_string(), SubtaskKind::Gather),
            Method::Craft => (format!("craft_{}", item.name()), SubtaskKind::Craft),
        };
        let mut embedding = vec![0.0; Item::COUNT];
        for f in feature_items(item)? {
            embedding[f.index()] = 1.0;
        }
        let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        embedding.iter_mut().for_each(|v| *v /= norm);
        Ok(Subtask { id, target_item: item, kind, embedding, tier: item.tier() })
    }

    pub fn from_id(id: &str) -> Result<Self> {
        registry()
            .into_iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Lookup(format!("unknown subtask `{id}`")))
    }

    /// Actions that can make progress on this subtask.
    pub fn admissible_actions(&self) -> Vec<crate::craftworld::Action> {
        use crate::craftworld::Action;
        match self.kind {
            SubtaskKind::Gather => Action::gather_set(),
            SubtaskKind::Craft => vec![Action::Craft(self.target_item)],
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Target, inputs and tool of the recipe for `item`.
fn feature_items(item: Item) -> Result<Vec<Item>> {
    let row = book().requirements(item)?;
    let mut v = vec![item];
    v.extend(row.inputs.iter().map(|(i, _)| *i));
    v.extend(row.tool);
    Ok(v)
}

/// Every subtask, ordered by tier then id.
pub fn registry() -> Vec<Subtask> {
    let mut v: Vec<Subtask> = book().rows().map(|r| Subtask::for_item(r.item).expect("normative row")).collect();
    v.sort_by(|a, b| (a.tier, &a.id).cmp(&(b.tier, &b.id)));
    v
}

pub fn embed_subtask(subtask: &Subtask) -> Vec<f64> {
    subtask.embedding.clone()
}

/// Indicator of which of the subtask's features the inventory satisfies:
/// the target at `target_count`, each input at its recipe amount, the tool
/// when held. Reaching the target satisfies everything. Unit norm unless empty.
pub fn embed_state(obs: &Observation, subtask: &Subtask, target_count: u32) -> Vec<f64> {
    embed_counts(&obs.inventory.map(|c| c as f64), subtask, target_count)
}

/// [`embed_state`] over real-valued counts.
pub fn embed_counts(counts: &[f64; Item::COUNT], subtask: &Subtask, target_count: u32) -> Vec<f64> {
    let row = book().requirements(subtask.target_item).expect("registered subtask");
    let mut v = vec![0.0; Item::COUNT];
    let done = counts[subtask.target_item.index()] >= target_count.max(1) as f64;
    if done {
        v.clone_from(&subtask.embedding);
        return v;
    }
    for &(input, amount) in &row.inputs {
        if counts[input.index()] >= amount as f64 {
            v[input.index()] = 1.0;
        }
    }
    if let Some(tool) = row.tool {
        if counts[tool.index()] >= 1.0 {
            v[tool.index()] = 1.0;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Cosine similarity; 0 if either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}
