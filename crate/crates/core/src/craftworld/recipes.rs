//! The recipe table: how every item is obtained, what it consumes and which
//! tool gates it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::items::Item;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gather,
    Craft,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub item: Item,
    pub method: Method,
    /// Consumed per craft action.
    pub inputs: Vec<(Item, u32)>,
    /// Held, never consumed.
    pub tool: Option<Item>,
    /// Units produced per gather/craft action.
    pub yield_count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecipeBook {
    rows: BTreeMap<Item, Recipe>,
}

impl RecipeBook {
    pub fn normative() -> Self {
        use Item::*;
        let gather = |item, tool| Recipe {
            item,
            method: Method::Gather,
            inputs: vec![],
            tool,
            yield_count: 1,
        };
        let craft = |item, inputs: &[(Item, u32)], yield_count| Recipe {
            item,
            method: Method::Craft,
            inputs: inputs.to_vec(),
            tool: None,
            yield_count,
        };
        let rows = [
            gather(Log, None),
            craft(Planks, &[(Log, 1)], 4),
            craft(Stick, &[(Planks, 2)], 4),
            craft(WoodenPickaxe, &[(Planks, 3), (Stick, 2)], 1),
            gather(Cobblestone, Some(WoodenPickaxe)),
            craft(StonePickaxe, &[(Cobblestone, 3), (Stick, 2)], 1),
            gather(IronOre, Some(StonePickaxe)),
            craft(IronIngot, &[(IronOre, 1)], 1),
            craft(IronPickaxe, &[(IronIngot, 3), (Stick, 2)], 1),
            gather(GoldOre, Some(IronPickaxe)),
            craft(GoldIngot, &[(GoldOre, 1)], 1),
            gather(Diamond, Some(IronPickaxe)),
        ];
        RecipeBook {
            rows: rows.into_iter().map(|r| (r.item, r)).collect(),
        }
    }

    pub fn from_rows(rows: impl IntoIterator<Item = Recipe>) -> Self {
        RecipeBook {
            rows: rows.into_iter().map(|r| (r.item, r)).collect(),
        }
    }

    /// Copy of the book with `item`'s row removed.
    pub fn without(&self, item: Item) -> Self {
        let mut rows = self.rows.clone();
        rows.remove(&item);
        RecipeBook { rows }
    }

    pub fn requirements(&self, item: Item) -> Result<&Recipe> {
        self.rows
            .get(&item)
            .ok_or_else(|| Error::Lookup(format!("no recipe row for `{item}`")))
    }

    pub fn rows(&self) -> impl Iterator<Item = &Recipe> {
        self.rows.values()
    }

    pub fn craftable(&self) -> Vec<Item> {
        self.rows
            .values()
            .filter(|r| r.method == Method::Craft)
            .map(|r| r.item)
            .collect()
    }

    /// Direct prerequisites: consumed inputs plus the gating tool.
    pub fn direct_prerequisites(&self, item: Item) -> Result<Vec<Item>> {
        let row = self.requirements(item)?;
        let mut out: Vec<Item> = row.inputs.iter().map(|(i, _)| *i).collect();
        out.extend(row.tool);
        Ok(out)
    }

    /// Every item on some dependency path into `item`, excluding `item` itself.
    pub fn ancestors(&self, item: Item) -> Result<BTreeSet<Item>> {
        let mut seen = BTreeSet::new();
        let mut stack = self.direct_prerequisites(item)?;
        while let Some(next) = stack.pop() {
            if seen.insert(next) {
                stack.extend(self.direct_prerequisites(next)?);
            }
        }
        Ok(seen)
    }

    /// Milestone set of `item`: its ancestors plus the item itself.
    pub fn milestones(&self, item: Item) -> Result<BTreeSet<Item>> {
        let mut set = self.ancestors(item)?;
        set.insert(item);
        Ok(set)
    }
}

/// Row of the normative table for `item`.
pub fn craft_requirements(item: Item) -> Result<Recipe> {
    RecipeBook::normative().requirements(item).cloned()
}

/// Same as [`craft_requirements`] but keyed by item name.
pub fn craft_requirements_by_name(name: &str) -> Result<Recipe> {
    craft_requirements(name.parse()?)
}
