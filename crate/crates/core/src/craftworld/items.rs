use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Kind of a grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tile {
    Empty,
    Tree,
    Stone,
    IronOre,
    GoldOre,
    DiamondOre,
    Wall,
}

impl Tile {
    pub const COUNT: usize = 7;
    pub const ALL: [Tile; Tile::COUNT] = [
        Tile::Empty,
        Tile::Tree,
        Tile::Stone,
        Tile::IronOre,
        Tile::GoldOre,
        Tile::DiamondOre,
        Tile::Wall,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tile> {
        Tile::ALL.get(i).copied()
    }

    /// Item obtained by gathering on this tile.
    pub fn yield_item(self) -> Option<Item> {
        match self {
            Tile::Tree => Some(Item::Log),
            Tile::Stone => Some(Item::Cobblestone),
            Tile::IronOre => Some(Item::IronOre),
            Tile::GoldOre => Some(Item::GoldOre),
            Tile::DiamondOre => Some(Item::Diamond),
            Tile::Empty | Tile::Wall => None,
        }
    }

    /// Tile that yields `item` when gathered.
    pub fn source_of(item: Item) -> Option<Tile> {
        Tile::ALL.into_iter().find(|t| t.yield_item() == Some(item))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Log,
    Planks,
    Stick,
    WoodenPickaxe,
    Cobblestone,
    StonePickaxe,
    IronOre,
    IronIngot,
    IronPickaxe,
    GoldOre,
    GoldIngot,
    Diamond,
}

impl Item {
    pub const COUNT: usize = 12;
    pub const ALL: [Item; Item::COUNT] = [
        Item::Log,
        Item::Planks,
        Item::Stick,
        Item::WoodenPickaxe,
        Item::Cobblestone,
        Item::StonePickaxe,
        Item::IronOre,
        Item::IronIngot,
        Item::IronPickaxe,
        Item::GoldOre,
        Item::GoldIngot,
        Item::Diamond,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Item> {
        Item::ALL.get(i).copied()
    }

    /// Tools live in the asset set rather than the counted inventory.
    pub fn is_tool(self) -> bool {
        matches!(
            self,
            Item::WoodenPickaxe | Item::StonePickaxe | Item::IronPickaxe
        )
    }

    /// Tier of the task group in which the item first appears.
    pub fn tier(self) -> u8 {
        match self {
            Item::Log | Item::Planks | Item::Stick | Item::WoodenPickaxe => 1,
            Item::Cobblestone | Item::StonePickaxe => 2,
            Item::IronOre | Item::IronIngot | Item::IronPickaxe => 3,
            Item::GoldOre | Item::GoldIngot => 4,
            Item::Diamond => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Item::Log => "log",
            Item::Planks => "planks",
            Item::Stick => "stick",
            Item::WoodenPickaxe => "wooden_pickaxe",
            Item::Cobblestone => "cobblestone",
            Item::StonePickaxe => "stone_pickaxe",
            Item::IronOre => "iron_ore",
            Item::IronIngot => "iron_ingot",
            Item::IronPickaxe => "iron_pickaxe",
            Item::GoldOre => "gold_ore",
            Item::GoldIngot => "gold_ingot",
            Item::Diamond => "diamond",
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Item {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Item::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::Lookup(format!("unknown item `{s}`")))
    }
}
