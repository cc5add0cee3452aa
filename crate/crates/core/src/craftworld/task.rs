use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::items::Item;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskName {
    Wood,
    Stone,
    Iron,
    Gold,
    Diamond,
}

impl TaskName {
    pub const ALL: [TaskName; 5] = [
        TaskName::Wood,
        TaskName::Stone,
        TaskName::Iron,
        TaskName::Gold,
        TaskName::Diamond,
    ];

    pub fn target(self) -> Item {
        match self {
            TaskName::Wood => Item::WoodenPickaxe,
            TaskName::Stone => Item::StonePickaxe,
            TaskName::Iron => Item::IronPickaxe,
            TaskName::Gold => Item::GoldIngot,
            TaskName::Diamond => Item::Diamond,
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Lookup(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: TaskName,
    pub target_item: Item,
    pub tier: u8,
}

impl TaskSpec {
    pub fn new(name: TaskName) -> Self {
        let target_item = name.target();
        TaskSpec {
            name,
            target_item,
            tier: target_item.tier(),
        }
    }

    /// Rejects hand-built specs whose tier disagrees with the recipe DAG.
    pub fn validate(&self) -> Result<()> {
        if self.tier != self.target_item.tier() {
            return Err(Error::Validation(format!(
                "task {} has tier {} but {} sits at tier {}",
                self.name,
                self.tier,
                self.target_item,
                self.target_item.tier()
            )));
        }
        Ok(())
    }
}

impl FromStr for TaskSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(TaskSpec::new(s.parse()?))
    }
}
