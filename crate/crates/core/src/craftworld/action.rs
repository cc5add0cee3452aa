use std::fmt;
use std::str::FromStr;

use super::items::Item;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (-1, 0),
            Direction::South => (1, 0),
            Direction::East => (0, 1),
            Direction::West => (0, -1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Move(Direction),
    Gather,
    Craft(Item),
}

/// Items with a craft action, in action-index order.
pub const CRAFTABLE: [Item; 7] = [
    Item::Planks,
    Item::Stick,
    Item::WoodenPickaxe,
    Item::StonePickaxe,
    Item::IronIngot,
    Item::IronPickaxe,
    Item::GoldIngot,
];

impl Action {
    pub const COUNT: usize = 5 + CRAFTABLE.len();

    pub fn all() -> Vec<Action> {
        (0..Action::COUNT)
            .map(|i| Action::from_index(i).expect("index in range"))
            .collect()
    }

    /// Movement plus gather.
    pub fn gather_set() -> Vec<Action> {
        (0..5).map(|i| Action::from_index(i).expect("index in range")).collect()
    }

    pub fn from_index(i: usize) -> Result<Action> {
        Ok(match i {
            0 => Action::Move(Direction::North),
            1 => Action::Move(Direction::South),
            2 => Action::Move(Direction::East),
            3 => Action::Move(Direction::West),
            4 => Action::Gather,
            _ => Action::Craft(
                *CRAFTABLE
                    .get(i - 5)
                    .ok_or_else(|| Error::Validation(format!("action index {i} out of range")))?,
            ),
        })
    }

    pub fn index(self) -> usize {
        match self {
            Action::Move(Direction::North) => 0,
            Action::Move(Direction::South) => 1,
            Action::Move(Direction::East) => 2,
            Action::Move(Direction::West) => 3,
            Action::Gather => 4,
            Action::Craft(item) => {
                5 + CRAFTABLE
                    .iter()
                    .position(|&c| c == item)
                    .unwrap_or(CRAFTABLE.len())
            }
        }
    }

    pub fn validate(self) -> Result<()> {
        if let Action::Craft(item) = self {
            if !CRAFTABLE.contains(&item) {
                return Err(Error::Validation(format!("`{item}` has no craft recipe")));
            }
        }
        Ok(())
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; Action::COUNT];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Move(Direction::North) => f.write_str("move_north"),
            Action::Move(Direction::South) => f.write_str("move_south"),
            Action::Move(Direction::East) => f.write_str("move_east"),
            Action::Move(Direction::West) => f.write_str("move_west"),
            Action::Gather => f.write_str("gather"),
            Action::Craft(item) => write!(f, "craft({item})"),
        }
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let action = match s {
            "move_north" => Action::Move(Direction::North),
            "move_south" => Action::Move(Direction::South),
            "move_east" => Action::Move(Direction::East),
            "move_west" => Action::Move(Direction::West),
            "gather" => Action::Gather,
            _ => {
                let inner = s
                    .strip_prefix("craft(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Validation(format!("malformed action `{s}`")))?;
                Action::Craft(inner.parse()?)
            }
        };
        action.validate()?;
        Ok(action)
    }
}
