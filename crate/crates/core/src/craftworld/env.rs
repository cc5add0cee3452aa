use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::action::Action;
use super::items::{Item, Tile};
use super::recipes::{Method, RecipeBook};
use super::task::TaskSpec;
use crate::error::{Error, Result};
use crate::rng;

pub const STEP_COST: f64 = -0.01;
pub const TARGET_REWARD: f64 = 1.0;
/// Inventory counts are clipped to this before scaling into [0, 1].
pub const COUNT_CLIP: u32 = 9;

fn recipes() -> &'static RecipeBook {
    static BOOK: OnceLock<RecipeBook> = OnceLock::new();
    BOOK.get_or_init(RecipeBook::normative)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Densities {
    pub tree: f64,
    pub stone: f64,
    pub iron: f64,
    pub gold: f64,
    pub diamond: f64,
}

impl Default for Densities {
    fn default() -> Self {
        Densities {
            tree: 0.08,
            stone: 0.08,
            iron: 0.04,
            gold: 0.02,
            diamond: 0.01,
        }
    }
}

impl Densities {
    fn of(&self, tile: Tile) -> f64 {
        match tile {
            Tile::Tree => self.tree,
            Tile::Stone => self.stone,
            Tile::IronOre => self.iron,
            Tile::GoldOre => self.gold,
            Tile::DiamondOre => self.diamond,
            Tile::Empty | Tile::Wall => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub height: usize,
    pub width: usize,
    /// Observation window radius; the patch is (2r+1)x(2r+1).
    pub view_radius: usize,
    pub densities: Densities,
    /// After sampling, each tile the task needs is topped up to this count.
    pub min_resources: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            height: 16,
            width: 16,
            view_radius: 2,
            densities: Densities::default(),
            min_resources: 3,
        }
    }
}

impl EnvConfig {
    pub fn observation_len(&self) -> usize {
        Observation::feature_len(self.view_radius)
    }

    /// Resource tiles needed to reach `task`'s target from an empty inventory.
    pub fn required_tiles(task: &TaskSpec) -> Vec<Tile> {
        let book = recipes();
        book.milestones(task.target_item)
            .expect("normative table covers every item")
            .into_iter()
            .filter(|i| book.requirements(*i).map(|r| r.method == Method::Gather).unwrap_or(false))
            .filter_map(Tile::source_of)
            .collect()
    }

    pub fn validate_for(&self, task: &TaskSpec) -> Result<()> {
        task.validate()?;
        if self.height < 7 || self.width < 7 {
            return Err(Error::Config(format!(
                "grid {}x{} is smaller than 7x7",
                self.height, self.width
            )));
        }
        let d = &self.densities;
        let all = [d.tree, d.stone, d.iron, d.gold, d.diamond];
        if all.iter().any(|x| !(0.0..=1.0).contains(x)) || all.iter().sum::<f64>() > 1.0 {
            return Err(Error::Config("resource densities must lie in [0,1] and sum to at most 1".into()));
        }
        for tile in Self::required_tiles(task) {
            if d.of(tile) <= 0.0 {
                return Err(Error::Config(format!(
                    "task {} needs {tile:?} tiles but their density is zero",
                    task.name
                )));
            }
        }
        Ok(())
    }
}

/// Agent-centred view plus inventory, the only thing the agent perceives.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub radius: u8,
    /// Row-major window of tile kinds; out-of-bounds cells read as walls.
    pub tiles: Vec<Tile>,
    /// Counts in `Item::ALL` order, clipped to [`COUNT_CLIP`]. Tools count 1 when held.
    pub inventory: [u8; Item::COUNT],
    /// Last reward clipped to [0, 1].
    pub last_reward: f64,
}

impl Observation {
    pub fn feature_len(radius: usize) -> usize {
        let side = 2 * radius + 1;
        side * side * Tile::COUNT + Item::COUNT + 1
    }

    /// Flat feature vector: one-hot patch, scaled inventory, last reward.
    pub fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::feature_len(self.radius as usize));
        self.write_features(&mut v);
        v
    }

    pub fn write_features(&self, out: &mut Vec<f64>) {
        out.clear();
        for tile in &self.tiles {
            let mut one_hot = [0.0; Tile::COUNT];
            one_hot[tile.index()] = 1.0;
            out.extend_from_slice(&one_hot);
        }
        out.extend(self.inventory.iter().map(|&c| c as f64 / COUNT_CLIP as f64));
        out.push(self.last_reward);
    }

    pub fn count(&self, item: Item) -> u32 {
        self.inventory[item.index()] as u32
    }

    /// Tile under the agent.
    pub fn centre(&self) -> Tile {
        self.tiles[self.tiles.len() / 2]
    }

    /// Offset of the inventory block inside [`Observation::features`].
    pub fn inventory_offset(radius: usize) -> usize {
        let side = 2 * radius + 1;
        side * side * Tile::COUNT
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    /// 0 once the task target has been acquired.
    pub continue_flag: u8,
}

#[derive(Clone, Debug)]
pub struct EnvState {
    pub height: usize,
    pub width: usize,
    pub view_radius: usize,
    /// Row-major.
    pub grid: Vec<Tile>,
    pub agent_pos: (usize, usize),
    pub inventory: BTreeMap<Item, u32>,
    pub assets: BTreeSet<Item>,
    pub step_count: u64,
    pub task: TaskSpec,
    pub rng: ChaCha8Rng,
    last_reward: f64,
}

/// Builds a fresh world. Identical arguments give bit-identical states.
pub fn reset(seed: u64, task: TaskSpec, cfg: &EnvConfig) -> Result<(EnvState, Observation)> {
    cfg.validate_for(&task)?;
    let mut rng = rng::stream(seed, &[rng::label::ENV]);
    let (h, w) = (cfg.height, cfg.width);
    let d = &cfg.densities;
    let bands = [
        (Tile::Tree, d.tree),
        (Tile::Stone, d.stone),
        (Tile::IronOre, d.iron),
        (Tile::GoldOre, d.gold),
        (Tile::DiamondOre, d.diamond),
    ];
    let mut grid = vec![Tile::Wall; h * w];
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut tile = Tile::Empty;
            for (t, p) in bands {
                acc += p;
                if u < acc {
                    tile = t;
                    break;
                }
            }
            grid[r * w + c] = tile;
        }
    }

    let empties = |grid: &[Tile]| -> Vec<usize> {
        (0..grid.len()).filter(|&i| grid[i] == Tile::Empty).collect()
    };
    let mut free = empties(&grid);
    let start = if free.is_empty() {
        let open: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] != Tile::Wall).collect();
        open[rng.random_range(0..open.len())]
    } else {
        free.swap_remove(rng.random_range(0..free.len()))
    };

    for tile in EnvConfig::required_tiles(&task) {
        let have = grid.iter().filter(|&&t| t == tile).count();
        for _ in have..cfg.min_resources {
            if free.is_empty() {
                break;
            }
            let cell = free.swap_remove(rng.random_range(0..free.len()));
            grid[cell] = tile;
        }
    }

    let state = EnvState {
        height: h,
        width: w,
        view_radius: cfg.view_radius,
        grid,
        agent_pos: (start / w, start % w),
        inventory: BTreeMap::new(),
        assets: BTreeSet::new(),
        step_count: 0,
        task,
        rng,
        last_reward: 0.0,
    };
    let obs = state.observe();
    Ok((state, obs))
}

impl EnvState {
    pub fn tile(&self, row: usize, col: usize) -> Tile {
        self.grid[row * self.width + col]
    }

    pub fn set_tile(&mut self, row: usize, col: usize, tile: Tile) {
        self.grid[row * self.width + col] = tile;
    }

    /// Held quantity; tools count as 1 when in the asset set.
    pub fn count(&self, item: Item) -> u32 {
        if item.is_tool() {
            self.assets.contains(&item) as u32
        } else {
            self.inventory.get(&item).copied().unwrap_or(0)
        }
    }

    pub fn add(&mut self, item: Item, n: u32) {
        if n == 0 {
            return;
        }
        if item.is_tool() {
            self.assets.insert(item);
        } else {
            *self.inventory.entry(item).or_insert(0) += n;
        }
    }

    fn remove(&mut self, item: Item, n: u32) {
        if item.is_tool() {
            if n > 0 {
                self.assets.remove(&item);
            }
            return;
        }
        if let Some(c) = self.inventory.get_mut(&item) {
            *c -= n;
            if *c == 0 {
                self.inventory.remove(&item);
            }
        }
    }

    pub fn observe(&self) -> Observation {
        let r = self.view_radius as isize;
        let (ar, ac) = (self.agent_pos.0 as isize, self.agent_pos.1 as isize);
        let mut tiles = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for dr in -r..=r {
            for dc in -r..=r {
                let (rr, cc) = (ar + dr, ac + dc);
                let inside = rr >= 0 && cc >= 0 && (rr as usize) < self.height && (cc as usize) < self.width;
                tiles.push(if inside { self.tile(rr as usize, cc as usize) } else { Tile::Wall });
            }
        }
        let mut inventory = [0u8; Item::COUNT];
        for item in Item::ALL {
            inventory[item.index()] = self.count(item).min(COUNT_CLIP) as u8;
        }
        Observation {
            radius: self.view_radius as u8,
            tiles,
            inventory,
            last_reward: self.last_reward.clamp(0.0, 1.0),
        }
    }

    /// Advances the world by one action.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        action.validate()?;
        let target = self.task.target_item;
        let before = self.count(target);
        self.step_count += 1;
        match action {
            Action::Move(dir) => {
                let (dr, dc) = dir.delta();
                let nr = self.agent_pos.0 as isize + dr;
                let nc = self.agent_pos.1 as isize + dc;
                if nr >= 0 && nc >= 0 && (nr as usize) < self.height && (nc as usize) < self.width {
                    let (nr, nc) = (nr as usize, nc as usize);
                    if self.tile(nr, nc) != Tile::Wall {
                        self.agent_pos = (nr, nc);
                    }
                }
            }
            Action::Gather => {
                let (r, c) = self.agent_pos;
                if let Some(item) = self.tile(r, c).yield_item() {
                    let row = recipes().requirements(item)?;
                    if row.tool.is_none_or(|t| self.assets.contains(&t)) {
                        self.add(item, row.yield_count);
                        self.set_tile(r, c, Tile::Empty);
                    }
                }
            }
            Action::Craft(item) => {
                let row = recipes().requirements(item)?;
                let ready = row.inputs.iter().all(|&(i, n)| self.count(i) >= n)
                    && row.tool.is_none_or(|t| self.assets.contains(&t));
                if ready {
                    let row = row.clone();
                    for (i, n) in &row.inputs {
                        self.remove(*i, *n);
                    }
                    self.add(item, row.yield_count);
                }
            }
        }
        let acquired = self.count(target) > before;
        let reward = if acquired { TARGET_REWARD } else { STEP_COST };
        self.last_reward = reward;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            continue_flag: if acquired { 0 } else { 1 },
        })
    }

    /// Stable digest of the observable world state.
    pub fn state_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.height as u64).to_le_bytes());
        hasher.update((self.width as u64).to_le_bytes());
        hasher.update(self.grid.iter().map(|t| t.index() as u8).collect::<Vec<_>>());
        hasher.update((self.agent_pos.0 as u64).to_le_bytes());
        hasher.update((self.agent_pos.1 as u64).to_le_bytes());
        for item in Item::ALL {
            hasher.update(self.count(item).to_le_bytes());
        }
        hasher.update(self.step_count.to_le_bytes());
        hex::encode(&hasher.finalize()[..8])
    }
}

pub fn task_success(state: &EnvState, task: &TaskSpec) -> bool {
    state.inventory.get(&task.target_item).copied().unwrap_or(0) >= 1
        || state.assets.contains(&task.target_item)
}
