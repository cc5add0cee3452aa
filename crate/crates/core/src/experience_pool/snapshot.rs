//! Binary pool snapshots and the line-delimited inspection export.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EpisodeStats, ExperienceEntry, ExperiencePool, PoolStats};
use crate::craftworld::{Action, Item, Observation, Tile};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EVMP";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn obs(&mut self, o: &Observation) {
        self.u8(o.radius);
        self.u32(o.tiles.len() as u32);
        self.0.extend(o.tiles.iter().map(|t| t.index() as u8));
        self.0.extend_from_slice(&o.inventory);
        self.f64(o.last_reward);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn truncated() -> Error {
    Error::Snapshot("truncated pool snapshot".into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Snapshot("invalid utf-8".into()))
    }
    fn obs(&mut self) -> Result<Observation> {
        let radius = self.u8()?;
        let n = self.u32()? as usize;
        let tiles = self
            .take(n)?
            .iter()
            .map(|&b| Tile::from_index(b as usize).ok_or_else(|| Error::Snapshot(format!("bad tile {b}"))))
            .collect::<Result<Vec<_>>>()?;
        let inventory: [u8; Item::COUNT] = self.take(Item::COUNT)?.try_into().expect("inventory");
        let last_reward = self.f64()?;
        Ok(Observation { radius, tiles, inventory, last_reward })
    }
}

impl ExperiencePool {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u64(self.capacity as u64);
        w.u64(self.next_segment);
        w.u64(self.evicted);
        w.u64(self.entries.len() as u64);
        for e in &self.entries {
            w.obs(&e.s);
            w.u8(e.a.index() as u8);
            w.f64(e.r);
            w.obs(&e.s_next);
            w.u8(e.done as u8);
            w.str(&e.subtask_id);
            w.f64(e.completion);
            w.u64(e.episode_id);
            w.u64(e.t);
            w.u64(e.segment);
            match e.score_cache {
                Some(v) => {
                    w.u8(1);
                    w.f64(v);
                }
                None => w.u8(0),
            }
        }
        w.u64(self.stats.len() as u64);
        for (k, s) in &self.stats {
            w.str(k);
            for v in [s.episodes_total, s.episodes_success, s.steps_total, s.steps_success] {
                w.u64(v);
            }
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Snapshot("not a pool snapshot".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported pool snapshot version {version}")));
        }
        let capacity = r.u64()? as usize;
        let next_segment = r.u64()?;
        let evicted = r.u64()?;
        let n = r.u64()? as usize;
        let mut entries = VecDeque::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let s = r.obs()?;
            let a = Action::from_index(r.u8()? as usize).map_err(|e| Error::Snapshot(e.to_string()))?;
            let rew = r.f64()?;
            let s_next = r.obs()?;
            let done = r.u8()? != 0;
            let subtask_id = r.str()?;
            let completion = r.f64()?;
            let episode_id = r.u64()?;
            let t = r.u64()?;
            let segment = r.u64()?;
            let score_cache = match r.u8()? {
                0 => None,
                _ => Some(r.f64()?),
            };
            entries.push_back(ExperienceEntry {
                s,
                a,
                r: rew,
                s_next,
                done,
                subtask_id,
                completion,
                episode_id,
                t,
                segment,
                score_cache,
            });
        }
        let n_stats = r.u64()? as usize;
        let mut stats = PoolStats::new();
        for _ in 0..n_stats {
            let k = r.str()?;
            let s = EpisodeStats {
                episodes_total: r.u64()?,
                episodes_success: r.u64()?,
                steps_total: r.u64()?,
                steps_success: r.u64()?,
            };
            stats.insert(k, s);
        }
        if r.pos != buf.len() {
            return Err(Error::Snapshot("trailing bytes after pool snapshot".into()));
        }
        Ok(ExperiencePool { capacity, entries, stats, next_segment, evicted })
    }

    pub fn snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the snapshot encoding, hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

/// One line of the inspection export. Fields appear in declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub episode_id: u64,
    pub t: u64,
    pub segment: u64,
    pub subtask_id: String,
    pub action: String,
    pub reward: f64,
    pub done: bool,
    pub completion: f64,
    pub inventory: Vec<u8>,
    pub next_inventory: Vec<u8>,
    pub score_cache: Option<f64>,
}

impl From<&ExperienceEntry> for EntryRecord {
    fn from(e: &ExperienceEntry) -> Self {
        EntryRecord {
            episode_id: e.episode_id,
            t: e.t,
            segment: e.segment,
            subtask_id: e.subtask_id.clone(),
            action: e.a.to_string(),
            reward: e.r,
            done: e.done,
            completion: e.completion,
            inventory: e.s.inventory.to_vec(),
            next_inventory: e.s_next.inventory.to_vec(),
            score_cache: e.score_cache,
        }
    }
}

/// Writes one JSON object per entry.
pub fn export_jsonl<W: Write>(pool: &ExperiencePool, mut out: W) -> Result<()> {
    for e in pool.entries() {
        let line = serde_json::to_string(&EntryRecord::from(e)).map_err(|e| Error::Snapshot(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}
