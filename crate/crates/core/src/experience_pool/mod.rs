//! Experience pool: an append-only store of annotated transitions, grouped
//! into subtask segments, with per-subtask success statistics.

mod completion;
mod snapshot;

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::craftworld::{Action, Observation};
use crate::error::{Error, Result};
use crate::rng;
use crate::world_model::{Transition, Window};

pub use completion::completion_ratio;
pub use snapshot::{export_jsonl, EntryRecord};

/// Desk-scale replay capacity in transitions.
pub const DEFAULT_CAPACITY: usize = 100_000;

/// One stored transition.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceEntry {
    pub s: Observation,
    pub a: Action,
    pub r: f64,
    pub s_next: Observation,
    pub done: bool,
    pub subtask_id: String,
    /// Completion ratio of the segment this entry belongs to.
    pub completion: f64,
    pub episode_id: u64,
    /// Environment step index within the episode.
    pub t: u64,
    /// Identifier of the subtask segment, assigned by the pool.
    pub segment: u64,
    /// Last experience score computed by the reflector.
    pub score_cache: Option<f64>,
}

impl ExperienceEntry {
    /// Transition with `completion`, `segment` and `score_cache` left for the pool to fill.
    pub fn new(s: Observation, a: Action, r: f64, s_next: Observation, done: bool, episode_id: u64, t: u64) -> Self {
        ExperienceEntry {
            s,
            a,
            r,
            s_next,
            done,
            subtask_id: String::new(),
            completion: 0.0,
            episode_id,
            t,
            segment: 0,
            score_cache: None,
        }
    }

    pub fn transition(&self) -> Transition {
        Transition {
            obs: self.s.features(),
            action: self.a.index(),
            reward: self.r,
            next_obs: self.s_next.features(),
            done: self.done,
            episode: self.episode_id,
            t: self.t,
        }
    }
}

/// Episode and step counters of one subtask (or task).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episodes_total: u64,
    pub episodes_success: u64,
    pub steps_total: u64,
    pub steps_success: u64,
}

impl EpisodeStats {
    pub fn record(&mut self, steps: u64, success: bool) {
        self.episodes_total += 1;
        self.steps_total += steps;
        if success {
            self.episodes_success += 1;
            self.steps_success += steps;
        }
    }

    fn forget(&mut self, steps: u64, success: bool) {
        self.episodes_total -= 1;
        self.steps_total -= steps;
        if success {
            self.episodes_success -= 1;
            self.steps_success -= steps;
        }
    }

    /// Success rate; 0 when no episode was recorded.
    pub fn success_rate(&self) -> f64 {
        ratio(self.episodes_success, self.episodes_total)
    }

    /// Exploration efficiency: successful steps over all steps; 0 when no steps.
    pub fn efficiency(&self) -> f64 {
        ratio(self.steps_success, self.steps_total)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub type PoolStats = BTreeMap<String, EpisodeStats>;

/// `(SR, EE)` of one set of counters.
pub fn compute_metrics(stats: &EpisodeStats) -> (f64, f64) {
    (stats.success_rate(), stats.efficiency())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Span {
    key: u64,
    len: usize,
}

/// The pool. Segments are appended whole and evicted oldest-episode first.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperiencePool {
    capacity: usize,
    entries: VecDeque<ExperienceEntry>,
    stats: PoolStats,
    next_segment: u64,
    evicted: u64,
}

impl Default for ExperiencePool {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

fn is_success(completion: f64) -> bool {
    completion == 1.0
}

impl ExperiencePool {
    pub fn new(capacity: usize) -> Self {
        ExperiencePool { capacity, entries: VecDeque::new(), stats: PoolStats::new(), next_segment: 0, evicted: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> &PoolStats {
        &self.stats
    }

    pub fn subtask_stats(&self, subtask: &str) -> EpisodeStats {
        self.stats.get(subtask).copied().unwrap_or_default()
    }

    /// Number of entries dropped by eviction so far.
    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &ExperienceEntry> + DoubleEndedIterator {
        self.entries.iter()
    }

    pub fn entry(&self, i: usize) -> Option<&ExperienceEntry> {
        self.entries.get(i)
    }

    pub fn set_score(&mut self, i: usize, score: Option<f64>) {
        if let Some(e) = self.entries.get_mut(i) {
            e.score_cache = score;
        }
    }

    /// Stores one subtask segment. Entries must share an episode id and have
    /// strictly increasing `t`; completion is stamped on every entry.
    pub fn append_trajectory(&mut self, mut entries: Vec<ExperienceEntry>, subtask_id: &str, completion: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&completion) {
            return Err(Error::Validation(format!("completion {completion} outside [0, 1]")));
        }
        crate::planner::Subtask::from_id(subtask_id)?;
        if let Some(first) = entries.first() {
            if entries.iter().any(|e| e.episode_id != first.episode_id) {
                return Err(Error::Validation("trajectory mixes episode ids".into()));
            }
            if entries.windows(2).any(|w| w[1].t <= w[0].t) {
                return Err(Error::Validation("trajectory steps are not strictly increasing".into()));
            }
            if let Some(last) = self.entries.back() {
                if last.episode_id == first.episode_id && last.t >= first.t {
                    return Err(Error::Validation("trajectory overlaps the stored episode".into()));
                }
            }
        }
        let segment = self.next_segment;
        self.next_segment += 1;
        let steps = entries.len() as u64;
        for e in &mut entries {
            e.subtask_id = subtask_id.to_string();
            e.completion = completion;
            e.segment = segment;
            e.score_cache = None;
        }
        self.stats.entry(subtask_id.to_string()).or_default().record(steps, is_success(completion));
        self.entries.extend(entries);
        self.evict();
        Ok(())
    }

    fn evict(&mut self) {
        while self.entries.len() > self.capacity {
            let episode = self.entries[0].episode_id;
            while self.entries.front().is_some_and(|e| e.episode_id == episode) {
                let seg = self.entries[0].segment;
                let mut n = 0u64;
                let mut head = None;
                while self.entries.front().is_some_and(|e| e.segment == seg) {
                    head = self.entries.pop_front();
                    n += 1;
                }
                let head = head.expect("non-empty segment");
                if let Some(s) = self.stats.get_mut(&head.subtask_id) {
                    s.forget(n, is_success(head.completion));
                    if s.episodes_total == 0 {
                        self.stats.remove(&head.subtask_id);
                    }
                }
                self.evicted += n;
            }
        }
    }

    /// Counters rebuilt from the stored entries.
    pub fn recompute_stats(&self) -> PoolStats {
        let mut stats = PoolStats::new();
        for seg in self.segments() {
            let e = &self.entries[seg.start];
            stats.entry(e.subtask_id.clone()).or_default().record(seg.len as u64, is_success(e.completion));
        }
        stats
    }

    /// All entries of `subtask` in insertion order.
    pub fn query_by_subtask(&self, subtask: &str) -> Vec<&ExperienceEntry> {
        self.entries.iter().filter(|e| e.subtask_id == subtask).collect()
    }

    /// Contiguous segments as index ranges into the pool.
    pub fn segments(&self) -> Vec<Segment> {
        self.runs(|e| e.segment).into_iter().map(|(start, span)| Segment { start, len: span.len }).collect()
    }

    /// Contiguous episodes as index ranges into the pool.
    pub fn episodes(&self) -> Vec<Segment> {
        self.runs(|e| e.episode_id).into_iter().map(|(start, span)| Segment { start, len: span.len }).collect()
    }

    fn runs(&self, key: impl Fn(&ExperienceEntry) -> u64) -> Vec<(usize, Span)> {
        let mut out: Vec<(usize, Span)> = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            let k = key(e);
            match out.last_mut() {
                Some((_, span)) if span.key == k => span.len += 1,
                _ => out.push((i, Span { key: k, len: 1 })),
            }
        }
        out
    }

    /// Start indices of `b` windows of length `t`, uniform over every valid
    /// episode-contiguous position. Episodes shorter than `t` are skipped.
    pub fn sample_window_starts(&self, b: usize, t: usize, seed: u64) -> Result<Vec<usize>> {
        if t == 0 {
            return Err(Error::Batch("window length must be at least 1".into()));
        }
        let episodes = self.episodes();
        let mut cumulative = Vec::with_capacity(episodes.len());
        let mut total = 0usize;
        for ep in &episodes {
            total += (ep.len + 1).saturating_sub(t);
            cumulative.push(total);
        }
        if total == 0 {
            return Err(Error::Batch(format!("no episode has {t} contiguous steps")));
        }
        let mut r = rng::stream(seed, &[rng::label::TRAIN]);
        Ok((0..b)
            .map(|_| {
                let u = r.random_range(0..total);
                let k = cumulative.partition_point(|&c| c <= u);
                let before = if k == 0 { 0 } else { cumulative[k - 1] };
                episodes[k].start + (u - before)
            })
            .collect())
    }

    /// `b` windows of `t` transitions for world-model training.
    pub fn sample_windows(&self, b: usize, t: usize, seed: u64) -> Result<Vec<Window>> {
        let starts = self.sample_window_starts(b, t, seed)?;
        Ok(starts.into_iter().map(|s| self.window(s, t)).collect())
    }

    /// Window of `len` entries starting at index `start`.
    pub fn window(&self, start: usize, len: usize) -> Window {
        Window::new(self.entries.range(start..start + len).map(ExperienceEntry::transition).collect())
    }
}

/// Index range `[start, start + len)` inside the pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}
