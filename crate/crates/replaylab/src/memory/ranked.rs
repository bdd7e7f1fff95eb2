//! Bounded episodic memory ordered by rank.
//!
//! The store keeps at most `capacity` experiences. The minimum-rank entry is
//! always the next eviction candidate; rank ties are broken by insertion
//! order with the earlier entry kept. An incoming experience whose rank does
//! not beat the current minimum is discarded.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::core::Experience;
use crate::error::{Error, Result};
use crate::memory::strategy::{
    feature_distance, feature_of, rank_reservoir, rank_reward, rank_surprise, SelectionStrategy,
    StrategyKind,
};
use crate::nn::QNetwork;
use crate::seeding;

/// How many experiences feed the automatic coverage-distance calibration.
pub const CALIBRATION_SAMPLES: usize = 200;

/// Map key ordering entries worst-first: ascending rank, and among equal
/// ranks the later insertion first, so the eviction candidate is always the
/// first key.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EntryKey {
    rank: f64,
    seq: u64,
}

impl Eq for EntryKey {}

impl Ord for EntryKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank
            .total_cmp(&other.rank)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for EntryKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct Entry {
    exp: Experience,
    /// Cached feature vector; present only under Coverage.
    feature: Option<Vec<f64>>,
}

/// Priority-ordered replay store with strategy-driven ranking.
#[derive(Debug, Clone)]
pub struct RankedStore {
    capacity: usize,
    strategy: SelectionStrategy,
    entries: BTreeMap<EntryKey, Entry>,
    next_seq: u64,
    rng: ChaCha8Rng,
    /// Resolved coverage radius; `None` while auto-calibration is pending.
    coverage_d: Option<f64>,
}

impl RankedStore {
    pub fn new(capacity: usize, strategy: SelectionStrategy) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig(
                "episodic capacity must be at least 1".into(),
            ));
        }
        let rng = seeding::stream(strategy.seed, "ranked-store");
        let coverage_d = match strategy.kind {
            StrategyKind::Coverage => strategy.coverage_distance,
            _ => None,
        };
        Ok(RankedStore {
            capacity,
            strategy,
            entries: BTreeMap::new(),
            next_seq: 0,
            rng,
            coverage_d,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn strategy(&self) -> &SelectionStrategy {
        &self.strategy
    }

    /// The calibrated or configured coverage radius, once known.
    pub fn coverage_distance(&self) -> Option<f64> {
        self.coverage_d
    }

    /// Entries as (rank, insertion sequence, experience), worst rank first.
    pub fn entries(&self) -> impl Iterator<Item = (f64, u64, &Experience)> {
        self.entries.iter().map(|(k, e)| (k.rank, k.seq, &e.exp))
    }

    pub fn experiences(&self) -> impl Iterator<Item = &Experience> {
        self.entries.values().map(|e| &e.exp)
    }

    /// The current minimum rank, if any entry exists.
    pub fn min_rank(&self) -> Option<f64> {
        self.entries.keys().next().map(|k| k.rank)
    }

    /// Offers an experience under the configured strategy. Returns the evicted
    /// experience: an old entry that lost its slot, the offered experience
    /// itself if it did not rank high enough, or `None` while below capacity.
    pub fn offer(&mut self, e: Experience, net: Option<&QNetwork>) -> Result<Option<Experience>> {
        match self.strategy.kind {
            StrategyKind::Surprise => {
                let net = net.ok_or_else(|| {
                    Error::InvalidConfig("surprise strategy requires a network".into())
                })?;
                let rank = rank_surprise(&e.rank_view(), net, self.strategy.surprise)?;
                self.ranked_insert(e, rank)
            }
            StrategyKind::Reward => {
                let rank = rank_reward(&e.rank_view(), &mut self.rng);
                self.ranked_insert(e, rank)
            }
            StrategyKind::Reservoir => {
                let rank = rank_reservoir(&mut self.rng);
                self.ranked_insert(e, rank)
            }
            StrategyKind::Coverage => self.coverage_insert(e),
        }
    }

    /// Inserts with an explicit rank. When full, the incoming experience must
    /// strictly beat the minimum rank or it is discarded.
    pub fn ranked_insert(&mut self, e: Experience, rank: f64) -> Result<Option<Experience>> {
        self.insert_inner(e, rank, None)
    }

    fn insert_inner(
        &mut self,
        e: Experience,
        rank: f64,
        feature: Option<Vec<f64>>,
    ) -> Result<Option<Experience>> {
        if !rank.is_finite() {
            return Err(Error::NonFiniteRank(rank));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let key = EntryKey { rank, seq };
        let entry = Entry { exp: e, feature };
        if self.entries.len() < self.capacity {
            self.entries.insert(key, entry);
            return Ok(None);
        }
        let min = *self.entries.keys().next().expect("non-empty at capacity");
        if rank > min.rank {
            let (_, evicted) = self.entries.pop_first().expect("non-empty");
            self.entries.insert(key, entry);
            Ok(Some(evicted.exp))
        } else {
            Ok(Some(entry.exp))
        }
    }

    /// Coverage insertion: rank is the negative count of stored neighbors
    /// within the coverage radius. The densest point loses its slot, which
    /// may be the incoming experience itself.
    pub fn coverage_insert(&mut self, e: Experience) -> Result<Option<Experience>> {
        let feat = feature_of(self.strategy.feature, &e.rank_view())?;
        if self.coverage_d.is_none() {
            self.maybe_calibrate(&feat)?;
        }
        match self.coverage_d {
            Some(d) => {
                let mut count = 0usize;
                for other in self.entries.values() {
                    let of = other.feature.as_ref().expect("coverage entries keep features");
                    if feature_distance(self.strategy.metric, &feat, of)? < d {
                        count += 1;
                    }
                }
                self.insert_inner(e, -(count as f64), Some(feat))
            }
            // Still calibrating: the store is below capacity, so a provisional
            // rank is safe; it is recomputed when the radius resolves.
            None => self.insert_inner(e, 0.0, Some(feat)),
        }
    }

    /// Resolves the coverage radius once enough samples arrived or the store
    /// is about to face its first eviction, then re-ranks stored entries.
    fn maybe_calibrate(&mut self, incoming: &[f64]) -> Result<()> {
        let seen = self.entries.len() + 1; // stored features plus the incoming one
        if seen < CALIBRATION_SAMPLES && self.entries.len() < self.capacity {
            return Ok(());
        }
        let mut features: Vec<&[f64]> = self
            .entries
            .values()
            .map(|e| e.feature.as_ref().expect("coverage entries keep features").as_slice())
            .collect();
        features.push(incoming);
        let mut dists = Vec::with_capacity(features.len() * (features.len() - 1) / 2);
        for i in 0..features.len() {
            for j in i + 1..features.len() {
                dists.push(feature_distance(
                    self.strategy.metric,
                    features[i],
                    features[j],
                )?);
            }
        }
        let d = median(&mut dists).unwrap_or(1.0);
        self.coverage_d = Some(d);
        self.recompute_all_ranks()?;
        Ok(())
    }

    fn recompute_all_ranks(&mut self) -> Result<()> {
        let d = self.coverage_d.expect("resolved radius");
        let old = std::mem::take(&mut self.entries);
        let items: Vec<(EntryKey, Entry)> = old.into_iter().collect();
        for (key, entry) in &items {
            let feat = entry.feature.as_ref().expect("coverage entries keep features");
            let mut count = 0usize;
            for (other_key, other) in &items {
                if other_key.seq == key.seq {
                    continue;
                }
                let of = other.feature.as_ref().expect("coverage entries keep features");
                if feature_distance(self.strategy.metric, feat, of)? < d {
                    count += 1;
                }
            }
            self.entries.insert(
                EntryKey {
                    rank: -(count as f64),
                    seq: key.seq,
                },
                entry.clone(),
            );
        }
        Ok(())
    }

    /// Recomputes the rank of the given entries from current store contents.
    /// Only Coverage refreshes; other strategies keep insertion-time ranks.
    pub fn refresh_on_sample(&mut self, seqs: &[u64]) {
        if self.strategy.kind != StrategyKind::Coverage {
            return;
        }
        let Some(d) = self.coverage_d else { return };
        let keys: Vec<EntryKey> = self
            .entries
            .keys()
            .filter(|k| seqs.contains(&k.seq))
            .cloned()
            .collect();
        for key in keys {
            let entry = self.entries.remove(&key).expect("key just listed");
            let feat = entry.feature.as_ref().expect("coverage entries keep features");
            let count = self
                .entries
                .values()
                .filter(|other| {
                    let of = other.feature.as_ref().expect("coverage entries keep features");
                    feature_distance(self.strategy.metric, feat, of)
                        .map(|dist| dist < d)
                        .unwrap_or(false)
                })
                .count();
            self.entries.insert(
                EntryKey {
                    rank: -(count as f64),
                    seq: key.seq,
                },
                entry,
            );
        }
    }

    /// Draws `n` experiences uniformly with replacement, then refreshes the
    /// ranks of the distinct entries that were drawn.
    pub fn sample<R: Rng>(&mut self, n: usize, rng: &mut R) -> Result<Vec<Experience>> {
        if self.entries.is_empty() {
            return Err(Error::NoExperiences);
        }
        let keys: Vec<EntryKey> = self.entries.keys().cloned().collect();
        let mut out = Vec::with_capacity(n);
        let mut drawn: Vec<u64> = Vec::new();
        for _ in 0..n {
            let key = keys[rng.random_range(0..keys.len())];
            out.push(self.entries[&key].exp.clone());
            if !drawn.contains(&key.seq) {
                drawn.push(key.seq);
            }
        }
        self.refresh_on_sample(&drawn);
        Ok(out)
    }

    /// Number of stored experiences per task, for reporting.
    pub fn composition_report(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for e in self.experiences() {
            *counts.entry(e.task_id).or_insert(0) += 1;
        }
        counts
    }
}

/// Median of an unsorted slice; averages the two middle values for even
/// lengths. Returns `None` when empty.
fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        Some(values[n / 2])
    } else {
        Some(0.5 * (values[n / 2 - 1] + values[n / 2]))
    }
}
