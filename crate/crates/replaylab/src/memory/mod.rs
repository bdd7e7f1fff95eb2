//! Replay buffers: a short-term FIFO, a rank-ordered episodic store, and the
//! dual-buffer batch sampler that feeds training.

mod ranked;
pub mod snapshot;
mod strategy;

pub use ranked::{RankedStore, CALIBRATION_SAMPLES};
pub use strategy::{
    feature_of, rank_reservoir, rank_reward, rank_surprise, FeatureMode, SelectionStrategy,
    StrategyKind, SurpriseSignal, REWARD_TIE_BREAK,
};

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::Experience;
use crate::error::{Error, Result};

/// Bounded first-in-first-out buffer; the short-term side of replay.
#[derive(Debug, Clone)]
pub struct FifoBuffer {
    capacity: usize,
    entries: VecDeque<Experience>,
}

impl FifoBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("fifo capacity must be at least 1".into()));
        }
        Ok(FifoBuffer {
            capacity,
            entries: VecDeque::new(),
        })
    }

    /// A buffer that never evicts; used by the unlimited-memory baseline.
    pub fn unbounded() -> Self {
        FifoBuffer {
            capacity: usize::MAX,
            entries: VecDeque::new(),
        }
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

    /// Appends an experience, returning the evicted oldest entry when full.
    pub fn insert(&mut self, e: Experience) -> Option<Experience> {
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back(e);
        evicted
    }

    pub fn get(&self, index: usize) -> Option<&Experience> {
        self.entries.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.entries.iter()
    }

    /// Number of stored experiences per task, for reporting.
    pub fn composition_report(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for e in self.iter() {
            *counts.entry(e.task_id).or_insert(0) += 1;
        }
        counts
    }
}

/// How a training batch splits across the two buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub total: usize,
    pub from_fifo: usize,
    pub from_episodic: usize,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        Self::new(self.total, self.from_fifo, self.from_episodic).map(|_| ())
    }

    pub fn new(total: usize, from_fifo: usize, from_episodic: usize) -> Result<Self> {
        if from_fifo + from_episodic != total || total == 0 {
            return Err(Error::BadBatchSplit {
                total,
                from_fifo,
                from_episodic,
            });
        }
        Ok(BatchSpec {
            total,
            from_fifo,
            from_episodic,
        })
    }

    /// The paper's split: 60 experiences, half from each buffer.
    pub fn dual_default() -> Self {
        BatchSpec {
            total: 60,
            from_fifo: 30,
            from_episodic: 30,
        }
    }
}

/// Draws a training batch uniformly with replacement from both buffers.
///
/// Each buffer contributes its configured share; when one buffer is empty the
/// other covers the whole batch. Sampling never mutates the FIFO; under the
/// Coverage strategy the episodic store refreshes the ranks of the distinct
/// entries that were drawn.
pub fn sample_batch<R: Rng>(
    fifo: &FifoBuffer,
    episodic: Option<&mut RankedStore>,
    spec: &BatchSpec,
    rng: &mut R,
) -> Result<Vec<Experience>> {
    let epi_len = episodic.as_ref().map_or(0, |s| s.len());
    if fifo.is_empty() && epi_len == 0 {
        return Err(Error::NoExperiences);
    }
    let (from_fifo, from_episodic) = if fifo.is_empty() {
        (0, spec.total)
    } else if epi_len == 0 {
        (spec.total, 0)
    } else {
        (spec.from_fifo, spec.from_episodic)
    };
    let mut batch = Vec::with_capacity(spec.total);
    for _ in 0..from_fifo {
        let i = rng.random_range(0..fifo.len());
        batch.push(fifo.get(i).expect("index in range").clone());
    }
    if from_episodic > 0 {
        let store = episodic.expect("episodic share implies a store");
        batch.extend(store.sample(from_episodic, rng)?);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::test_experience;
    use crate::seeding;
    use proptest::prelude::*;

    #[test]
    fn fifo_evicts_oldest_first() {
        let mut fifo = FifoBuffer::new(2).unwrap();
        assert!(fifo.insert(test_experience(0, 0, 0.0)).is_none());
        assert!(fifo.insert(test_experience(0, 1, 0.0)).is_none());
        let evicted = fifo.insert(test_experience(0, 2, 0.0)).unwrap();
        assert_eq!(evicted.step_index, 0);
        let kept: Vec<u64> = fifo.iter().map(|e| e.step_index).collect();
        assert_eq!(kept, vec![1, 2]);
    }

    #[test]
    fn fifo_of_capacity_one_holds_only_the_newest() {
        let mut fifo = FifoBuffer::new(1).unwrap();
        for i in 0..5 {
            fifo.insert(test_experience(0, i, 0.0));
        }
        assert_eq!(fifo.len(), 1);
        assert_eq!(fifo.get(0).unwrap().step_index, 4);
    }

    #[test]
    fn fifo_preserves_arrival_order() {
        let mut fifo = FifoBuffer::new(8).unwrap();
        for i in [3u64, 1, 4, 1, 5] {
            fifo.insert(test_experience(0, i, 0.0));
        }
        let order: Vec<u64> = fifo.iter().map(|e| e.step_index).collect();
        assert_eq!(order, vec![3, 1, 4, 1, 5]);
    }

    #[test]
    fn batch_spec_must_sum() {
        assert!(BatchSpec::new(60, 30, 30).is_ok());
        assert!(matches!(
            BatchSpec::new(60, 30, 29),
            Err(Error::BadBatchSplit { .. })
        ));
    }

    #[test]
    fn sample_batch_draws_configured_shares() {
        // FIFO holds task 1, episodic holds task 2, so provenance is countable.
        let mut fifo = FifoBuffer::new(50).unwrap();
        for i in 0..50 {
            fifo.insert(test_experience(1, i, 0.0));
        }
        let mut store = RankedStore::new(50, SelectionStrategy::reservoir(7)).unwrap();
        for i in 50..100 {
            store.offer(test_experience(2, i, 0.0), None).unwrap();
        }
        let mut rng = seeding::stream(1, "sample");
        let batch = sample_batch(
            &fifo,
            Some(&mut store),
            &BatchSpec::dual_default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(batch.len(), 60);
        assert_eq!(batch.iter().filter(|e| e.task_id == 1).count(), 30);
        assert_eq!(batch.iter().filter(|e| e.task_id == 2).count(), 30);
    }

    #[test]
    fn empty_episodic_store_falls_back_to_fifo() {
        let mut fifo = FifoBuffer::new(10).unwrap();
        for i in 0..10 {
            fifo.insert(test_experience(1, i, 0.0));
        }
        let mut store = RankedStore::new(5, SelectionStrategy::reservoir(7)).unwrap();
        let mut rng = seeding::stream(2, "sample");
        let batch = sample_batch(
            &fifo,
            Some(&mut store),
            &BatchSpec::dual_default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(batch.len(), 60);
        assert!(batch.iter().all(|e| e.task_id == 1));
    }

    #[test]
    fn empty_fifo_falls_back_to_episodic() {
        let fifo = FifoBuffer::new(10).unwrap();
        let mut store = RankedStore::new(5, SelectionStrategy::reservoir(7)).unwrap();
        for i in 0..5 {
            store.offer(test_experience(2, i, 0.0), None).unwrap();
        }
        let mut rng = seeding::stream(3, "sample");
        let batch = sample_batch(
            &fifo,
            Some(&mut store),
            &BatchSpec::dual_default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(batch.len(), 60);
        assert!(batch.iter().all(|e| e.task_id == 2));
    }

    #[test]
    fn single_entry_fifo_repeats_under_replacement() {
        let mut fifo = FifoBuffer::new(1).unwrap();
        fifo.insert(test_experience(1, 9, 0.0));
        let mut rng = seeding::stream(4, "sample");
        let spec = BatchSpec::new(10, 10, 0).unwrap();
        let batch = sample_batch(&fifo, None, &spec, &mut rng).unwrap();
        assert_eq!(batch.len(), 10);
        assert!(batch.iter().all(|e| e.step_index == 9));
    }

    #[test]
    fn sampling_from_two_empty_buffers_fails() {
        let fifo = FifoBuffer::new(4).unwrap();
        let mut rng = seeding::stream(5, "sample");
        assert!(matches!(
            sample_batch(&fifo, None, &BatchSpec::dual_default(), &mut rng),
            Err(Error::NoExperiences)
        ));
    }

    #[test]
    fn sampling_leaves_fifo_and_reservoir_ranks_untouched() {
        let mut fifo = FifoBuffer::new(10).unwrap();
        for i in 0..10 {
            fifo.insert(test_experience(1, i, 0.0));
        }
        let mut store = RankedStore::new(10, SelectionStrategy::reservoir(7)).unwrap();
        for i in 10..20 {
            store.offer(test_experience(2, i, 0.0), None).unwrap();
        }
        let fifo_before: Vec<u64> = fifo.iter().map(|e| e.step_index).collect();
        let ranks_before: Vec<(f64, u64)> = store.entries().map(|(r, s, _)| (r, s)).collect();
        let mut rng = seeding::stream(6, "sample");
        sample_batch(&fifo, Some(&mut store), &BatchSpec::dual_default(), &mut rng).unwrap();
        let fifo_after: Vec<u64> = fifo.iter().map(|e| e.step_index).collect();
        let ranks_after: Vec<(f64, u64)> = store.entries().map(|(r, s, _)| (r, s)).collect();
        assert_eq!(fifo_before, fifo_after);
        assert_eq!(ranks_before, ranks_after);
    }

    /// Offline oracle: retained set equals the top-K of the whole stream
    /// sorted by rank, ties resolved toward earlier arrivals.
    fn offline_top_k(ranks: &[f64], k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..ranks.len()).collect();
        idx.sort_by(|&a, &b| ranks[b].total_cmp(&ranks[a]).then(a.cmp(&b)));
        let mut kept: Vec<usize> = idx.into_iter().take(k).collect();
        kept.sort();
        kept
    }

    proptest! {
        #[test]
        fn ranked_store_matches_offline_sort(
            // Quantized ranks force plenty of ties.
            raw in proptest::collection::vec(0u8..40, 1..200),
            capacity in 1usize..20,
        ) {
            let ranks: Vec<f64> = raw.iter().map(|r| *r as f64 / 4.0).collect();
            let mut store = RankedStore::new(capacity, SelectionStrategy::reservoir(1)).unwrap();
            for (i, r) in ranks.iter().enumerate() {
                store.ranked_insert(test_experience(0, i as u64, 0.0), *r).unwrap();
            }
            let mut kept: Vec<usize> =
                store.experiences().map(|e| e.step_index as usize).collect();
            kept.sort();
            prop_assert_eq!(kept, offline_top_k(&ranks, capacity));
        }

        #[test]
        fn fifo_keeps_exactly_the_last_capacity_entries(
            n in 1usize..100,
            capacity in 1usize..20,
        ) {
            let mut fifo = FifoBuffer::new(capacity).unwrap();
            for i in 0..n {
                fifo.insert(test_experience(0, i as u64, 0.0));
            }
            let kept: Vec<u64> = fifo.iter().map(|e| e.step_index).collect();
            let expect: Vec<u64> = (n.saturating_sub(capacity)..n).map(|i| i as u64).collect();
            prop_assert_eq!(kept, expect);
        }
    }
}
