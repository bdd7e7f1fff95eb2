//! Buffer snapshots: a self-describing JSON document with one record per
//! stored experience. Numeric fields round-trip losslessly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{FifoBuffer, RankedStore};

const SNAPSHOT_KIND: &str = "buffer-snapshot";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotRecord {
    pub task_id: usize,
    pub step_index: u64,
    pub rank: f64,
    pub reward: f64,
    pub ret: f64,
    pub action: usize,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BufferSnapshot {
    kind: String,
    version: u32,
    pub records: Vec<SnapshotRecord>,
}

impl BufferSnapshot {
    pub fn new(records: Vec<SnapshotRecord>) -> Self {
        BufferSnapshot {
            kind: SNAPSHOT_KIND.into(),
            version: 1,
            records,
        }
    }

    /// Snapshot of an episodic store, worst rank first.
    pub fn of_store(store: &RankedStore) -> Self {
        Self::new(
            store
                .entries()
                .map(|(rank, _, e)| SnapshotRecord {
                    task_id: e.task_id,
                    step_index: e.step_index,
                    rank,
                    reward: e.reward,
                    ret: e.ret,
                    action: e.action,
                    state: e.state.clone(),
                })
                .collect(),
        )
    }

    /// Snapshot of a FIFO buffer in arrival order; FIFO entries carry no rank.
    pub fn of_fifo(fifo: &FifoBuffer) -> Self {
        Self::new(
            fifo.iter()
                .map(|e| SnapshotRecord {
                    task_id: e.task_id,
                    step_index: e.step_index,
                    rank: 0.0,
                    reward: e.reward,
                    ret: e.ret,
                    action: e.action,
                    state: e.state.clone(),
                })
                .collect(),
        )
    }

    /// Stored experiences per task.
    pub fn composition(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.task_id).or_insert(0) += 1;
        }
        counts
    }
}

pub fn write_snapshot(snapshot: &BufferSnapshot, path: &Path) -> Result<()> {
    fs::write(
        path,
        serde_json::to_string(snapshot).expect("serializable snapshot"),
    )?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<BufferSnapshot> {
    let text = fs::read_to_string(path)?;
    let snap: BufferSnapshot =
        serde_json::from_str(&text).map_err(|e| Error::BadSnapshot(e.to_string()))?;
    if snap.kind != SNAPSHOT_KIND {
        return Err(Error::BadSnapshot(format!(
            "expected kind {SNAPSHOT_KIND}, got {}",
            snap.kind
        )));
    }
    Ok(snap)
}
