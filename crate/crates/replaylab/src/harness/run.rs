//! Experiment orchestration: resolves a profile into one training run per
//! seed, writes every artifact into the output directory, and aggregates
//! across seeds. The manifest lands on disk before any training starts, so
//! an unwritable directory fails the run up front.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agent::{train_classification, train_lifelong, EvalRecord, TdPoint};
use crate::envs::{idx, DigitDataset};
use crate::error::{Error, Result};
use crate::harness::config::{Domain, ExperimentConfig};
use crate::harness::metrics::{
    aggregate_records, composition_rows, forgetting_score, read_metrics_csv, write_aggregate_csv,
    write_composition_csv, write_metrics_csv, write_td_trace_csv,
};
use crate::memory::snapshot::{write_snapshot, BufferSnapshot};
use crate::memory::{FifoBuffer, RankedStore};
use crate::nn::{save_net, QNetwork};
use crate::seeding;

const MANIFEST_KIND: &str = "run-manifest";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const COMPOSITION_FILE: &str = "composition.csv";

pub fn metrics_file(seed: u64) -> String {
    format!("metrics_seed{seed}.csv")
}

pub fn td_trace_file(seed: u64) -> String {
    format!("max_td_seed{seed}.csv")
}

pub fn buffer_file(seed: u64) -> String {
    format!("buffer_seed{seed}.json")
}

pub fn net_file(seed: u64) -> String {
    format!("net_seed{seed}.json")
}

/// Every file a run writes besides the manifest itself, in write order.
pub fn planned_files(seeds: &[u64]) -> Vec<String> {
    let mut files = Vec::new();
    for &seed in seeds {
        files.push(metrics_file(seed));
        files.push(td_trace_file(seed));
        files.push(buffer_file(seed));
        files.push(net_file(seed));
    }
    files.push(AGGREGATE_FILE.into());
    files.push(COMPOSITION_FILE.into());
    files
}

/// What a run committed to before training: the resolved profile and the
/// exact files it will produce. Never rewritten.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    kind: String,
    version: u32,
    pub software_version: String,
    pub started_unix_s: u64,
    pub seeds: Vec<u64>,
    /// Planned artifacts relative to the output directory, manifest excluded.
    pub files: Vec<String>,
    /// Profile snapshot with the output directory already resolved.
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(mut config: ExperimentConfig, resolved_dir: &Path) -> Self {
        config.output_dir = resolved_dir.to_path_buf();
        RunManifest {
            kind: MANIFEST_KIND.into(),
            version: 1,
            software_version: env!("CARGO_PKG_VERSION").into(),
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            seeds: config.seeds.clone(),
            files: planned_files(&config.seeds),
            config,
        }
    }
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("serializable manifest");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::BadManifest(e.to_string()))?;
    if manifest.kind != MANIFEST_KIND {
        return Err(Error::BadManifest(format!(
            "expected kind {MANIFEST_KIND}, got {}",
            manifest.kind
        )));
    }
    Ok(manifest)
}

/// What one seed's training left behind, regardless of domain.
struct SeedOutcome {
    records: Vec<EvalRecord>,
    td_trace: Vec<TdPoint>,
    net: QNetwork,
    fifo: FifoBuffer,
    episodic: Option<RankedStore>,
}

/// Per-seed results kept in memory for callers; files hold the same data.
#[derive(Debug, Clone)]
pub struct SeedReport {
    pub seed: u64,
    pub records: Vec<EvalRecord>,
    /// Final-over-peak success per task.
    pub retention: Vec<f64>,
    pub episodic_composition: BTreeMap<usize, usize>,
    pub fifo_composition: BTreeMap<usize, usize>,
}

/// A finished experiment: where it wrote and what each seed produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub seeds: Vec<SeedReport>,
}

impl RunReport {
    /// Retention of `task` across seeds, in seed order.
    pub fn retentions(&self, task: usize) -> Vec<f64> {
        self.seeds
            .iter()
            .map(|s| s.retention.get(task).copied().unwrap_or(1.0))
            .collect()
    }

    /// Mean success over all tasks at the final evaluation, per seed.
    pub fn final_mean_successes(&self) -> Vec<f64> {
        self.seeds
            .iter()
            .map(|s| {
                s.records.last().map_or(0.0, |r| {
                    r.per_task_success.iter().sum::<f64>() / r.per_task_success.len() as f64
                })
            })
            .collect()
    }
}

/// The dataset a classification run trains on: IDX files when the profile
/// names them, otherwise synthetic digits derived from the seed.
pub fn build_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<DigitDataset> {
    match (&cfg.data.images, &cfg.data.labels) {
        (Some(images), Some(labels)) => {
            let examples = idx::load_idx(images, labels)?;
            Ok(DigitDataset::from_examples(
                examples,
                crate::envs::digits::TRAIN_FRACTION,
            ))
        }
        _ => Ok(DigitDataset::synthetic(&mut seeding::stream(seed, "digits"))),
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let agent_cfg = cfg.agent_config(seed)?;
    match cfg.domain {
        Domain::Gridworld => {
            let envs = cfg.grid_envs()?;
            let out = train_lifelong(&envs, &cfg.tasks.steps, &agent_cfg)?;
            Ok(SeedOutcome {
                records: out.records,
                td_trace: out.td_trace,
                net: out.net,
                fifo: out.fifo,
                episodic: out.episodic,
            })
        }
        Domain::Classification => {
            let dataset = build_dataset(cfg, seed)?;
            let out = train_classification(&dataset, &cfg.tasks.steps, &agent_cfg)?;
            Ok(SeedOutcome {
                records: out.records,
                td_trace: out.td_trace,
                net: out.net,
                fifo: out.fifo,
                episodic: out.episodic,
            })
        }
    }
}

/// Runs the whole profile: manifest first, then one training run per seed
/// with its four artifacts, then the cross-seed aggregate and the final
/// buffer composition table. The aggregate is computed from the per-seed
/// files as written, so recomputation from disk reproduces it exactly.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let dir = cfg.resolved_output_dir();
    fs::create_dir_all(&dir)?;
    let manifest = RunManifest::new(cfg.clone(), &dir);
    write_manifest(&manifest, &dir.join(MANIFEST_FILE))?;

    let mut seed_reports = Vec::new();
    let mut compositions = Vec::new();
    for &seed in &cfg.seeds {
        let start = Instant::now();
        let outcome = run_seed(cfg, seed)?;
        write_metrics_csv(&outcome.records, &dir.join(metrics_file(seed)))?;
        write_td_trace_csv(&outcome.td_trace, &dir.join(td_trace_file(seed)))?;
        let snapshot = match &outcome.episodic {
            Some(store) => BufferSnapshot::of_store(store),
            None => BufferSnapshot::of_fifo(&outcome.fifo),
        };
        write_snapshot(&snapshot, &dir.join(buffer_file(seed)))?;
        save_net(&outcome.net, &dir.join(net_file(seed)))?;
        let episodic_composition = outcome
            .episodic
            .as_ref()
            .map(|s| s.composition_report())
            .unwrap_or_default();
        let fifo_composition = outcome.fifo.composition_report();
        eprintln!(
            "seed {seed}: {} evaluations in {:.1}s",
            outcome.records.len(),
            start.elapsed().as_secs_f64()
        );
        compositions.push((seed, episodic_composition.clone(), fifo_composition.clone()));
        seed_reports.push(SeedReport {
            seed,
            retention: forgetting_score(&outcome.records),
            records: outcome.records,
            episodic_composition,
            fifo_composition,
        });
    }

    let per_seed: Vec<Vec<EvalRecord>> = cfg
        .seeds
        .iter()
        .map(|&s| read_metrics_csv(&dir.join(metrics_file(s))))
        .collect::<Result<_>>()?;
    let rows = aggregate_records(&per_seed)?;
    write_aggregate_csv(&rows, &dir.join(AGGREGATE_FILE))?;
    let comp = composition_rows(cfg.domain_task_count(), &compositions);
    write_composition_csv(&comp, &dir.join(COMPOSITION_FILE))?;

    Ok(RunReport {
        dir,
        manifest,
        seeds: seed_reports,
    })
}
