//! Experiment harness: profiles, orchestration, metrics files, curve
//! rendering, and the diagnostics behind the command-line interface.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod run;

pub use config::{Domain, ExperimentConfig, StrategyName, OUT_ENV_VAR};
pub use metrics::{aggregate_records, forgetting_score, read_metrics_csv, write_metrics_csv};
pub use plot::{plot_curves, render_curves, PlotInput, PlotOptions};
pub use run::{run_experiment, read_manifest, RunManifest, RunReport, SeedReport};

use rand::Rng;

use crate::agent::AgentConfig;
use crate::core::Experience;
use crate::error::Result;
use crate::nn::gradient_check;
use crate::seeding;

/// Relative-error bound the gradient diagnostic must beat.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

/// Central-difference probe step for the gradient diagnostic.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Worst analytic-vs-numeric gradient error for the grid-world value
/// network on a random batch. The batch mixes all four actions so every
/// output head contributes.
pub fn grad_check_max_error(seed: u64) -> Result<f64> {
    let cfg = AgentConfig::grid_default(seed);
    let mut net = cfg.build_net()?;
    let mut rng = seeding::stream(seed, "grad-check");
    let actions = net.output_len();
    let batch: Vec<Experience> = (0..8)
        .map(|i| Experience {
            state: (0..net.input_len())
                .map(|_| rng.random_range(0.0..1.0))
                .collect(),
            action: i % actions,
            reward: 0.0,
            next_state: Vec::new(),
            terminal: true,
            ret: rng.random_range(-1.0..1.0),
            task_id: 0,
            step_index: i as u64,
        })
        .collect();
    gradient_check(&mut net, &batch, GRAD_CHECK_STEP)
}
