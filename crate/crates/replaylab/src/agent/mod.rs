//! Q-learning agent: epsilon-greedy control, episode execution, dual-buffer
//! insertion, gradient steps, and periodic greedy evaluation.

mod classify;
mod lifelong;

pub use classify::{train_classification, ClassificationOutcome};
pub use lifelong::{train_lifelong, LifelongOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::core::Trajectory;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::memory::{sample_batch, BatchSpec, FifoBuffer, RankedStore, SelectionStrategy};
use crate::nn::{td_loss_report, LayerSpec, OptimizerConfig, QNetwork, Workspace};
use crate::seeding;

/// Training-loss moving-average window, in gradient steps.
pub const LOSS_WINDOW: usize = 100;

fn default_anneal_frac() -> f64 {
    0.5
}

/// Everything the training drivers need to know.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Exploration probability once annealing, if any, has finished.
    pub epsilon: f64,
    /// Anneal start value; `None` keeps `epsilon` constant from step one.
    #[serde(default)]
    pub epsilon_start: Option<f64>,
    /// Fraction of each task's step budget the linear anneal spans.
    #[serde(default = "default_anneal_frac")]
    pub epsilon_anneal_frac: f64,
    /// Discount for within-episode returns.
    pub gamma: f64,
    /// Replay batch size and its per-buffer split.
    pub batch: BatchSpec,
    /// Short-term buffer capacity; `usize::MAX` never evicts.
    pub fifo_capacity: usize,
    /// Long-term store capacity; 0 disables it entirely.
    pub episodic_capacity: usize,
    /// Retention rule for the long-term store.
    pub strategy: SelectionStrategy,
    /// Environment steps per gradient step.
    pub train_every: usize,
    /// Environment steps between evaluations.
    pub eval_every: usize,
    /// Greedy episodes per task per evaluation.
    pub eval_episodes: usize,
    pub optimizer: OptimizerConfig,
    /// Network input as (height, width, channels).
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    /// Negative-slope coefficient of the hidden activations.
    pub leak: f64,
    /// Master seed; every stream in a run derives from it.
    pub seed: u64,
}

impl AgentConfig {
    /// Grid-world defaults: dual 100/900 buffers, batch 30+30, RMSProp.
    pub fn grid_default(seed: u64) -> Self {
        AgentConfig {
            epsilon: 0.05,
            epsilon_start: Some(1.0),
            epsilon_anneal_frac: 0.5,
            gamma: 0.95,
            batch: BatchSpec::dual_default(),
            fifo_capacity: 100,
            episodic_capacity: 900,
            strategy: SelectionStrategy::reservoir(seed),
            train_every: 1,
            eval_every: 250,
            eval_episodes: 100,
            optimizer: OptimizerConfig::default(),
            input_shape: (crate::envs::gridworld::GRID_SIZE, crate::envs::gridworld::GRID_SIZE, 3),
            layers: crate::nn::grid_q_layers(crate::envs::gridworld::ACTIONS),
            leak: crate::nn::DEFAULT_LEAK,
            seed,
        }
    }

    /// Digit-stream defaults: same buffers, ten-way image classifier,
    /// plain gradient descent. Supervised streams never explore, so no anneal.
    pub fn classification_default(seed: u64) -> Self {
        AgentConfig {
            input_shape: (crate::envs::digits::IMAGE_SIZE, crate::envs::digits::IMAGE_SIZE, 1),
            layers: crate::nn::image_class_layers(crate::envs::digits::NUM_CLASSES),
            epsilon_start: None,
            optimizer: OptimizerConfig::Sgd { lr: 0.05 },
            ..Self::grid_default(seed)
        }
    }

    /// Exploration rate after `used` of `budget` steps on the current task.
    /// Linear from `epsilon_start` down (or up) to `epsilon` over
    /// `epsilon_anneal_frac` of the budget, restarting with every task.
    pub fn epsilon_at(&self, used: usize, budget: usize) -> f64 {
        let Some(start) = self.epsilon_start else {
            return self.epsilon;
        };
        let span = (budget as f64 * self.epsilon_anneal_frac).max(1.0);
        let progress = (used as f64 / span).min(1.0);
        start + (self.epsilon - start) * progress
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "agent.epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if let Some(start) = self.epsilon_start {
            if !(0.0..=1.0).contains(&start) {
                return Err(Error::InvalidConfig(format!(
                    "agent.epsilon_start must lie in [0, 1], got {start}"
                )));
            }
        }
        if !(self.epsilon_anneal_frac > 0.0 && self.epsilon_anneal_frac <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "agent.epsilon_anneal_frac must lie in (0, 1], got {}",
                self.epsilon_anneal_frac
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "agent.gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.fifo_capacity == 0 {
            return Err(Error::InvalidConfig(
                "buffers.fifo_capacity must be at least 1".into(),
            ));
        }
        if self.train_every == 0 {
            return Err(Error::InvalidConfig("agent.train_every must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("agent.eval_every must be at least 1".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::InvalidConfig(
                "agent.eval_episodes must be at least 1".into(),
            ));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("nn.layers must not be empty".into()));
        }
        Ok(())
    }

    /// Builds the network this config describes.
    pub fn build_net(&self) -> Result<QNetwork> {
        QNetwork::new(self.input_shape, self.layers.clone(), self.leak, self.seed)
    }

    /// Builds the FIFO and, unless disabled, the episodic store.
    pub fn build_buffers(&self) -> Result<(FifoBuffer, Option<RankedStore>)> {
        let fifo = if self.fifo_capacity == usize::MAX {
            FifoBuffer::unbounded()
        } else {
            FifoBuffer::new(self.fifo_capacity)?
        };
        let episodic = if self.episodic_capacity == 0 {
            None
        } else {
            Some(RankedStore::new(self.episodic_capacity, self.strategy.clone())?)
        };
        Ok((fifo, episodic))
    }
}

/// One evaluation snapshot. For classification runs, `per_task_success` holds
/// held-out accuracy and `per_task_mean_return` the held-out mean
/// cross-entropy; `max_td_error_seen` is the running maximum per-example
/// error observed in training so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub global_step: u64,
    pub training_task: usize,
    pub per_task_success: Vec<f64>,
    pub per_task_mean_return: Vec<f64>,
    pub max_td_error_seen: f64,
    pub loss_ma: f64,
}

/// One row of the per-example-error trace, aligned with the eval cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdPoint {
    pub global_step: u64,
    /// Largest per-example error since the previous point.
    pub interval_max: f64,
    /// Largest per-example error since the start of the run.
    pub running_max: f64,
}

/// Tracks interval and running maxima of per-example training errors.
#[derive(Debug, Clone, Default)]
pub struct TdTracker {
    interval_max: f64,
    running_max: f64,
}

impl TdTracker {
    pub fn observe(&mut self, err: f64) {
        self.interval_max = self.interval_max.max(err);
        self.running_max = self.running_max.max(err);
    }

    pub fn running_max(&self) -> f64 {
        self.running_max
    }

    /// Emits a trace point and starts a new interval.
    pub fn take_point(&mut self, global_step: u64) -> TdPoint {
        let p = TdPoint {
            global_step,
            interval_max: self.interval_max,
            running_max: self.running_max,
        };
        self.interval_max = 0.0;
        p
    }
}

/// Moving average over the most recent training losses.
#[derive(Debug, Clone)]
pub struct LossWindow {
    window: VecDeque<f64>,
    cap: usize,
}

impl Default for LossWindow {
    fn default() -> Self {
        LossWindow {
            window: VecDeque::new(),
            cap: LOSS_WINDOW,
        }
    }
}

impl LossWindow {
    pub fn push(&mut self, loss: f64) {
        if self.window.len() == self.cap {
            self.window.pop_front();
        }
        self.window.push_back(loss);
    }

    /// Mean of the window; 0 before any loss arrives.
    pub fn mean(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().sum::<f64>() / self.window.len() as f64
    }
}

/// Epsilon-greedy action choice; greedy ties go to the lowest index.
pub fn select_action<R: Rng>(
    net: &QNetwork,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let mut ws = net.workspace();
    select_action_ws(net, &mut ws, state, epsilon, rng)
}

/// As `select_action`, reusing a caller-owned workspace.
pub fn select_action_ws<R: Rng>(
    net: &QNetwork,
    ws: &mut Workspace,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let actions = net.output_len();
    // The coin is drawn even at epsilon 0 so the stream's draw pattern does
    // not depend on the threshold.
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..actions));
    }
    net.forward_with(state, ws)?;
    let q = ws.output();
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Rolls out one episode and returns the trajectory with returns filled in.
/// The trajectory is not inserted into any buffer.
pub fn run_episode<E: Environment, R: Rng>(
    env: &mut E,
    net: &QNetwork,
    cfg: &AgentConfig,
    first_step_index: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut ws = net.workspace();
    let mut state = env.reset(rng);
    let mut steps = Vec::new();
    for _ in 0..env.max_steps() {
        let action = select_action_ws(net, &mut ws, &state, cfg.epsilon, rng)?;
        let (next, reward, terminal) = env.step(action)?;
        steps.push((state, action, reward, next.clone(), terminal));
        state = next;
        if terminal {
            break;
        }
    }
    Trajectory::from_steps(steps, cfg.gamma, env.task_id(), first_step_index)
}

/// Inserts a finished trajectory into the FIFO and offers every experience to
/// the episodic store. Surprise ranks are computed against `net` as it exists
/// now and never change afterward.
pub fn absorb_trajectory(
    traj: &Trajectory,
    fifo: &mut FifoBuffer,
    mut episodic: Option<&mut RankedStore>,
    net: Option<&QNetwork>,
) -> Result<()> {
    for e in &traj.experiences {
        fifo.insert(e.clone());
        if let Some(store) = episodic.as_deref_mut() {
            store.offer(e.clone(), net)?;
        }
    }
    Ok(())
}

/// Loss and the largest per-example error of one gradient step.
#[derive(Debug, Clone, Copy)]
pub struct TrainReport {
    pub loss: f64,
    pub max_error: f64,
}

/// One gradient step on a freshly sampled batch; `None` when both buffers
/// are still empty.
pub fn train_step<R: Rng>(
    net: &mut QNetwork,
    fifo: &FifoBuffer,
    episodic: Option<&mut RankedStore>,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Option<TrainReport>> {
    train_step_with(net, fifo, episodic, cfg, rng, td_loss_report)
}

/// Shared gradient-step plumbing; the loss function is the only moving part.
pub(crate) fn train_step_with<R, F>(
    net: &mut QNetwork,
    fifo: &FifoBuffer,
    episodic: Option<&mut RankedStore>,
    cfg: &AgentConfig,
    rng: &mut R,
    loss_fn: F,
) -> Result<Option<TrainReport>>
where
    R: Rng,
    F: Fn(&QNetwork, &[crate::core::Experience]) -> Result<crate::nn::LossReport>,
{
    let episodic_empty = episodic.as_ref().is_none_or(|s| s.is_empty());
    if fifo.is_empty() && episodic_empty {
        return Ok(None);
    }
    let batch = sample_batch(fifo, episodic, &cfg.batch, rng)?;
    let report = loss_fn(net, &batch)?;
    crate::nn::optimizer_step(net, &report.gradient, &cfg.optimizer)?;
    Ok(Some(TrainReport {
        loss: report.loss,
        max_error: report.max_abs_error,
    }))
}

/// Success rate and mean undiscounted episode reward per task.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub success: Vec<f64>,
    pub mean_return: Vec<f64>,
}

/// Runs greedy episodes on every task. Touches nothing but the passed
/// environments and rng; the network is read-only.
pub fn evaluate<E: Environment, R: Rng>(
    net: &QNetwork,
    envs: &mut [E],
    episodes_per_task: usize,
    rng: &mut R,
) -> Result<EvalSummary> {
    let mut ws = net.workspace();
    let mut success = Vec::with_capacity(envs.len());
    let mut mean_return = Vec::with_capacity(envs.len());
    for env in envs.iter_mut() {
        let mut wins = 0usize;
        let mut total = 0.0;
        for _ in 0..episodes_per_task {
            let mut state = env.reset(rng);
            let mut episode = 0.0;
            for _ in 0..env.max_steps() {
                let action = select_action_ws(net, &mut ws, &state, 0.0, rng)?;
                let (next, reward, terminal) = env.step(action)?;
                episode += reward;
                state = next;
                if terminal {
                    wins += 1;
                    break;
                }
            }
            total += episode;
        }
        success.push(wins as f64 / episodes_per_task as f64);
        mean_return.push(total / episodes_per_task as f64);
    }
    Ok(EvalSummary { success, mean_return })
}

/// The per-run RNG used for resets, exploration, and batch draws.
pub(crate) fn driver_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    seeding::stream(seed, "driver")
}

/// A fresh evaluation stream tied to the step it runs at, so evaluation
/// randomness never perturbs training randomness.
pub(crate) fn eval_rng(seed: u64, global_step: u64) -> rand_chacha::ChaCha8Rng {
    seeding::indexed_stream(seed, "eval", global_step)
}

#[cfg(test)]
pub(crate) mod test_env {
    use super::*;

    /// A corridor of `len` cells; action 1 moves right, 0 moves left. The
    /// goal is the right end. Observation is a one-hot position vector.
    #[derive(Debug, Clone)]
    pub struct Corridor {
        pub len: usize,
        pub start: usize,
        pub task_id: usize,
        pub max_steps: usize,
        pos: usize,
        done: bool,
    }

    impl Corridor {
        pub fn new(len: usize, start: usize, task_id: usize, max_steps: usize) -> Self {
            Corridor {
                len,
                start,
                task_id,
                max_steps,
                pos: start,
                done: true,
            }
        }
    }

    impl Environment for Corridor {
        fn task_id(&self) -> usize {
            self.task_id
        }

        fn action_count(&self) -> usize {
            2
        }

        fn observation_len(&self) -> usize {
            self.len
        }

        fn max_steps(&self) -> usize {
            self.max_steps
        }

        fn reset<R: Rng>(&mut self, _rng: &mut R) -> Vec<f64> {
            self.pos = self.start;
            self.done = false;
            let mut obs = vec![0.0; self.len];
            obs[self.pos] = 1.0;
            obs
        }

        fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
            if self.done {
                return Err(Error::EpisodeFinished);
            }
            match action {
                0 => self.pos = self.pos.saturating_sub(1),
                1 => self.pos = (self.pos + 1).min(self.len - 1),
                other => {
                    return Err(Error::BadAction {
                        action: other,
                        actions: 2,
                    })
                }
            }
            let terminal = self.pos == self.len - 1;
            if terminal {
                self.done = true;
            }
            let mut obs = vec![0.0; self.len];
            obs[self.pos] = 1.0;
            Ok((obs, if terminal { 1.0 } else { -0.01 }, terminal))
        }
    }

    /// A small dense config that trains fast on `Corridor` observations.
    pub fn corridor_config(len: usize, seed: u64) -> AgentConfig {
        AgentConfig {
            epsilon: 0.05,
            epsilon_start: None,
            epsilon_anneal_frac: 0.5,
            gamma: 0.95,
            batch: BatchSpec::new(8, 4, 4).unwrap(),
            fifo_capacity: 64,
            episodic_capacity: 64,
            strategy: SelectionStrategy::reservoir(seed),
            train_every: 1,
            eval_every: 1_000_000,
            eval_episodes: 4,
            optimizer: OptimizerConfig::default(),
            input_shape: (1, len, 1),
            layers: vec![LayerSpec::Dense { width: 16 }, LayerSpec::Output { width: 2 }],
            leak: crate::nn::DEFAULT_LEAK,
            seed,
        }
    }
}
