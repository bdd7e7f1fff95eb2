//! Experiment profiles: a flat structured-text config with dotted keys
//! (`agent.epsilon = 0.05`) that resolves into concrete per-seed training
//! settings. Unset keys fall back to the domain defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::core::Metric;
use crate::envs::{digits, gridworld, GridWorld};
use crate::error::{Error, Result};
use crate::memory::{BatchSpec, FeatureMode, SelectionStrategy, SurpriseSignal};
use crate::nn::OptimizerConfig;

/// Environment variable that overrides the output directory of every run.
pub const OUT_ENV_VAR: &str = "REPLAYLAB_OUT";

/// Which experiment family a profile drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Gridworld,
    Classification,
}

/// Named buffer regime. The first three reshape the buffers themselves; the
/// remaining four pick the episodic store's retention rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    /// One FIFO holding the whole experience allotment; no episodic store.
    FifoOnly,
    /// One FIFO that never evicts.
    Unlimited,
    Surprise,
    Reward,
    /// Reservoir retention; keeps the store distribution-matched to the
    /// stream.
    Matching,
    Coverage,
    /// Reservoir retention with the FIFO excluded from replay batches.
    SelectiveOnly,
}

impl StrategyName {
    /// Strategies that rank an episodic store (as opposed to reshaping the
    /// FIFO).
    pub fn uses_episodic(self) -> bool {
        !matches!(self, StrategyName::FifoOnly | StrategyName::Unlimited)
    }
}

/// Task ids in training order and the step budget for each.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub order: Vec<usize>,
    /// Environment steps (grid world) or stream examples (classification).
    pub steps: Vec<usize>,
}

fn default_fifo_capacity() -> usize {
    100
}

fn default_episodic_capacity() -> usize {
    900
}

/// Buffer capacities before any strategy-specific reshaping.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSection {
    #[serde(default = "default_fifo_capacity")]
    pub fifo_capacity: usize,
    #[serde(default = "default_episodic_capacity")]
    pub episodic_capacity: usize,
}

impl Default for BufferSection {
    fn default() -> Self {
        BufferSection {
            fifo_capacity: default_fifo_capacity(),
            episodic_capacity: default_episodic_capacity(),
        }
    }
}

fn default_batch_total() -> usize {
    60
}

fn default_batch_half() -> usize {
    30
}

/// Replay batch size and its per-buffer split. Single-buffer strategies
/// ignore the split and draw the whole batch from their one buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    #[serde(default = "default_batch_total")]
    pub total: usize,
    #[serde(default = "default_batch_half")]
    pub from_fifo: usize,
    #[serde(default = "default_batch_half")]
    pub from_episodic: usize,
}

impl Default for BatchSection {
    fn default() -> Self {
        BatchSection {
            total: default_batch_total(),
            from_fifo: default_batch_half(),
            from_episodic: default_batch_half(),
        }
    }
}

/// Agent overrides; every unset key keeps the domain default. Setting
/// `epsilon_start` equal to `epsilon` disables the anneal.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub epsilon: Option<f64>,
    pub epsilon_start: Option<f64>,
    pub epsilon_anneal_frac: Option<f64>,
    pub gamma: Option<f64>,
    pub train_every: Option<usize>,
    pub eval_every: Option<usize>,
    pub eval_episodes: Option<usize>,
    /// Negative-slope coefficient of the hidden activations.
    pub leak: Option<f64>,
}

/// Optimizer family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Rmsprop,
    Sgd,
}

/// Optimizer overrides layered onto the domain default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    /// Squared-gradient decay; rmsprop only.
    pub rho: Option<f64>,
    /// Denominator damping; rmsprop only.
    pub epsilon: Option<f64>,
}

impl OptimizerSection {
    /// Resolves against `base`, switching family first and then overriding
    /// the named constants.
    fn resolve(&self, base: OptimizerConfig) -> OptimizerConfig {
        let (base_lr, base_rho, base_eps) = match base {
            OptimizerConfig::RmsProp { lr, rho, eps } => (lr, rho, eps),
            OptimizerConfig::Sgd { lr } => (lr, 0.95, 1e-6),
        };
        let kind = self.kind.unwrap_or(match base {
            OptimizerConfig::RmsProp { .. } => OptimizerKind::Rmsprop,
            OptimizerConfig::Sgd { .. } => OptimizerKind::Sgd,
        });
        let lr = self.learning_rate.unwrap_or(base_lr);
        match kind {
            OptimizerKind::Rmsprop => OptimizerConfig::RmsProp {
                lr,
                rho: self.rho.unwrap_or(base_rho),
                eps: self.epsilon.unwrap_or(base_eps),
            },
            OptimizerKind::Sgd => OptimizerConfig::Sgd { lr },
        }
    }
}

fn default_goal_reward() -> f64 {
    1.0
}

fn default_step_cost() -> f64 {
    -0.01
}

fn default_max_episode_steps() -> usize {
    100
}

/// Grid-world shaping; ignored by the classification domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "default_step_cost")]
    pub step_cost: f64,
    #[serde(default = "default_max_episode_steps")]
    pub max_episode_steps: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            goal_reward: default_goal_reward(),
            step_cost: default_step_cost(),
            max_episode_steps: default_max_episode_steps(),
        }
    }
}

/// Coverage-strategy knobs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    /// Neighborhood radius; unset auto-calibrates from the stream.
    pub distance: Option<f64>,
}

/// Surprise-strategy knobs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurpriseSection {
    /// Unset picks return-error on grid world and classification-loss on
    /// the digit stream.
    pub signal: Option<SurpriseSignal>,
}

/// External dataset for the classification domain; both paths unset means
/// the built-in synthetic digits.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// IDX image file.
    pub images: Option<PathBuf>,
    /// IDX label file.
    pub labels: Option<PathBuf>,
}

/// One experiment profile: a domain, a buffer regime, a task schedule, and
/// the seeds to repeat it over.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub strategy: StrategyName,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub tasks: TaskSection,
    #[serde(default)]
    pub buffers: BufferSection,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub coverage: CoverageSection,
    #[serde(default)]
    pub surprise: SurpriseSection,
    #[serde(default)]
    pub data: DataSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Number of tasks the chosen domain defines.
    pub fn domain_task_count(&self) -> usize {
        match self.domain {
            Domain::Gridworld => gridworld::NUM_TASKS,
            Domain::Classification => digits::NUM_TASKS,
        }
    }

    /// Checks every field and names the offending key in the error.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        if self.tasks.order.is_empty() {
            return Err(Error::InvalidConfig("tasks.order must not be empty".into()));
        }
        if self.tasks.order.len() != self.tasks.steps.len() {
            return Err(Error::InvalidConfig(format!(
                "tasks.order and tasks.steps must have equal lengths, got {} vs {}",
                self.tasks.order.len(),
                self.tasks.steps.len()
            )));
        }
        let limit = self.domain_task_count();
        for (i, &t) in self.tasks.order.iter().enumerate() {
            if t >= limit {
                return Err(Error::InvalidConfig(format!(
                    "tasks.order[{i}] is {t}; the domain defines tasks 0..{limit}"
                )));
            }
        }
        // The digit stream trains its class pairs in place, so only a prefix
        // of the natural order is expressible there.
        if self.domain == Domain::Classification {
            let identity: Vec<usize> = (0..self.tasks.order.len()).collect();
            if self.tasks.order != identity {
                return Err(Error::InvalidConfig(
                    "tasks.order for domain classification must be 0..n in ascending order"
                        .into(),
                ));
            }
        }
        if let Some(i) = self.tasks.steps.iter().position(|&s| s == 0) {
            return Err(Error::InvalidConfig(format!(
                "tasks.steps[{i}] must be at least 1"
            )));
        }
        if self.batch.total == 0 {
            return Err(Error::InvalidConfig("batch.total must be at least 1".into()));
        }
        if self.strategy.uses_episodic()
            && self.batch.from_fifo + self.batch.from_episodic != self.batch.total
        {
            return Err(Error::InvalidConfig(format!(
                "batch.from_fifo + batch.from_episodic must equal batch.total, got {} + {} vs {}",
                self.batch.from_fifo, self.batch.from_episodic, self.batch.total
            )));
        }
        if self.buffers.fifo_capacity == 0 {
            return Err(Error::InvalidConfig(
                "buffers.fifo_capacity must be at least 1".into(),
            ));
        }
        if self.strategy.uses_episodic() && self.buffers.episodic_capacity == 0 {
            return Err(Error::InvalidConfig(format!(
                "buffers.episodic_capacity must be at least 1 for strategy {}",
                toml_name(&self.strategy)
            )));
        }
        if let Some(d) = self.coverage.distance {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "coverage.distance must be positive and finite, got {d}"
                )));
            }
        }
        if !self.env.goal_reward.is_finite() || !self.env.step_cost.is_finite() {
            return Err(Error::InvalidConfig(
                "env.goal_reward and env.step_cost must be finite".into(),
            ));
        }
        if self.env.max_episode_steps == 0 {
            return Err(Error::InvalidConfig(
                "env.max_episode_steps must be at least 1".into(),
            ));
        }
        if self.data.images.is_some() != self.data.labels.is_some() {
            return Err(Error::InvalidConfig(
                "data.images and data.labels must be provided together".into(),
            ));
        }
        // Agent-level keys are validated on the resolved config so their
        // errors carry the same field names a direct caller would see.
        self.agent_config(self.seeds[0])?;
        Ok(())
    }

    /// Output directory after the `REPLAYLAB_OUT` override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir_with(std::env::var_os(OUT_ENV_VAR))
    }

    /// Resolution against an explicit override value; empty counts as unset.
    fn output_dir_with(&self, env: Option<std::ffi::OsString>) -> PathBuf {
        match env {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    /// The concrete training settings this profile means for one seed.
    pub fn agent_config(&self, seed: u64) -> Result<AgentConfig> {
        let mut cfg = match self.domain {
            Domain::Gridworld => AgentConfig::grid_default(seed),
            Domain::Classification => AgentConfig::classification_default(seed),
        };
        let a = &self.agent;
        if let Some(v) = a.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = a.epsilon_start {
            cfg.epsilon_start = Some(v);
        }
        if let Some(v) = a.epsilon_anneal_frac {
            cfg.epsilon_anneal_frac = v;
        }
        if let Some(v) = a.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = a.train_every {
            cfg.train_every = v;
        }
        if let Some(v) = a.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = a.eval_episodes {
            cfg.eval_episodes = v;
        }
        if let Some(v) = a.leak {
            cfg.leak = v;
        }
        cfg.optimizer = self.optimizer.resolve(cfg.optimizer);

        let total = self.batch.total;
        match self.strategy {
            StrategyName::FifoOnly => {
                cfg.fifo_capacity = self
                    .buffers
                    .fifo_capacity
                    .saturating_add(self.buffers.episodic_capacity);
                cfg.episodic_capacity = 0;
                cfg.batch = BatchSpec::new(total, total, 0)?;
            }
            StrategyName::Unlimited => {
                cfg.fifo_capacity = usize::MAX;
                cfg.episodic_capacity = 0;
                cfg.batch = BatchSpec::new(total, total, 0)?;
            }
            StrategyName::SelectiveOnly => {
                cfg.fifo_capacity = self.buffers.fifo_capacity;
                cfg.episodic_capacity = self.buffers.episodic_capacity;
                cfg.strategy = SelectionStrategy::reservoir(seed);
                cfg.batch = BatchSpec::new(total, 0, total)?;
            }
            _ => {
                cfg.fifo_capacity = self.buffers.fifo_capacity;
                cfg.episodic_capacity = self.buffers.episodic_capacity;
                cfg.strategy = self.ranked_strategy(seed);
                cfg.batch =
                    BatchSpec::new(total, self.batch.from_fifo, self.batch.from_episodic)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Retention rule for the four episodic-ranking strategies.
    fn ranked_strategy(&self, seed: u64) -> SelectionStrategy {
        match self.strategy {
            StrategyName::Surprise => {
                let signal = self.surprise.signal.unwrap_or(match self.domain {
                    Domain::Gridworld => SurpriseSignal::ReturnError,
                    Domain::Classification => SurpriseSignal::ClassificationLoss,
                });
                SelectionStrategy::surprise(signal, seed)
            }
            StrategyName::Reward => SelectionStrategy::reward(seed),
            StrategyName::Matching => SelectionStrategy::reservoir(seed),
            StrategyName::Coverage => {
                let (metric, feature) = match self.domain {
                    Domain::Gridworld => (
                        Metric::L1,
                        FeatureMode::AgentGoal {
                            height: gridworld::GRID_SIZE,
                            width: gridworld::GRID_SIZE,
                        },
                    ),
                    Domain::Classification => (Metric::L2, FeatureMode::StateOnly),
                };
                SelectionStrategy::coverage(metric, feature, self.coverage.distance, seed)
            }
            _ => unreachable!("single-buffer strategies have no episodic rank"),
        }
    }

    /// Instantiates the grid-world task sequence this profile trains on.
    pub fn grid_envs(&self) -> Result<Vec<GridWorld>> {
        self.tasks
            .order
            .iter()
            .map(|&t| {
                GridWorld::with_rewards(
                    t,
                    self.env.goal_reward,
                    self.env.step_cost,
                    self.env.max_episode_steps,
                )
            })
            .collect()
    }
}

/// Kebab-case name of a strategy, as it appears in config files.
pub fn toml_name(strategy: &StrategyName) -> String {
    // serde emits the quoted kebab-case token; strip the quotes.
    serde_json::to_string(strategy)
        .expect("plain enum")
        .trim_matches('"')
        .to_string()
}
