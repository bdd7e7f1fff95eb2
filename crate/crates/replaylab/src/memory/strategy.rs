//! Selection strategies: how an incoming experience earns its rank.
//!
//! Higher rank means more worth keeping. Every rank is computed from a
//! [`RankView`], which deliberately omits `task_id`: retention can never
//! depend on which task produced an experience.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::core::{distance, experience_feature, Metric, RankView};
use crate::error::{Error, Result};
use crate::nn::{example_ce, QNetwork};

/// Magnitude of the uniform jitter added to reward ranks to break ties.
pub const REWARD_TIE_BREAK: f64 = 1e-6;

/// Which quantity ranks an experience.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Prediction error of the value head.
    Surprise,
    /// Absolute discounted return.
    Reward,
    /// An i.i.d. standard-normal draw; keeps a uniform sample of the stream
    /// and thereby matches the training distribution.
    Reservoir,
    /// Negative neighbor count within distance `d`; keeps the state space
    /// covered instead of matching its density.
    Coverage,
}

/// How surprise is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurpriseSignal {
    /// |ret - Q(s, a)|, frozen at insertion time.
    ReturnError,
    /// One-step TD error |r + gamma * max_a' Q(s', a') - Q(s, a)|
    /// (no bootstrap term on terminal steps).
    OneStepTd { gamma: f64 },
    /// Cross-entropy of the example under the current classifier.
    ClassificationLoss,
}

/// Feature vector used by the coverage distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMode {
    /// `[state | one-hot(action) | next_state | reward]`.
    Transition { num_actions: usize },
    /// (agent_row, agent_col, goal_row, goal_col) extracted from a
    /// three-plane grid observation of the given height and width.
    AgentGoal { height: usize, width: usize },
    /// The raw state vector.
    StateOnly,
}

/// Full configuration of a selection strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    pub metric: Metric,
    pub feature: FeatureMode,
    /// Coverage neighborhood radius; `None` auto-calibrates from the first
    /// 200 collected experiences.
    pub coverage_distance: Option<f64>,
    pub surprise: SurpriseSignal,
    pub seed: u64,
}

impl SelectionStrategy {
    pub fn surprise(signal: SurpriseSignal, seed: u64) -> Self {
        SelectionStrategy {
            kind: StrategyKind::Surprise,
            metric: Metric::L2,
            feature: FeatureMode::StateOnly,
            coverage_distance: None,
            surprise: signal,
            seed,
        }
    }

    pub fn reward(seed: u64) -> Self {
        SelectionStrategy {
            kind: StrategyKind::Reward,
            ..Self::surprise(SurpriseSignal::ReturnError, seed)
        }
    }

    pub fn reservoir(seed: u64) -> Self {
        SelectionStrategy {
            kind: StrategyKind::Reservoir,
            ..Self::surprise(SurpriseSignal::ReturnError, seed)
        }
    }

    pub fn coverage(
        metric: Metric,
        feature: FeatureMode,
        coverage_distance: Option<f64>,
        seed: u64,
    ) -> Self {
        SelectionStrategy {
            kind: StrategyKind::Coverage,
            metric,
            feature,
            coverage_distance,
            surprise: SurpriseSignal::ReturnError,
            seed,
        }
    }
}

/// Surprise rank of an experience under the given signal.
pub fn rank_surprise(e: &RankView<'_>, net: &QNetwork, signal: SurpriseSignal) -> Result<f64> {
    match signal {
        SurpriseSignal::ReturnError => {
            let q = net.forward(e.state)?;
            if e.action >= q.len() {
                return Err(Error::BadAction {
                    action: e.action,
                    actions: q.len(),
                });
            }
            Ok((e.ret - q[e.action]).abs())
        }
        SurpriseSignal::OneStepTd { gamma } => {
            let q = net.forward(e.state)?;
            if e.action >= q.len() {
                return Err(Error::BadAction {
                    action: e.action,
                    actions: q.len(),
                });
            }
            let bootstrap = if e.terminal {
                0.0
            } else {
                let qn = net.forward(e.next_state)?;
                gamma * qn.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            Ok((e.reward + bootstrap - q[e.action]).abs())
        }
        SurpriseSignal::ClassificationLoss => example_ce(net, e.state, e.action),
    }
}

/// Reward rank: |discounted return| plus a tiny uniform jitter so equal
/// returns do not tie.
pub fn rank_reward<R: Rng>(e: &RankView<'_>, rng: &mut R) -> f64 {
    e.ret.abs() + rng.random_range(0.0..REWARD_TIE_BREAK)
}

/// Reservoir rank: a standard-normal draw, independent of the experience.
pub fn rank_reservoir<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Feature vector of an experience under `mode`.
pub fn feature_of(mode: FeatureMode, e: &RankView<'_>) -> Result<Vec<f64>> {
    match mode {
        FeatureMode::Transition { num_actions } => experience_feature(e, num_actions),
        FeatureMode::StateOnly => Ok(e.state.to_vec()),
        FeatureMode::AgentGoal { height, width } => {
            let plane = height * width;
            if e.state.len() != 3 * plane {
                return Err(Error::ShapeMismatch {
                    expected: 3 * plane,
                    got: e.state.len(),
                });
            }
            let argmax = |p: &[f64]| {
                let mut best = 0;
                for (i, v) in p.iter().enumerate() {
                    if *v > p[best] {
                        best = i;
                    }
                }
                ((best / width) as f64, (best % width) as f64)
            };
            let (ar, ac) = argmax(&e.state[plane..2 * plane]);
            let (gr, gc) = argmax(&e.state[2 * plane..]);
            Ok(vec![ar, ac, gr, gc])
        }
    }
}

/// Distance between two cached feature vectors under the strategy metric.
pub fn feature_distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    distance(metric, a, b)
}
