//! Task environments: the four-room grid world, IDX image files, and the
//! synthetic digit tasks.

pub mod digits;
pub mod gridworld;
pub mod idx;

pub use digits::DigitDataset;
pub use gridworld::{grid_state_distance, GridWorld};

use rand::Rng;

use crate::error::Result;

/// An episodic task environment.
///
/// `reset` starts a new episode and returns the first observation; `step`
/// returns (observation, reward, terminal). A terminal step ends the episode,
/// as does exhausting `max_steps`; stepping a finished episode is an error.
pub trait Environment {
    fn task_id(&self) -> usize;
    fn action_count(&self) -> usize;
    fn observation_len(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn reset<R: Rng>(&mut self, rng: &mut R) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)>;
}
