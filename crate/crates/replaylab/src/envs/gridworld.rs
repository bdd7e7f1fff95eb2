//! Four-room grid world.
//!
//! An 11x11 grid split into four rooms by walls along row 5 and column 5,
//! connected through four doorways. The agent always starts in the top-left
//! corner; each task places the goal uniformly at random inside one
//! designated room. Task 2's room sits diagonally opposite the start, so its
//! paths pass through the rooms of tasks 0 and 1.

use rand::Rng;

use crate::envs::Environment;
use crate::error::{Error, Result};

/// Grid side length.
pub const GRID_SIZE: usize = 11;
/// Row and column carrying the internal walls.
pub const WALL_LINE: usize = 5;
/// Open cells in the wall lines.
pub const DOORWAYS: [(usize, usize); 4] = [(5, 2), (5, 8), (2, 5), (8, 5)];
/// Fixed start cell: the top-left corner.
pub const START: (usize, usize) = (0, 0);
/// Number of goal rooms, one per task.
pub const NUM_TASKS: usize = 3;
/// up, down, left, right.
pub const ACTIONS: usize = 4;

/// Whether a cell is blocked by an internal wall.
pub fn is_wall(row: usize, col: usize) -> bool {
    (row == WALL_LINE || col == WALL_LINE) && !DOORWAYS.contains(&(row, col))
}

/// Row and column ranges of the room assigned to a task: task 0 top-right,
/// task 1 bottom-left, task 2 bottom-right.
pub fn room_bounds(task_id: usize) -> Result<((usize, usize), (usize, usize))> {
    match task_id {
        0 => Ok(((0, WALL_LINE), (WALL_LINE + 1, GRID_SIZE))),
        1 => Ok(((WALL_LINE + 1, GRID_SIZE), (0, WALL_LINE))),
        2 => Ok(((WALL_LINE + 1, GRID_SIZE), (WALL_LINE + 1, GRID_SIZE))),
        other => Err(Error::UnknownTask(other)),
    }
}

/// Flat three-plane observation: walls, agent, goal, each row-major.
pub const OBSERVATION_LEN: usize = 3 * GRID_SIZE * GRID_SIZE;

/// The grid world for one task.
#[derive(Debug, Clone)]
pub struct GridWorld {
    task_id: usize,
    goal_reward: f64,
    step_cost: f64,
    max_steps: usize,
    agent: (usize, usize),
    goal: (usize, usize),
    steps_taken: usize,
    done: bool,
}

impl GridWorld {
    /// A world with the standard rewards: +1 at the goal, -0.01 per step,
    /// and a 100-step episode limit.
    pub fn new(task_id: usize) -> Result<Self> {
        Self::with_rewards(task_id, 1.0, -0.01, 100)
    }

    pub fn with_rewards(
        task_id: usize,
        goal_reward: f64,
        step_cost: f64,
        max_steps: usize,
    ) -> Result<Self> {
        room_bounds(task_id)?;
        Ok(GridWorld {
            task_id,
            goal_reward,
            step_cost,
            max_steps,
            agent: START,
            goal: START,
            steps_taken: 0,
            done: true,
        })
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    fn observe(&self) -> Vec<f64> {
        let plane = GRID_SIZE * GRID_SIZE;
        let mut obs = vec![0.0; OBSERVATION_LEN];
        for r in 0..GRID_SIZE {
            for c in 0..GRID_SIZE {
                if is_wall(r, c) {
                    obs[r * GRID_SIZE + c] = 1.0;
                }
            }
        }
        obs[plane + self.agent.0 * GRID_SIZE + self.agent.1] = 1.0;
        obs[2 * plane + self.goal.0 * GRID_SIZE + self.goal.1] = 1.0;
        obs
    }
}

impl Environment for GridWorld {
    fn task_id(&self) -> usize {
        self.task_id
    }

    fn action_count(&self) -> usize {
        ACTIONS
    }

    fn observation_len(&self) -> usize {
        OBSERVATION_LEN
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Starts a new episode: agent at the top-left, goal drawn uniformly from
    /// the task's room (doorways are on wall lines and never inside a room).
    fn reset<R: Rng>(&mut self, rng: &mut R) -> Vec<f64> {
        let ((r0, r1), (c0, c1)) = room_bounds(self.task_id).expect("validated task");
        let rows = r1 - r0;
        let cols = c1 - c0;
        let pick = rng.random_range(0..rows * cols);
        self.goal = (r0 + pick / cols, c0 + pick % cols);
        self.agent = START;
        self.steps_taken = 0;
        self.done = false;
        self.observe()
    }

    /// Moves the agent; walls and the boundary block movement. Returns
    /// (observation, reward, terminal); terminal is true only on reaching the
    /// goal, while a timeout merely ends the episode.
    fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        if action >= ACTIONS {
            return Err(Error::BadAction {
                action,
                actions: ACTIONS,
            });
        }
        let (r, c) = self.agent;
        let target = match action {
            0 => (r.wrapping_sub(1), c),
            1 => (r + 1, c),
            2 => (r, c.wrapping_sub(1)),
            _ => (r, c + 1),
        };
        if target.0 < GRID_SIZE && target.1 < GRID_SIZE && !is_wall(target.0, target.1) {
            self.agent = target;
        }
        self.steps_taken += 1;
        let terminal = self.agent == self.goal;
        let reward = if terminal { self.goal_reward } else { self.step_cost };
        if terminal || self.steps_taken >= self.max_steps {
            self.done = true;
        }
        Ok((self.observe(), reward, terminal))
    }
}

/// Agent and goal coordinates encoded in a grid observation.
pub fn coords_from_observation(obs: &[f64]) -> Result<((usize, usize), (usize, usize))> {
    let plane = GRID_SIZE * GRID_SIZE;
    if obs.len() != OBSERVATION_LEN {
        return Err(Error::ShapeMismatch {
            expected: OBSERVATION_LEN,
            got: obs.len(),
        });
    }
    let argmax = |p: &[f64]| {
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        (best / GRID_SIZE, best % GRID_SIZE)
    };
    Ok((
        argmax(&obs[plane..2 * plane]),
        argmax(&obs[2 * plane..]),
    ))
}

/// Task-tailored state distance: L1 between the agent positions plus L1
/// between the goal positions.
pub fn grid_state_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let (aa, ag) = coords_from_observation(a)?;
    let (ba, bg) = coords_from_observation(b)?;
    let l1 = |p: (usize, usize), q: (usize, usize)| {
        (p.0 as f64 - q.0 as f64).abs() + (p.1 as f64 - q.1 as f64).abs()
    };
    Ok(l1(aa, ba) + l1(ag, bg))
}
