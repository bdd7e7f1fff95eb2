//! Experience records, trajectories, discounted returns, and feature distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One environment transition plus the quantities replay strategies rank by.
///
/// `ret` is the discounted return observed from this step to the end of its
/// episode; it is computed once, when the trajectory finishes, and never
/// updated afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True only when the episode ended by reaching the goal; timeouts stay false.
    pub terminal: bool,
    /// Discounted return from this step onward.
    pub ret: f64,
    /// Which task produced this experience. Reporting only; selection never reads it.
    pub task_id: usize,
    /// Global environment-step counter at collection time.
    pub step_index: u64,
}

/// What a selection strategy is allowed to see: everything except `task_id`.
///
/// Strategies take this view instead of the full record so that task identity
/// cannot leak into retention decisions.
#[derive(Debug, Clone, Copy)]
pub struct RankView<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub next_state: &'a [f64],
    pub terminal: bool,
    pub ret: f64,
    pub step_index: u64,
}

impl Experience {
    pub fn rank_view(&self) -> RankView<'_> {
        RankView {
            state: &self.state,
            action: self.action,
            reward: self.reward,
            next_state: &self.next_state,
            terminal: self.terminal,
            ret: self.ret,
            step_index: self.step_index,
        }
    }
}

/// A completed episode with returns already filled in.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub experiences: Vec<Experience>,
    /// Undiscounted reward total for the episode.
    pub episode_reward: f64,
}

/// One raw step before returns exist: (state, action, reward, next_state, terminal).
pub type RawStep = (Vec<f64>, usize, f64, Vec<f64>, bool);

impl Trajectory {
    /// Builds a trajectory from raw steps, computing discounted returns.
    ///
    /// `first_step_index` is the global step counter at the first step. Only
    /// the final step may be terminal; a timeout leaves it non-terminal.
    pub fn from_steps(
        steps: Vec<RawStep>,
        gamma: f64,
        task_id: usize,
        first_step_index: u64,
    ) -> Result<Self> {
        let rewards: Vec<f64> = steps.iter().map(|s| s.2).collect();
        let rets = discounted_returns(&rewards, gamma)?;
        let last = steps.len() - 1;
        let mut experiences = Vec::with_capacity(steps.len());
        for (i, ((state, action, reward, next_state, terminal), ret)) in
            steps.into_iter().zip(rets).enumerate()
        {
            if terminal && i != last {
                return Err(Error::EpisodeFinished);
            }
            experiences.push(Experience {
                state,
                action,
                reward,
                next_state,
                terminal,
                ret,
                task_id,
                step_index: first_step_index + i as u64,
            });
        }
        let episode_reward = experiences.iter().map(|e| e.reward).sum();
        Ok(Trajectory {
            experiences,
            episode_reward,
        })
    }

    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }
}

/// Discounted return for every step of a reward sequence, by backward recursion:
/// the last return equals the last reward, and `ret[i] = r[i] + gamma * ret[i+1]`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidDiscount(gamma));
    }
    let mut rets = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        rets[i] = acc;
    }
    Ok(rets)
}

/// Distance functions over experience feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    L1,
    L2,
    /// One minus cosine similarity.
    Cosine,
    /// One minus x.y / (|x|^2 + |y|^2 - x.y).
    ExtendedJaccard,
}

/// Distance between two equal-length vectors under `metric`.
///
/// The similarity-derived metrics (`Cosine`, `ExtendedJaccard`) are undefined
/// when either input is all-zero.
pub fn distance(metric: Metric, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    match metric {
        Metric::L1 => Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()),
        Metric::L2 => Ok(x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()),
        Metric::Cosine => {
            let (dot, nx, ny) = dot_and_norms(x, y);
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::UndefinedSimilarity);
            }
            Ok(1.0 - dot / (nx.sqrt() * ny.sqrt()))
        }
        Metric::ExtendedJaccard => {
            let (dot, nx, ny) = dot_and_norms(x, y);
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::UndefinedSimilarity);
            }
            Ok(1.0 - dot / (nx + ny - dot))
        }
    }
}

fn dot_and_norms(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    (dot, nx, ny)
}

/// Flat feature vector for a transition: `[state | one-hot(action) | next_state | reward]`.
///
/// Length is `2 * |state| + num_actions + 1`, fixed per environment.
pub fn experience_feature(e: &RankView<'_>, num_actions: usize) -> Result<Vec<f64>> {
    if e.action >= num_actions {
        return Err(Error::BadAction {
            action: e.action,
            actions: num_actions,
        });
    }
    let mut f = Vec::with_capacity(2 * e.state.len() + num_actions + 1);
    f.extend_from_slice(e.state);
    for a in 0..num_actions {
        f.push(if a == e.action { 1.0 } else { 0.0 });
    }
    f.extend_from_slice(e.next_state);
    f.push(e.reward);
    Ok(f)
}

#[cfg(test)]
pub(crate) fn test_experience(task_id: usize, step_index: u64, ret: f64) -> Experience {
    Experience {
        state: vec![step_index as f64, 0.0],
        action: 0,
        reward: ret,
        next_state: vec![0.0, step_index as f64],
        terminal: true,
        ret,
        task_id,
        step_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: ret[i] as an explicit discounted forward sum.
    fn forward_sum_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
        (0..rewards.len())
            .map(|i| {
                rewards[i..]
                    .iter()
                    .enumerate()
                    .map(|(k, r)| gamma.powi(k as i32) * r)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn single_reward_is_its_own_return() {
        assert_eq!(discounted_returns(&[1.0], 0.9).unwrap(), vec![1.0]);
    }

    #[test]
    fn undiscounted_returns_accumulate() {
        assert_eq!(
            discounted_returns(&[0.0, 0.0, 1.0], 1.0).unwrap(),
            vec![1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn goal_episode_returns_match_hand_computation() {
        // Backward: 1.0, then -0.01 + 0.9*1.0 = 0.89, then -0.01 + 0.9*0.89 = 0.791.
        let rets = discounted_returns(&[-0.01, -0.01, 1.0], 0.9).unwrap();
        let expected = [0.791, 0.89, 1.0];
        for (got, want) in rets.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn empty_rewards_rejected() {
        assert!(matches!(
            discounted_returns(&[], 0.9),
            Err(Error::EmptyTrajectory)
        ));
    }

    #[test]
    fn out_of_range_gamma_rejected() {
        for gamma in [0.0, -0.5, 1.1] {
            assert!(matches!(
                discounted_returns(&[1.0], gamma),
                Err(Error::InvalidDiscount(_))
            ));
        }
    }

    #[test]
    fn l1_matches_hand_computation() {
        assert_eq!(distance(Metric::L1, &[3.0, 0.0], &[0.0, 1.0]).unwrap(), 4.0);
    }

    #[test]
    fn extended_jaccard_of_identical_vectors_is_zero() {
        let x = [0.3, 1.2, 0.0, 4.0];
        assert!(distance(Metric::ExtendedJaccard, &x, &x).unwrap().abs() < 1e-15);
    }

    #[test]
    fn extended_jaccard_of_disjoint_unit_vectors_is_one() {
        let d = distance(Metric::ExtendedJaccard, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            distance(Metric::L2, &[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn zero_vector_similarity_rejected() {
        for metric in [Metric::Cosine, Metric::ExtendedJaccard] {
            assert!(matches!(
                distance(metric, &[0.0, 0.0], &[1.0, 0.0]),
                Err(Error::UndefinedSimilarity)
            ));
        }
    }

    #[test]
    fn feature_concatenation_order() {
        let e = Experience {
            state: vec![1.0, 0.0],
            action: 1,
            reward: 0.5,
            next_state: vec![0.0, 1.0],
            terminal: false,
            ret: 0.5,
            task_id: 0,
            step_index: 0,
        };
        let f = experience_feature(&e.rank_view(), 2).unwrap();
        assert_eq!(f, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.5]);
        assert_eq!(f.len(), 2 * 2 + 2 + 1);
    }

    #[test]
    fn feature_rejects_out_of_range_action() {
        let e = test_experience(0, 0, 1.0);
        let mut e = e;
        e.action = 5;
        assert!(matches!(
            experience_feature(&e.rank_view(), 2),
            Err(Error::BadAction { .. })
        ));
    }

    #[test]
    fn trajectory_rejects_mid_episode_terminal() {
        let steps: Vec<RawStep> = vec![
            (vec![0.0], 0, 0.1, vec![1.0], true),
            (vec![1.0], 0, 0.2, vec![2.0], false),
        ];
        assert!(Trajectory::from_steps(steps, 0.9, 0, 0).is_err());
    }

    #[test]
    fn trajectory_fills_returns_and_episode_reward() {
        let steps: Vec<RawStep> = vec![
            (vec![0.0], 0, -0.01, vec![1.0], false),
            (vec![1.0], 1, 1.0, vec![2.0], true),
        ];
        let t = Trajectory::from_steps(steps, 0.5, 3, 10).unwrap();
        assert_eq!(t.len(), 2);
        assert!((t.experiences[0].ret - (-0.01 + 0.5)).abs() < 1e-15);
        assert_eq!(t.experiences[1].ret, 1.0);
        assert_eq!(t.experiences[1].step_index, 11);
        assert!((t.episode_reward - 0.99).abs() < 1e-15);
        // A terminal step carries no future: its return is exactly its reward.
        assert_eq!(t.experiences[1].ret, t.experiences[1].reward);
    }

    proptest! {
        #[test]
        fn returns_satisfy_backward_recursion(
            rewards in proptest::collection::vec(-10.0..10.0f64, 1..50),
            gamma in 0.05..1.0f64,
        ) {
            let rets = discounted_returns(&rewards, gamma).unwrap();
            let n = rewards.len();
            prop_assert!((rets[n - 1] - rewards[n - 1]).abs() <= 1e-12);
            for i in 0..n - 1 {
                prop_assert!((rets[i] - (rewards[i] + gamma * rets[i + 1])).abs() <= 1e-12);
            }
        }

        #[test]
        fn returns_match_forward_sum_oracle(
            rewards in proptest::collection::vec(-2.0..2.0f64, 1..30),
            gamma in 0.05..1.0f64,
        ) {
            let rets = discounted_returns(&rewards, gamma).unwrap();
            let oracle = forward_sum_returns(&rewards, gamma);
            for (a, b) in rets.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9, "recursion {a} vs forward sum {b}");
            }
        }

        #[test]
        fn metrics_are_symmetric_and_zero_on_self(
            x in proptest::collection::vec(0.01..5.0f64, 4),
            y in proptest::collection::vec(0.01..5.0f64, 4),
        ) {
            for metric in [Metric::L1, Metric::L2, Metric::Cosine, Metric::ExtendedJaccard] {
                let xy = distance(metric, &x, &y).unwrap();
                let yx = distance(metric, &y, &x).unwrap();
                prop_assert!((xy - yx).abs() < 1e-12);
                prop_assert!(distance(metric, &x, &x).unwrap().abs() < 1e-9);
                prop_assert!(xy >= -1e-12);
            }
        }

        #[test]
        fn similarity_distances_bounded_for_nonnegative_vectors(
            x in proptest::collection::vec(0.0..5.0f64, 6),
            y in proptest::collection::vec(0.0..5.0f64, 6),
        ) {
            prop_assume!(x.iter().any(|v| *v > 0.0) && y.iter().any(|v| *v > 0.0));
            for metric in [Metric::Cosine, Metric::ExtendedJaccard] {
                let d = distance(metric, &x, &y).unwrap();
                prop_assert!((-1e-12..=2.0 + 1e-12).contains(&d), "{metric:?} gave {d}");
            }
        }
    }
}
