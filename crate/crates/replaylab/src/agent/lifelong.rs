//! Sequential multi-task training driver.
//!
//! Tasks run strictly in order, each for its step budget; an episode that
//! straddles a budget boundary is truncated there and absorbed like a
//! timeout. Gradient steps interleave with environment steps, so training
//! always draws from buffers that do not yet contain the running episode.

use crate::agent::{
    absorb_trajectory, driver_rng, eval_rng, evaluate, select_action_ws, train_step, AgentConfig,
    EvalRecord, LossWindow, TdPoint, TdTracker,
};
use crate::core::Trajectory;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::memory::{FifoBuffer, RankedStore};
use crate::nn::QNetwork;

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct LifelongOutcome {
    pub records: Vec<EvalRecord>,
    pub td_trace: Vec<TdPoint>,
    pub net: QNetwork,
    pub fifo: FifoBuffer,
    pub episodic: Option<RankedStore>,
}

/// Trains one agent across `envs` in order, `steps_per_task[i]` environment
/// steps on task i. Evaluation covers all tasks every `cfg.eval_every` steps
/// (plus a final record when the run ends off-cadence) using greedy policy
/// on fresh environment clones, so it never disturbs training state.
pub fn train_lifelong<E: Environment + Clone>(
    envs: &[E],
    steps_per_task: &[usize],
    cfg: &AgentConfig,
) -> Result<LifelongOutcome> {
    cfg.validate()?;
    if envs.len() != steps_per_task.len() {
        return Err(Error::LengthMismatch {
            left: envs.len(),
            right: steps_per_task.len(),
        });
    }
    let mut net = cfg.build_net()?;
    let (mut fifo, mut episodic) = cfg.build_buffers()?;
    let mut rng = driver_rng(cfg.seed);
    let mut ws = net.workspace();
    let mut records = Vec::new();
    let mut td_trace = Vec::new();
    let mut td = TdTracker::default();
    let mut losses = LossWindow::default();
    let mut global_step: u64 = 0;

    for (task_pos, template) in envs.iter().enumerate() {
        let budget = steps_per_task[task_pos];
        let mut used = 0usize;
        while used < budget {
            let mut env = template.clone();
            let mut state = env.reset(&mut rng);
            let mut steps = Vec::new();
            let first_index = global_step;
            loop {
                let eps = cfg.epsilon_at(used, budget);
                let action = select_action_ws(&net, &mut ws, &state, eps, &mut rng)?;
                let (next, reward, terminal) = env.step(action)?;
                steps.push((state, action, reward, next.clone(), terminal));
                state = next;
                used += 1;
                global_step += 1;
                if global_step % cfg.train_every as u64 == 0 {
                    if let Some(rep) =
                        train_step(&mut net, &fifo, episodic.as_mut(), cfg, &mut rng)?
                    {
                        td.observe(rep.max_error);
                        losses.push(rep.loss);
                    }
                }
                if global_step % cfg.eval_every as u64 == 0 {
                    emit(
                        &net,
                        envs,
                        cfg,
                        template.task_id(),
                        global_step,
                        &mut td,
                        &losses,
                        &mut records,
                        &mut td_trace,
                    )?;
                }
                if terminal || steps.len() >= env.max_steps() || used >= budget {
                    break;
                }
            }
            let traj = Trajectory::from_steps(steps, cfg.gamma, env.task_id(), first_index)?;
            absorb_trajectory(&traj, &mut fifo, episodic.as_mut(), Some(&net))?;
        }
    }
    if global_step % cfg.eval_every as u64 != 0 {
        let last_task = envs.last().map_or(0, |e| e.task_id());
        emit(
            &net, envs, cfg, last_task, global_step, &mut td, &losses, &mut records,
            &mut td_trace,
        )?;
    }
    Ok(LifelongOutcome {
        records,
        td_trace,
        net,
        fifo,
        episodic,
    })
}

#[allow(clippy::too_many_arguments)]
fn emit<E: Environment + Clone>(
    net: &QNetwork,
    envs: &[E],
    cfg: &AgentConfig,
    training_task: usize,
    global_step: u64,
    td: &mut TdTracker,
    losses: &LossWindow,
    records: &mut Vec<EvalRecord>,
    td_trace: &mut Vec<TdPoint>,
) -> Result<()> {
    let mut eval_envs = envs.to_vec();
    let mut erng = eval_rng(cfg.seed, global_step);
    let summary = evaluate(net, &mut eval_envs, cfg.eval_episodes, &mut erng)?;
    records.push(EvalRecord {
        global_step,
        training_task,
        per_task_success: summary.success,
        per_task_mean_return: summary.mean_return,
        max_td_error_seen: td.running_max(),
        loss_ma: losses.mean(),
    });
    td_trace.push(td.take_point(global_step));
    Ok(())
}
