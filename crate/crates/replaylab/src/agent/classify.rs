//! Lifelong classification driver.
//!
//! The digit stream reuses the replay machinery end to end: each iteration
//! absorbs one labelled example into the buffers, then takes a gradient step
//! on a replayed batch under cross-entropy loss. Evaluation reports held-out
//! accuracy and mean cross-entropy per task.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::agent::{
    driver_rng, eval_rng, train_step_with, AgentConfig, EvalRecord, EvalSummary, LossWindow,
    TdPoint, TdTracker,
};
use crate::envs::digits::classification_as_experience;
use crate::envs::DigitDataset;
use crate::error::Result;
use crate::memory::{FifoBuffer, RankedStore};
use crate::nn::{ce_loss_report, QNetwork};

/// Everything a finished classification run leaves behind.
#[derive(Debug, Clone)]
pub struct ClassificationOutcome {
    pub records: Vec<EvalRecord>,
    pub td_trace: Vec<TdPoint>,
    pub net: QNetwork,
    pub fifo: FifoBuffer,
    pub episodic: Option<RankedStore>,
}

/// Trains on digit-pair tasks strictly in order, `iters_per_task[i]`
/// examples on task i. Task i's stream cycles its training examples in a
/// freshly shuffled order per pass.
pub fn train_classification(
    dataset: &DigitDataset,
    iters_per_task: &[usize],
    cfg: &AgentConfig,
) -> Result<ClassificationOutcome> {
    cfg.validate()?;
    let mut net = cfg.build_net()?;
    let (mut fifo, mut episodic) = cfg.build_buffers()?;
    let mut rng = driver_rng(cfg.seed);
    let num_tasks = iters_per_task.len();
    let classes = net.output_len();
    let mut records = Vec::new();
    let mut td_trace = Vec::new();
    let mut td = TdTracker::default();
    let mut losses = LossWindow::default();
    let mut global_step: u64 = 0;

    for (task, &iters) in iters_per_task.iter().enumerate() {
        let mut order = dataset.train_indices_for_task(task)?;
        let mut cursor = order.len();
        for _ in 0..iters {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let (pixels, label) = &dataset.train()[order[cursor]];
            cursor += 1;
            let e = classification_as_experience(pixels, *label, classes, global_step)?;
            fifo.insert(e.clone());
            if let Some(store) = episodic.as_mut() {
                store.offer(e, Some(&net))?;
            }
            global_step += 1;
            if global_step % cfg.train_every as u64 == 0 {
                if let Some(rep) = train_step_with(
                    &mut net,
                    &fifo,
                    episodic.as_mut(),
                    cfg,
                    &mut rng,
                    ce_loss_report,
                )? {
                    td.observe(rep.max_error);
                    losses.push(rep.loss);
                }
            }
            if global_step % cfg.eval_every as u64 == 0 {
                emit(
                    &net, dataset, num_tasks, cfg, task, global_step, &mut td, &losses,
                    &mut records, &mut td_trace,
                )?;
            }
        }
    }
    if global_step % cfg.eval_every as u64 != 0 {
        emit(
            &net,
            dataset,
            num_tasks,
            cfg,
            num_tasks.saturating_sub(1),
            global_step,
            &mut td,
            &losses,
            &mut records,
            &mut td_trace,
        )?;
    }
    Ok(ClassificationOutcome {
        records,
        td_trace,
        net,
        fifo,
        episodic,
    })
}

/// Held-out accuracy and mean cross-entropy per task. Deterministic and
/// read-only; the rng argument exists only for signature symmetry and is
/// untouched.
pub fn evaluate_classification<R: Rng>(
    net: &QNetwork,
    dataset: &DigitDataset,
    num_tasks: usize,
    _rng: &mut R,
) -> Result<EvalSummary> {
    let mut ws = net.workspace();
    let mut success = Vec::with_capacity(num_tasks);
    let mut mean_return = Vec::with_capacity(num_tasks);
    for task in 0..num_tasks {
        let held = dataset.held_out_for_task(task)?;
        let mut correct = 0usize;
        let mut ce_sum = 0.0;
        for (pixels, label) in &held {
            net.forward_with(pixels, &mut ws)?;
            let out = ws.output();
            let mut best = 0;
            let mut m = f64::NEG_INFINITY;
            for (i, v) in out.iter().enumerate() {
                if *v > out[best] {
                    best = i;
                }
                m = m.max(*v);
            }
            if best == *label as usize {
                correct += 1;
            }
            let lse = m + out.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            ce_sum += lse - out[*label as usize];
        }
        let n = held.len().max(1) as f64;
        success.push(correct as f64 / n);
        mean_return.push(ce_sum / n);
    }
    Ok(EvalSummary { success, mean_return })
}

#[allow(clippy::too_many_arguments)]
fn emit(
    net: &QNetwork,
    dataset: &DigitDataset,
    num_tasks: usize,
    cfg: &AgentConfig,
    training_task: usize,
    global_step: u64,
    td: &mut TdTracker,
    losses: &LossWindow,
    records: &mut Vec<EvalRecord>,
    td_trace: &mut Vec<TdPoint>,
) -> Result<()> {
    let mut erng = eval_rng(cfg.seed, global_step);
    let summary = evaluate_classification(net, dataset, num_tasks, &mut erng)?;
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
