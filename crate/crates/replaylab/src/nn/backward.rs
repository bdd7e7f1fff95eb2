//! Backward pass and the two training losses.
//!
//! The TD loss regresses the selected action's Q-value onto the stored
//! discounted return; other outputs receive no gradient. The cross-entropy
//! loss treats outputs as class logits with the label stored in `action`.

use crate::core::Experience;
use crate::error::{Error, Result};
use crate::nn::{LayerPlan, LayerSpec, QNetwork, Workspace};

/// Loss value, flat gradient, and the largest per-example error in the batch
/// (|return - Q| for TD, per-example cross-entropy for classification).
#[derive(Debug, Clone)]
pub struct LossReport {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub max_abs_error: f64,
}

/// Mean squared TD loss `mean((ret - Q(s, a))^2)` and its gradient.
pub fn td_loss(net: &QNetwork, batch: &[Experience]) -> Result<(f64, Vec<f64>)> {
    let r = td_loss_report(net, batch)?;
    Ok((r.loss, r.gradient))
}

pub fn td_loss_report(net: &QNetwork, batch: &[Experience]) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::NoExperiences);
    }
    let out_len = net.output_len();
    let mut ws = net.workspace();
    let mut gradient = vec![0.0; net.param_count()];
    let mut loss = 0.0;
    let mut max_abs_error: f64 = 0.0;
    let n = batch.len() as f64;
    for e in batch {
        if e.action >= out_len {
            return Err(Error::BadAction {
                action: e.action,
                actions: out_len,
            });
        }
        net.forward_with(&e.state, &mut ws)?;
        let err = ws.output()[e.action] - e.ret;
        loss += err * err;
        max_abs_error = max_abs_error.max(err.abs());
        ws.da[..out_len].fill(0.0);
        ws.da[e.action] = 2.0 * err / n;
        backward(net, &mut ws, &e.state, &mut gradient);
    }
    Ok(LossReport {
        loss: loss / n,
        gradient,
        max_abs_error,
    })
}

/// Mean softmax cross-entropy over the outputs, labels taken from `action`.
pub fn ce_loss(net: &QNetwork, batch: &[Experience]) -> Result<(f64, Vec<f64>)> {
    let r = ce_loss_report(net, batch)?;
    Ok((r.loss, r.gradient))
}

pub fn ce_loss_report(net: &QNetwork, batch: &[Experience]) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::NoExperiences);
    }
    let out_len = net.output_len();
    let mut ws = net.workspace();
    let mut gradient = vec![0.0; net.param_count()];
    let mut loss = 0.0;
    let mut max_abs_error: f64 = 0.0;
    let n = batch.len() as f64;
    for e in batch {
        if e.action >= out_len {
            return Err(Error::BadAction {
                action: e.action,
                actions: out_len,
            });
        }
        net.forward_with(&e.state, &mut ws)?;
        let lse = log_sum_exp(ws.output());
        let example_loss = lse - ws.output()[e.action];
        loss += example_loss;
        max_abs_error = max_abs_error.max(example_loss);
        for o in 0..out_len {
            let p = (ws.acts.last().expect("output")[o] - lse).exp();
            ws.da[o] = (p - if o == e.action { 1.0 } else { 0.0 }) / n;
        }
        backward(net, &mut ws, &e.state, &mut gradient);
    }
    Ok(LossReport {
        loss: loss / n,
        gradient,
        max_abs_error,
    })
}

/// Cross-entropy of a single example; used as the surprise rank in
/// classification mode.
pub fn example_ce(net: &QNetwork, state: &[f64], label: usize) -> Result<f64> {
    let out = net.forward(state)?;
    if label >= out.len() {
        return Err(Error::BadAction {
            action: label,
            actions: out.len(),
        });
    }
    Ok(log_sum_exp(&out) - out[label])
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Accumulates dL/dparams into `gradient`, reading dL/d(output) from `ws.da`.
/// Requires `forward_with` to have been called for the same input.
fn backward(net: &QNetwork, ws: &mut Workspace, input: &[f64], gradient: &mut [f64]) {
    let layers = net.layers();
    let plan = net.plan();
    for l in (0..plan.len()).rev() {
        let p = &plan[l];
        let out_n = p.out_shape.0 * p.out_shape.1 * p.out_shape.2;
        // Activation gradient -> pre-activation gradient.
        if !matches!(layers[l], LayerSpec::Output { .. }) {
            let z = &ws.zs[l];
            for (d, zv) in ws.da[..out_n].iter_mut().zip(z.iter()) {
                if *zv < 0.0 {
                    *d *= net.leak();
                }
            }
        }
        let prev: &[f64] = if l == 0 { input } else { &ws.acts[l - 1] };
        let span = &mut gradient[p.w_off..p.b_off + p.b_len];
        let (gw, gb) = span.split_at_mut(p.w_len);
        match layers[l] {
            LayerSpec::Conv2d { kernel, stride, .. } => {
                conv_backward(
                    p,
                    kernel,
                    stride,
                    net.params(),
                    prev,
                    &ws.da,
                    gw,
                    gb,
                    &mut ws.db,
                    l > 0,
                );
            }
            LayerSpec::Dense { .. } | LayerSpec::Output { .. } => {
                dense_backward(p, net.params(), prev, &ws.da, gw, gb, &mut ws.db, l > 0);
            }
        }
        std::mem::swap(&mut ws.da, &mut ws.db);
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    p: &LayerPlan,
    kernel: (usize, usize),
    stride: usize,
    params: &[f64],
    input: &[f64],
    dz: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    da_prev: &mut [f64],
    want_da: bool,
) {
    let (ic, ih, iw) = p.in_shape;
    let (of, oh, ow) = p.out_shape;
    let (kh, kw) = kernel;
    let weights = &params[p.w_off..p.w_off + p.w_len];
    let in_n = ic * ih * iw;
    if want_da {
        da_prev[..in_n].fill(0.0);
    }
    for f in 0..of {
        let wf = &weights[f * ic * kh * kw..(f + 1) * ic * kh * kw];
        let gwf = &mut gw[f * ic * kh * kw..(f + 1) * ic * kh * kw];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = dz[(f * oh + oy) * ow + ox];
                if g == 0.0 {
                    continue;
                }
                gb[f] += g;
                for c in 0..ic {
                    let plane_off = c * ih * iw;
                    let wc = &wf[c * kh * kw..(c + 1) * kh * kw];
                    let gwc = &mut gwf[c * kh * kw..(c + 1) * kh * kw];
                    for ky in 0..kh {
                        let row_off = plane_off + (oy * stride + ky) * iw + ox * stride;
                        let in_row = &input[row_off..row_off + kw];
                        let gw_row = &mut gwc[ky * kw..ky * kw + kw];
                        for (gwv, x) in gw_row.iter_mut().zip(in_row) {
                            *gwv += g * x;
                        }
                        if want_da {
                            let w_row = &wc[ky * kw..ky * kw + kw];
                            let da_row = &mut da_prev[row_off..row_off + kw];
                            for (d, wv) in da_row.iter_mut().zip(w_row) {
                                *d += g * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    p: &LayerPlan,
    params: &[f64],
    input: &[f64],
    dz: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    da_prev: &mut [f64],
    want_da: bool,
) {
    let in_dim = p.in_shape.0 * p.in_shape.1 * p.in_shape.2;
    let out_dim = p.out_shape.0 * p.out_shape.1 * p.out_shape.2;
    let weights = &params[p.w_off..p.w_off + p.w_len];
    if want_da {
        da_prev[..in_dim].fill(0.0);
    }
    for o in 0..out_dim {
        let g = dz[o];
        if g == 0.0 {
            continue;
        }
        gb[o] += g;
        let gw_row = &mut gw[o * in_dim..(o + 1) * in_dim];
        for (gwv, x) in gw_row.iter_mut().zip(input) {
            *gwv += g * x;
        }
        if want_da {
            let w_row = &weights[o * in_dim..(o + 1) * in_dim];
            for (d, wv) in da_prev[..in_dim].iter_mut().zip(w_row) {
                *d += g * wv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use crate::seeding;
    use rand::Rng;

    fn experience(state: Vec<f64>, action: usize, ret: f64) -> Experience {
        Experience {
            state,
            action,
            reward: ret,
            next_state: vec![],
            terminal: true,
            ret,
            task_id: 0,
            step_index: 0,
        }
    }

    fn small_dense_net(seed: u64) -> QNetwork {
        QNetwork::new(
            (1, 4, 1),
            vec![
                LayerSpec::Dense { width: 5 },
                LayerSpec::Dense { width: 3 },
                LayerSpec::Output { width: 2 },
            ],
            0.01,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_network_td_loss_is_squared_return() {
        let mut net = small_dense_net(1);
        net.params_mut().fill(0.0);
        let batch = vec![experience(vec![0.5, -0.5, 1.0, 0.0], 0, 1.0)];
        let r = td_loss_report(&net, &batch).unwrap();
        assert_eq!(r.loss, 1.0);
        assert_eq!(r.max_abs_error, 1.0);
        // Every weight path is dead (zero activations), but the output bias
        // for the chosen action sees dL/db = 2 * (0 - 1).
        let p = net.plan().last().unwrap().clone();
        assert_eq!(r.gradient[p.b_off], -2.0);
        assert_eq!(r.gradient[p.b_off + 1], 0.0);
    }

    #[test]
    fn perfect_prediction_gives_zero_loss_and_gradient() {
        // Linear single unit: w = 0, b = 0.7 predicts ret = 0.7 exactly.
        let mut net =
            QNetwork::new((1, 1, 1), vec![LayerSpec::Output { width: 1 }], 0.01, 1).unwrap();
        net.params_mut().copy_from_slice(&[0.0, 0.7]);
        let batch = vec![experience(vec![2.0], 0, 0.7)];
        let r = td_loss_report(&net, &batch).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.gradient.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn empty_batch_rejected() {
        let net = small_dense_net(1);
        assert!(matches!(td_loss(&net, &[]), Err(Error::NoExperiences)));
        assert!(matches!(ce_loss(&net, &[]), Err(Error::NoExperiences)));
    }

    /// Central-difference oracle: every analytic partial must match the
    /// numeric one on a small network where we can afford all parameters.
    #[test]
    fn td_gradient_matches_central_differences() {
        let mut net = small_dense_net(7);
        let mut rng = seeding::stream(11, "gradtest");
        let batch: Vec<Experience> = (0..3)
            .map(|i| {
                let state: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                experience(state, i % 2, rng.random_range(-1.0..1.0))
            })
            .collect();
        let (_, grad) = td_loss(&net, &batch).unwrap();
        let h = 1e-5;
        for i in 0..net.param_count() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let (lp, _) = td_loss(&net, &batch).unwrap();
            net.params_mut()[i] = orig - h;
            let (lm, _) = td_loss(&net, &batch).unwrap();
            net.params_mut()[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / (grad[i].abs() + numeric.abs()).max(1e-12);
            assert!(
                rel < 1e-4,
                "param {i}: analytic {} vs numeric {numeric}",
                grad[i]
            );
        }
    }

    #[test]
    fn ce_gradient_matches_central_differences() {
        let mut net = small_dense_net(13);
        let mut rng = seeding::stream(17, "cetest");
        let batch: Vec<Experience> = (0..4)
            .map(|i| {
                let state: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
                experience(state, i % 2, 0.0)
            })
            .collect();
        let (_, grad) = ce_loss(&net, &batch).unwrap();
        let h = 1e-5;
        for i in 0..net.param_count() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let (lp, _) = ce_loss(&net, &batch).unwrap();
            net.params_mut()[i] = orig - h;
            let (lm, _) = ce_loss(&net, &batch).unwrap();
            net.params_mut()[i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / (grad[i].abs() + numeric.abs()).max(1e-12);
            assert!(rel < 1e-4, "param {i}");
        }
    }

    #[test]
    fn uniform_logits_give_log_k_ce() {
        let mut net = small_dense_net(1);
        net.params_mut().fill(0.0);
        let batch = vec![experience(vec![1.0, 2.0, 3.0, 4.0], 1, 0.0)];
        let r = ce_loss_report(&net, &batch).unwrap();
        assert!((r.loss - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_example_has_tiny_ce() {
        // Drive the correct logit far above the other through the output bias.
        let mut net =
            QNetwork::new((1, 1, 1), vec![LayerSpec::Output { width: 2 }], 0.01, 1).unwrap();
        net.params_mut().copy_from_slice(&[0.0, 0.0, 40.0, 0.0]);
        let ce = example_ce(&net, &[0.0], 0).unwrap();
        assert!(ce <= 1e-6, "got {ce}");
    }

    #[test]
    fn loss_and_gradient_are_deterministic() {
        let net = small_dense_net(3);
        let batch = vec![experience(vec![0.1, 0.2, 0.3, 0.4], 1, 0.5)];
        let (l1, g1) = td_loss(&net, &batch).unwrap();
        let (l2, g2) = td_loss(&net, &batch).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
