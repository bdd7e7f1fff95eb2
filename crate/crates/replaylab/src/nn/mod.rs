//! Small feed-forward Q-networks built from scratch.
//!
//! Layers are planned into one flat parameter vector so optimizers and
//! checkpoints can treat the network as a single array. Hidden layers use
//! leaky ReLU; the output layer is always linear.

mod backward;
mod checkpoint;
mod gradcheck;
mod optimizer;

pub use backward::{ce_loss, ce_loss_report, example_ce, td_loss, td_loss_report, LossReport};
pub use checkpoint::{load_net, save_net};
pub use gradcheck::gradient_check;
pub use optimizer::{optimizer_step, OptimizerConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Default negative slope for leaky ReLU hidden units.
pub const DEFAULT_LEAK: f64 = 0.01;

/// One layer of the network.
///
/// `Conv2d` uses valid padding: output height is `(in_h - kernel.0) / stride + 1`,
/// floored, and likewise for width. `Dense` and `Output` flatten their input;
/// `Output` is linear and must be the final layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        stride: usize,
    },
    Dense {
        width: usize,
    },
    Output {
        width: usize,
    },
}

/// Convolutional Q-network for the four-room grid: 32 6x6 stride-2 filters,
/// 64 3x3 stride-2 filters, a 100-unit dense layer, and one output per action.
pub fn grid_q_layers(actions: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            filters: 32,
            kernel: (6, 6),
            stride: 2,
        },
        LayerSpec::Conv2d {
            filters: 64,
            kernel: (3, 3),
            stride: 2,
        },
        LayerSpec::Dense { width: 100 },
        LayerSpec::Output { width: actions },
    ]
}

/// Convolutional classifier for 28x28 images: two 5x5 stride-2 conv layers,
/// a 100-unit dense layer, and one output per class.
pub fn image_class_layers(classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            filters: 32,
            kernel: (5, 5),
            stride: 2,
        },
        LayerSpec::Conv2d {
            filters: 64,
            kernel: (5, 5),
            stride: 2,
        },
        LayerSpec::Dense { width: 100 },
        LayerSpec::Output { width: classes },
    ]
}

/// Resolved shape and parameter slice for one layer. Shapes are (channels, h, w);
/// dense layers use (1, 1, width).
#[derive(Debug, Clone)]
pub(crate) struct LayerPlan {
    pub in_shape: (usize, usize, usize),
    pub out_shape: (usize, usize, usize),
    pub w_off: usize,
    pub w_len: usize,
    pub b_off: usize,
    pub b_len: usize,
}

fn volume(s: (usize, usize, usize)) -> usize {
    s.0 * s.1 * s.2
}

/// A feed-forward network with a flat parameter vector and per-parameter
/// optimizer state.
#[derive(Debug, Clone)]
pub struct QNetwork {
    /// Input shape as (height, width, channels).
    input_shape: (usize, usize, usize),
    layers: Vec<LayerSpec>,
    plan: Vec<LayerPlan>,
    leak: f64,
    params: Vec<f64>,
    optimizer_state: Vec<f64>,
}

impl QNetwork {
    /// Builds and initializes a network. Weights draw from a He-style uniform
    /// range `±sqrt(6 / fan_in)` using the given seed; biases start at zero.
    pub fn new(
        input_shape: (usize, usize, usize),
        layers: Vec<LayerSpec>,
        leak: f64,
        seed: u64,
    ) -> Result<Self> {
        let plan = plan_layers(input_shape, &layers)?;
        let count = plan.iter().map(|p| p.w_len + p.b_len).sum();
        let mut net = QNetwork {
            input_shape,
            layers,
            plan,
            leak,
            params: vec![0.0; count],
            optimizer_state: vec![0.0; count],
        };
        net.init_weights(seed);
        Ok(net)
    }

    fn init_weights(&mut self, seed: u64) {
        use rand::Rng;
        let mut rng = seeding::stream(seed, "net-init");
        let spans: Vec<(usize, usize, usize)> = self
            .layers
            .iter()
            .zip(&self.plan)
            .map(|(layer, p)| {
                let fan_in = match layer {
                    LayerSpec::Conv2d { kernel, .. } => p.in_shape.0 * kernel.0 * kernel.1,
                    _ => volume(p.in_shape),
                };
                (fan_in, p.w_off, p.w_len)
            })
            .collect();
        for (fan_in, w_off, w_len) in spans {
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in &mut self.params[w_off..w_off + w_len] {
                *w = rng.random_range(-limit..limit);
            }
            // biases stay zero
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        let (h, w, c) = self.input_shape;
        h * w * c
    }

    /// Network output width (one entry per action or class).
    pub fn output_len(&self) -> usize {
        volume(self.plan.last().expect("planned network").out_shape)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn leak(&self) -> f64 {
        self.leak
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn optimizer_state(&self) -> &[f64] {
        &self.optimizer_state
    }

    pub(crate) fn optimizer_state_mut(&mut self) -> &mut [f64] {
        &mut self.optimizer_state
    }

    pub(crate) fn set_optimizer_state(&mut self, state: Vec<f64>) {
        self.optimizer_state = state;
    }

    pub(crate) fn plan(&self) -> &[LayerPlan] {
        &self.plan
    }

    /// Scratch buffers sized for this architecture; reuse across calls in hot loops.
    pub fn workspace(&self) -> Workspace {
        let mut max_len = self.input_len();
        let mut zs = Vec::with_capacity(self.plan.len());
        for p in &self.plan {
            let n = volume(p.out_shape);
            max_len = max_len.max(n);
            zs.push(vec![0.0; n]);
        }
        Workspace {
            zs: zs.clone(),
            acts: zs,
            da: vec![0.0; max_len],
            db: vec![0.0; max_len],
        }
    }

    /// Q-values (or logits) for one flat input state.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut ws = self.workspace();
        self.forward_with(state, &mut ws)?;
        Ok(ws.acts.last().expect("planned network").clone())
    }

    /// Forward pass writing pre-activations and activations into `ws`.
    pub fn forward_with(&self, state: &[f64], ws: &mut Workspace) -> Result<()> {
        if state.len() != self.input_len() {
            return Err(Error::ShapeMismatch {
                expected: self.input_len(),
                got: state.len(),
            });
        }
        for l in 0..self.plan.len() {
            let p = &self.plan[l];
            // Split zs around l so the previous activation can be borrowed immutably.
            let (before, rest) = ws.acts.split_at_mut(l);
            let input: &[f64] = if l == 0 {
                state
            } else {
                &before[l - 1]
            };
            let z = &mut ws.zs[l];
            match &self.layers[l] {
                LayerSpec::Conv2d { kernel, stride, .. } => {
                    conv_forward(p, *kernel, *stride, &self.params, input, z);
                }
                LayerSpec::Dense { .. } | LayerSpec::Output { .. } => {
                    dense_forward(p, &self.params, input, z);
                }
            }
            let act = &mut rest[0];
            match self.layers[l] {
                LayerSpec::Output { .. } => act.copy_from_slice(z),
                _ => {
                    for (a, &zv) in act.iter_mut().zip(z.iter()) {
                        *a = if zv >= 0.0 { zv } else { self.leak * zv };
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reusable forward/backward scratch space for one network architecture.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// Pre-activations per layer.
    pub(crate) zs: Vec<Vec<f64>>,
    /// Activations per layer; the last entry is the network output.
    pub(crate) acts: Vec<Vec<f64>>,
    pub(crate) da: Vec<f64>,
    pub(crate) db: Vec<f64>,
}

impl Workspace {
    /// Output of the most recent forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty network")
    }
}

fn plan_layers(
    input_shape: (usize, usize, usize),
    layers: &[LayerSpec],
) -> Result<Vec<LayerPlan>> {
    let (h, w, c) = input_shape;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::BadArchitecture("zero input dimension".into()));
    }
    if layers.is_empty() {
        return Err(Error::BadArchitecture("no layers".into()));
    }
    let mut shape = (c, h, w);
    let mut flat = false;
    let mut offset = 0;
    let mut plan = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let is_last = i == layers.len() - 1;
        match *layer {
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
            } => {
                if flat {
                    return Err(Error::BadArchitecture(
                        "conv layer after dense layer".into(),
                    ));
                }
                if filters == 0 || kernel.0 == 0 || kernel.1 == 0 || stride == 0 {
                    return Err(Error::BadArchitecture("zero conv dimension".into()));
                }
                let (ic, ih, iw) = shape;
                if kernel.0 > ih || kernel.1 > iw {
                    return Err(Error::BadArchitecture(format!(
                        "kernel {:?} larger than input {}x{}",
                        kernel, ih, iw
                    )));
                }
                if is_last {
                    return Err(Error::BadArchitecture("network must end in Output".into()));
                }
                let oh = (ih - kernel.0) / stride + 1;
                let ow = (iw - kernel.1) / stride + 1;
                let w_len = filters * ic * kernel.0 * kernel.1;
                plan.push(LayerPlan {
                    in_shape: shape,
                    out_shape: (filters, oh, ow),
                    w_off: offset,
                    w_len,
                    b_off: offset + w_len,
                    b_len: filters,
                });
                offset += w_len + filters;
                shape = (filters, oh, ow);
            }
            LayerSpec::Dense { width } | LayerSpec::Output { width } => {
                if width == 0 {
                    return Err(Error::BadArchitecture("zero layer width".into()));
                }
                let is_output = matches!(layer, LayerSpec::Output { .. });
                if is_output != is_last {
                    return Err(Error::BadArchitecture(
                        "Output must be exactly the final layer".into(),
                    ));
                }
                let in_dim = volume(shape);
                let w_len = width * in_dim;
                plan.push(LayerPlan {
                    in_shape: shape,
                    out_shape: (1, 1, width),
                    w_off: offset,
                    w_len,
                    b_off: offset + w_len,
                    b_len: width,
                });
                offset += w_len + width;
                shape = (1, 1, width);
                flat = true;
            }
        }
    }
    Ok(plan)
}

fn conv_forward(
    p: &LayerPlan,
    kernel: (usize, usize),
    stride: usize,
    params: &[f64],
    input: &[f64],
    z: &mut [f64],
) {
    let (ic, ih, iw) = p.in_shape;
    let (of, oh, ow) = p.out_shape;
    let (kh, kw) = kernel;
    let weights = &params[p.w_off..p.w_off + p.w_len];
    let biases = &params[p.b_off..p.b_off + p.b_len];
    for f in 0..of {
        let wf = &weights[f * ic * kh * kw..(f + 1) * ic * kh * kw];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = biases[f];
                for c in 0..ic {
                    let plane = &input[c * ih * iw..(c + 1) * ih * iw];
                    let wc = &wf[c * kh * kw..(c + 1) * kh * kw];
                    for ky in 0..kh {
                        let row = &plane[(oy * stride + ky) * iw + ox * stride..][..kw];
                        let wrow = &wc[ky * kw..ky * kw + kw];
                        for (r, wv) in row.iter().zip(wrow) {
                            acc += r * wv;
                        }
                    }
                }
                z[(f * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

fn dense_forward(p: &LayerPlan, params: &[f64], input: &[f64], z: &mut [f64]) {
    let in_dim = volume(p.in_shape);
    let out_dim = volume(p.out_shape);
    let weights = &params[p.w_off..p.w_off + p.w_len];
    let biases = &params[p.b_off..p.b_off + p.b_len];
    for o in 0..out_dim {
        let row = &weights[o * in_dim..(o + 1) * in_dim];
        let mut acc = biases[o];
        for (r, x) in row.iter().zip(input) {
            acc += r * x;
        }
        z[o] = acc;
    }
}
