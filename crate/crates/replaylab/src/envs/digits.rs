//! Synthetic digit dataset and lifelong classification tasks.
//!
//! Ten classes of 28x28 images built from a 4x4 grid of 7x7 blocks. Class k
//! lights the blocks selected by the bit mask (1 << k) | (1 << (k + 6)), so
//! every class has a distinct two-block template; samples add Gaussian pixel
//! noise. Tasks pair digits (i, i + 5) for i in 0..5, mirroring the usual
//! split-digits protocol.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::core::Experience;
use crate::envs::idx::LabelledImage;
use crate::error::{Error, Result};

/// Image side length.
pub const IMAGE_SIZE: usize = 28;
/// Pixels per image.
pub const IMAGE_LEN: usize = IMAGE_SIZE * IMAGE_SIZE;
/// Block grid side: 4x4 blocks of 7x7 pixels.
pub const BLOCK_GRID: usize = 4;
const BLOCK: usize = IMAGE_SIZE / BLOCK_GRID;
/// Digit classes.
pub const NUM_CLASSES: usize = 10;
/// Binary classification tasks over digit pairs.
pub const NUM_TASKS: usize = 5;
/// Standard deviation of additive pixel noise.
pub const NOISE_SIGMA: f64 = 0.1;
/// Samples generated per class by `synthetic_digits`.
pub const PER_CLASS: usize = 500;
/// Fraction of each class kept for training; the rest is held out.
pub const TRAIN_FRACTION: f64 = 0.8;

/// The noiseless template for a digit class.
pub fn template(class: u8) -> Vec<f64> {
    assert!((class as usize) < NUM_CLASSES);
    let mask: u32 = (1 << class) | (1 << (class + 6));
    let mut img = vec![0.0; IMAGE_LEN];
    for block in 0..BLOCK_GRID * BLOCK_GRID {
        if mask & (1 << block) == 0 {
            continue;
        }
        let (br, bc) = (block / BLOCK_GRID, block % BLOCK_GRID);
        for r in 0..BLOCK {
            for c in 0..BLOCK {
                img[(br * BLOCK + r) * IMAGE_SIZE + bc * BLOCK + c] = 1.0;
            }
        }
    }
    img
}

/// Draws `per_class` noisy samples of every class, grouped by class.
pub fn synthetic_digits<R: Rng>(rng: &mut R, per_class: usize) -> Vec<LabelledImage> {
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut out = Vec::with_capacity(per_class * NUM_CLASSES);
    for class in 0..NUM_CLASSES as u8 {
        let base = template(class);
        for _ in 0..per_class {
            let img = base.iter().map(|p| p + noise.sample(rng)).collect();
            out.push((img, class));
        }
    }
    out
}

/// Classifies an image by L2 distance to the class templates.
pub fn nearest_template(pixels: &[f64]) -> u8 {
    let mut best = 0u8;
    let mut best_d = f64::INFINITY;
    for class in 0..NUM_CLASSES as u8 {
        let t = template(class);
        let d: f64 = pixels
            .iter()
            .zip(&t)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best_d {
            best_d = d;
            best = class;
        }
    }
    best
}

/// The digit pair forming one binary task.
pub fn task_digits(task_id: usize) -> Result<(u8, u8)> {
    if task_id >= NUM_TASKS {
        return Err(Error::UnknownTask(task_id));
    }
    Ok((task_id as u8, (task_id + NUM_TASKS) as u8))
}

/// The task a digit belongs to.
pub fn task_of_label(label: u8) -> usize {
    label as usize % NUM_TASKS
}

/// A labelled image set with a per-class train and held-out split.
#[derive(Debug, Clone)]
pub struct DigitDataset {
    train: Vec<LabelledImage>,
    held_out: Vec<LabelledImage>,
}

impl DigitDataset {
    /// Splits examples per class, keeping the leading fraction of each
    /// class's examples in order for training.
    pub fn from_examples(examples: Vec<LabelledImage>, train_fraction: f64) -> Self {
        let mut by_class: Vec<Vec<LabelledImage>> = (0..NUM_CLASSES).map(|_| Vec::new()).collect();
        for ex in examples {
            by_class[ex.1 as usize % NUM_CLASSES].push(ex);
        }
        let mut train = Vec::new();
        let mut held_out = Vec::new();
        for class in by_class {
            let cut = (class.len() as f64 * train_fraction).round() as usize;
            for (i, ex) in class.into_iter().enumerate() {
                if i < cut {
                    train.push(ex);
                } else {
                    held_out.push(ex);
                }
            }
        }
        DigitDataset { train, held_out }
    }

    /// The standard synthetic dataset for a seed stream.
    pub fn synthetic<R: Rng>(rng: &mut R) -> Self {
        Self::from_examples(synthetic_digits(rng, PER_CLASS), TRAIN_FRACTION)
    }

    pub fn train(&self) -> &[LabelledImage] {
        &self.train
    }

    pub fn held_out(&self) -> &[LabelledImage] {
        &self.held_out
    }

    /// Indices into `train` whose labels belong to the task's digit pair.
    pub fn train_indices_for_task(&self, task_id: usize) -> Result<Vec<usize>> {
        let (a, b) = task_digits(task_id)?;
        Ok(self
            .train
            .iter()
            .enumerate()
            .filter(|(_, (_, l))| *l == a || *l == b)
            .map(|(i, _)| i)
            .collect())
    }

    /// Held-out examples for one task.
    pub fn held_out_for_task(&self, task_id: usize) -> Result<Vec<&LabelledImage>> {
        let (a, b) = task_digits(task_id)?;
        Ok(self
            .held_out
            .iter()
            .filter(|(_, l)| *l == a || *l == b)
            .collect())
    }
}

/// Wraps a labelled image as a replayable experience: the label is stored in
/// the action slot, the return is zero, and the successor state is a zero
/// vector so transition features stay well-formed.
pub fn classification_as_experience(
    pixels: &[f64],
    label: u8,
    num_classes: usize,
    step_index: u64,
) -> Result<Experience> {
    if label as usize >= num_classes {
        return Err(Error::BadAction {
            action: label as usize,
            actions: num_classes,
        });
    }
    Ok(Experience {
        state: pixels.to_vec(),
        action: label as usize,
        reward: 0.0,
        next_state: vec![0.0; pixels.len()],
        terminal: true,
        ret: 0.0,
        task_id: task_of_label(label),
        step_index,
    })
}
