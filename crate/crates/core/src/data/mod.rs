//! Sample containers, partial-label masking and batch sampling.

mod digits;
mod toy;

pub use digits::{load_digits, read_idx, write_idx, DigitDataset, IdxArray, Split, DIGIT_SIDE};
pub use toy::{make_toy_world, ToyOptions, ToyProblem, ToyWorld};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::{DomainSpec, VOID};

/// A set of samples with one label per sample (unified indices, possibly void).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Row-major, `len() * sample_len()` values.
    pub inputs: Vec<f32>,
    pub sample_shape: Vec<usize>,
    pub labels: Vec<i64>,
}

impl Dataset {
    pub fn new(inputs: Vec<f32>, sample_shape: Vec<usize>, labels: Vec<i64>) -> Result<Self> {
        let per = sample_shape.iter().product::<usize>();
        if per == 0 || inputs.len() != per * labels.len() {
            return Err(Error::Shape(format!(
                "{} input values do not fit {} samples of shape {:?}",
                inputs.len(),
                labels.len(),
                sample_shape
            )));
        }
        Ok(Self {
            inputs,
            sample_shape,
            labels,
        })
    }

    pub fn empty(sample_shape: Vec<usize>) -> Self {
        Self {
            inputs: Vec::new(),
            sample_shape,
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.inputs[i * n..(i + 1) * n]
    }

    /// Copies the given rows into a new dataset.
    pub fn select(&self, rows: &[usize]) -> Self {
        let n = self.sample_len();
        let mut inputs = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            inputs.extend_from_slice(self.sample(r));
        }
        Self {
            inputs,
            sample_shape: self.sample_shape.clone(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    pub fn with_labels(&self, labels: Vec<i64>) -> Result<Self> {
        Self::new(self.inputs.clone(), self.sample_shape.clone(), labels)
    }
}

/// Inputs, masked labels and the derived attention targets of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Vec<f32>,
    pub sample_shape: Vec<usize>,
    pub labels: Vec<i64>,
    pub attention_targets: Vec<f32>,
    pub domain_id: usize,
}

impl LabeledBatch {
    pub fn new(inputs: Vec<f32>, sample_shape: Vec<usize>, labels: Vec<i64>, domain_id: usize) -> Self {
        let attention_targets = attention_targets(&labels);
        Self {
            inputs,
            sample_shape,
            labels,
            attention_targets,
            domain_id,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows whose label is void; these feed the uncertainty loss.
    pub fn void_rows(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == VOID).collect()
    }
}

/// 1 where a label is present, 0 where it is void.
pub fn attention_targets(labels: &[i64]) -> Vec<f32> {
    labels.iter().map(|&y| if y == VOID { 0.0 } else { 1.0 }).collect()
}

/// Voids every label outside the domain's labeled classes.
pub fn mask_partial(labels: &[i64], domain: &DomainSpec) -> Vec<i64> {
    labels
        .iter()
        .map(|&y| if domain.is_labeled(y) { y } else { VOID })
        .collect()
}

/// Endless shuffled pass over `0..len`, reshuffled every epoch from a seeded stream.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { order, cursor: 0, rng }
    }

    /// Next `batch` indices. Wraps into a fresh permutation at epoch end.
    pub fn next_batch(&mut self, batch: usize) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}
