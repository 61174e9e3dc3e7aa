//! Classifiers behind a uniform train / predict / loss interface.
//!
//! Three implementations:
//!
//! * [`oracle::OracleLearner`] predicts class `j` for a sample of true class
//!   `i` with probability `T[i][j]`, which is exactly the behaviour a
//!   memorizing network trained on noisy labels is claimed to show;
//! * [`knn::KnnLearner`], a brute-force k-nearest-neighbour memorizer;
//! * [`softmax::SoftmaxLearner`], multinomial logistic regression or a
//!   one-hidden-layer ReLU network trained by mini-batch SGD.

pub mod knn;
pub mod oracle;
pub mod softmax;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking logs.
pub const MIN_PROB: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
    pub log_probabilities: Vec<f64>,
}

impl Prediction {
    /// Builds a prediction from probabilities; the label is the argmax with
    /// ties going to the lowest class index.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let log_probabilities = probabilities.iter().map(|p| p.max(MIN_PROB).ln()).collect();
        Self {
            label: argmax(&probabilities),
            probabilities,
            log_probabilities,
        }
    }

    /// Cross-entropy against `label`.
    pub fn loss(&self, label: usize) -> f64 {
        -self.probabilities[label].max(MIN_PROB).ln()
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// SGD schedule: `learning_rate`, multiplied by `decay_factor` at each epoch
/// listed in `decay_epochs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub decay_epochs: Vec<usize>,
    #[serde(default = "default_decay")]
    pub decay_factor: f64,
    pub seed: u64,
}

fn default_decay() -> f64 {
    0.1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            learning_rate: 0.1,
            decay_epochs: Vec::new(),
            decay_factor: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.decay_factor > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for zero-based `epoch`.
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let steps = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate * self.decay_factor.powi(steps as i32)
    }
}

/// A trainable classifier, `f(x; w)`.
pub trait Learner {
    fn num_classes(&self) -> usize;

    /// Discards all training and draws fresh parameters from `seed`.
    fn reinitialize(&mut self, seed: u64);

    /// Trains on the observed labels of `train`.
    fn fit(&mut self, train: &LabeledDataset) -> Result<()>;

    fn predict(&self, data: &LabeledDataset) -> Result<Vec<Prediction>>;

    /// Cross-entropy of each sample's observed label.
    fn per_sample_loss(&self, data: &LabeledDataset) -> Result<Vec<f64>> {
        Ok(self
            .predict(data)?
            .iter()
            .zip(data.observed_labels())
            .map(|(p, &y)| p.loss(y))
            .collect())
    }
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn reinitialize(&mut self, seed: u64) {
        (**self).reinitialize(seed)
    }
    fn fit(&mut self, train: &LabeledDataset) -> Result<()> {
        (**self).fit(train)
    }
    fn predict(&self, data: &LabeledDataset) -> Result<Vec<Prediction>> {
        (**self).predict(data)
    }
    fn per_sample_loss(&self, data: &LabeledDataset) -> Result<Vec<f64>> {
        (**self).per_sample_loss(data)
    }
}

/// A learner that can be updated one mini-batch at a time.
pub trait IncrementalLearner: Learner {
    /// Cross-entropy of the observed labels at `rows`, without updating.
    fn batch_losses(&self, data: &LabeledDataset, rows: &[usize]) -> Result<Vec<f64>>;

    /// One SGD step on the mean loss over `rows`; returns that loss.
    fn sgd_step(&mut self, data: &LabeledDataset, rows: &[usize], learning_rate: f64) -> Result<f64>;
}

/// Fraction of predictions equal to `labels`.
pub fn accuracy(predictions: &[Prediction], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &y)| p.label == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy against true labels when present, observed labels otherwise.
pub fn clean_accuracy<L: Learner + ?Sized>(learner: &L, data: &LabeledDataset) -> Result<f64> {
    let preds = learner.predict(data)?;
    let labels = data.true_labels().unwrap_or(data.observed_labels());
    accuracy(&preds, labels)
}

/// Serializable learner state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Checkpoint {
    Oracle {
        transition: Vec<Vec<f64>>,
        seed: u64,
    },
    Knn {
        k: usize,
        d: usize,
        c: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    },
    Softmax {
        d: usize,
        c: usize,
        hidden: Option<usize>,
        config: TrainConfig,
        seed: u64,
        params: Vec<f64>,
    },
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn restore(self) -> Result<Box<dyn Learner>> {
        Ok(match self {
            Checkpoint::Oracle { transition, seed } => Box::new(oracle::OracleLearner::new(
                crate::noise::TransitionMatrix::from_rows(&transition)?,
                seed,
            )),
            Checkpoint::Knn { .. } => Box::new(knn::KnnLearner::from_checkpoint(self)?),
            Checkpoint::Softmax { .. } => Box::new(softmax::SoftmaxLearner::from_checkpoint(self)?),
        })
    }
}
