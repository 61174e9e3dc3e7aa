//! The distributional oracle.
//!
//! Stands in for a high-capacity network trained on noisily labeled data:
//! for a sample of true class `i` it predicts class `j` with probability
//! `T[i][j]`, independently per sample. Draws are keyed by `(seed, id)`, so a
//! fixed learner always predicts the same label for the same sample and a
//! reinitialized learner redraws.
//!
//! Reported probabilities are `0.5 * onehot(prediction) + 0.5 * T[i]`: the
//! predicted label stays the strict argmax, and mispredicted samples whose
//! observed label is unlikely under `T` carry large loss.

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learner::{Checkpoint, Learner, Prediction};
use crate::noise::TransitionMatrix;
use crate::rng::keyed_uniform;

#[derive(Debug, Clone)]
pub struct OracleLearner {
    t: TransitionMatrix,
    seed: u64,
}

impl OracleLearner {
    pub fn new(t: TransitionMatrix, seed: u64) -> Self {
        Self { t, seed }
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The raw predicted label for a sample of class `true_class` with id `id`.
    pub fn draw(&self, true_class: usize, id: u64) -> usize {
        self.t.sample_row(true_class, keyed_uniform(self.seed, id))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::Oracle {
            transition: self.t.rows(),
            seed: self.seed,
        }
    }
}

impl Learner for OracleLearner {
    fn num_classes(&self) -> usize {
        self.t.num_classes()
    }

    fn reinitialize(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn fit(&mut self, train: &LabeledDataset) -> Result<()> {
        if train.num_classes() != self.t.num_classes() {
            return Err(Error::Config(format!(
                "oracle has {} classes, dataset has {}",
                self.t.num_classes(),
                train.num_classes()
            )));
        }
        Ok(())
    }

    fn predict(&self, data: &LabeledDataset) -> Result<Vec<Prediction>> {
        let truth = data.true_labels().ok_or(Error::MissingTrueLabels)?;
        let c = self.t.num_classes();
        truth
            .iter()
            .zip(data.ids())
            .map(|(&y, &id)| {
                if y >= c {
                    return Err(Error::Index { index: y, len: c });
                }
                let drawn = self.draw(y, id);
                let mut probs: Vec<f64> = self.t.row(y).iter().map(|p| 0.5 * p).collect();
                probs[drawn] += 0.5;
                let mut pred = Prediction::from_probabilities(probs);
                pred.label = drawn;
                Ok(pred)
            })
            .collect()
    }
}
