//! Brute-force k-nearest-neighbour classifier.
//!
//! With `k = 1` it memorizes the training set exactly, noisy labels
//! included. Vote fractions are Laplace-smoothed, `(count + 1) / (k + c)`,
//! so losses stay finite.

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learner::{Checkpoint, Learner, Prediction};

const ALPHA: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct KnnLearner {
    k: usize,
    c: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl KnnLearner {
    pub fn new(k: usize, c: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        Ok(Self {
            k,
            c,
            d: 0,
            features: Vec::new(),
            labels: Vec::new(),
        })
    }

    /// Convenience: a learner already fitted on `train`.
    pub fn train(train: &LabeledDataset, k: usize) -> Result<Self> {
        let mut l = Self::new(k, train.num_classes())?;
        l.fit(train)?;
        Ok(l)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Training indices of the `k` nearest neighbours of `x`, nearest first.
    /// Equal distances keep training order.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let k = self.k.min(self.labels.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, row) in self.features.chunks_exact(self.d.max(1)).enumerate() {
            let dist = if self.d == 0 {
                0.0
            } else {
                row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            };
            if best.len() == k && dist >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= dist);
            best.insert(pos, (dist, i));
            best.truncate(k);
        }
        if self.d == 0 {
            // no features: every training point is equally near
            return (0..k).collect();
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::Knn {
            k: self.k,
            d: self.d,
            c: self.c,
            features: self.features.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self> {
        match cp {
            Checkpoint::Knn { k, d, c, features, labels } => {
                if features.len() != labels.len() * d {
                    return Err(Error::Validation("knn checkpoint shape mismatch".into()));
                }
                let mut l = Self::new(k, c)?;
                l.d = d;
                l.features = features;
                l.labels = labels;
                Ok(l)
            }
            _ => Err(Error::Config("not a knn checkpoint".into())),
        }
    }
}

impl Learner for KnnLearner {
    fn num_classes(&self) -> usize {
        self.c
    }

    fn reinitialize(&mut self, _seed: u64) {
        self.features.clear();
        self.labels.clear();
        self.d = 0;
    }

    fn fit(&mut self, train: &LabeledDataset) -> Result<()> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        self.c = train.num_classes();
        self.d = train.dim();
        self.features = train.features().to_vec();
        self.labels = train.observed_labels().to_vec();
        Ok(())
    }

    fn predict(&self, data: &LabeledDataset) -> Result<Vec<Prediction>> {
        if self.labels.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if data.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: data.dim(),
            });
        }
        let k = self.k.min(self.labels.len()) as f64;
        Ok((0..data.len())
            .map(|i| {
                let mut votes = vec![0usize; self.c];
                for n in self.neighbors(data.row(i)) {
                    votes[self.labels[n]] += 1;
                }
                let denom = k + ALPHA * self.c as f64;
                Prediction::from_probabilities(
                    votes.iter().map(|&v| (v as f64 + ALPHA) / denom).collect(),
                )
            })
            .collect())
    }
}
