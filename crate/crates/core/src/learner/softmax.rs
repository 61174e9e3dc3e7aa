//! Softmax classifier trained by mini-batch SGD on cross-entropy.
//!
//! Without a hidden layer this is multinomial logistic regression; with
//! `hidden = Some(h)` it is `softmax(W2 relu(W1 x + b1) + b2)`.
//!
//! Parameters are kept in one flat vector. Linear layout: `W (c x d)`, `b (c)`.
//! Hidden layout: `W1 (h x d)`, `b1 (h)`, `W2 (c x h)`, `b2 (c)`. All
//! matrices are row-major.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learner::{Checkpoint, IncrementalLearner, Learner, Prediction, TrainConfig, MIN_PROB};
use crate::rng::{derive_seed, rng_from_seed};

/// Mean batch loss above this aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Gaussian weights scaled by fan-in, zero biases.
    Random,
    Zeros,
}

#[derive(Debug, Clone)]
pub struct SoftmaxLearner {
    d: usize,
    c: usize,
    hidden: Option<usize>,
    config: TrainConfig,
    init: Init,
    seed: u64,
    params: Vec<f64>,
}

impl SoftmaxLearner {
    pub fn new(d: usize, c: usize, hidden: Option<usize>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if c < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {c}")));
        }
        if hidden == Some(0) {
            return Err(Error::Config("hidden width must be >= 1".into()));
        }
        let seed = config.seed;
        let mut l = Self {
            d,
            c,
            hidden,
            config,
            init: Init::Random,
            seed,
            params: Vec::new(),
        };
        l.reinitialize(seed);
        Ok(l)
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self.reinitialize(self.seed);
        self
    }

    pub fn num_params(&self) -> usize {
        match self.hidden {
            None => self.c * self.d + self.c,
            Some(h) => h * self.d + h + self.c * h + self.c,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                left: params.len(),
                right: self.num_params(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn hidden(&self) -> Option<usize> {
        self.hidden
    }

    fn check_dim(&self, data: &LabeledDataset) -> Result<()> {
        if data.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: data.dim(),
            });
        }
        Ok(())
    }

    /// Logits for one input, writing hidden activations into `act` when present.
    fn forward(&self, x: &[f64], act: &mut [f64], logits: &mut [f64]) {
        let (c, d) = (self.c, self.d);
        match self.hidden {
            None => {
                let (w, b) = self.params.split_at(c * d);
                for k in 0..c {
                    logits[k] = b[k] + dot(&w[k * d..(k + 1) * d], x);
                }
            }
            Some(h) => {
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                for u in 0..h {
                    act[u] = (b1[u] + dot(&w1[u * d..(u + 1) * d], x)).max(0.0);
                }
                for k in 0..c {
                    logits[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], act);
                }
            }
        }
    }

    /// Mean (unclamped) cross-entropy over `rows` at the current parameters.
    pub fn loss(&self, data: &LabeledDataset, rows: &[usize]) -> Result<f64> {
        self.check_dim(data)?;
        let mut act = vec![0.0; self.hidden.unwrap_or(0)];
        let mut logits = vec![0.0; self.c];
        let labels = data.observed_labels();
        let total: f64 = rows
            .iter()
            .map(|&i| {
                self.forward(data.row(i), &mut act, &mut logits);
                log_sum_exp(&logits) - logits[labels[i]]
            })
            .sum();
        Ok(total / rows.len().max(1) as f64)
    }

    /// Mean cross-entropy over `rows` and its gradient with respect to the
    /// flat parameter vector.
    pub fn loss_and_grad(&self, data: &LabeledDataset, rows: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(data)?;
        let (c, d) = (self.c, self.d);
        let h = self.hidden.unwrap_or(0);
        let mut grad = vec![0.0; self.params.len()];
        let mut act = vec![0.0; h];
        let mut logits = vec![0.0; c];
        let mut delta_hidden = vec![0.0; h];
        let mut total = 0.0;
        let labels = data.observed_labels();
        let scale = 1.0 / rows.len().max(1) as f64;
        for &i in rows {
            let x = data.row(i);
            self.forward(x, &mut act, &mut logits);
            let lse = log_sum_exp(&logits);
            let y = labels[i];
            total += lse - logits[y];
            let mut p: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
            // dL/dlogits = p - onehot(y)
            p[y] -= 1.0;
            match self.hidden {
                None => {
                    let (gw, gb) = grad.split_at_mut(c * d);
                    for k in 0..c {
                        let g = p[k] * scale;
                        gb[k] += g;
                        axpy(g, x, &mut gw[k * d..(k + 1) * d]);
                    }
                }
                Some(h) => {
                    let w2 = &self.params[h * d + h..h * d + h + c * h];
                    let (gw1, rest) = grad.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(c * h);
                    delta_hidden.iter_mut().for_each(|v| *v = 0.0);
                    for k in 0..c {
                        let g = p[k] * scale;
                        gb2[k] += g;
                        axpy(g, &act, &mut gw2[k * h..(k + 1) * h]);
                        axpy(g, &w2[k * h..(k + 1) * h], &mut delta_hidden);
                    }
                    for u in 0..h {
                        if act[u] > 0.0 {
                            let g = delta_hidden[u];
                            gb1[u] += g;
                            axpy(g, x, &mut gw1[u * d..(u + 1) * d]);
                        }
                    }
                }
            }
        }
        Ok((total * scale, grad))
    }

    /// Largest relative error between [`Self::loss_and_grad`] and central
    /// differences of [`Self::loss`] with step `step`, taken over every
    /// parameter. The denominator is `max(|analytic|, |numeric|, floor)`.
    pub fn max_gradient_error(&self, data: &LabeledDataset, rows: &[usize], step: f64, floor: f64) -> Result<f64> {
        let (_, grad) = self.loss_and_grad(data, rows)?;
        let mut probe = self.clone();
        let mut worst = 0.0f64;
        for (k, &g) in grad.iter().enumerate() {
            let w = self.params[k];
            probe.params[k] = w + step;
            let up = probe.loss(data, rows)?;
            probe.params[k] = w - step;
            let down = probe.loss(data, rows)?;
            probe.params[k] = w;
            let numeric = (up - down) / (2.0 * step);
            let denom = g.abs().max(numeric.abs()).max(floor);
            worst = worst.max((g - numeric).abs() / denom);
        }
        Ok(worst)
    }

    fn epoch_shuffle_seed(&self, epoch: usize) -> u64 {
        derive_seed(derive_seed(self.seed, 1), epoch as u64)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::Softmax {
            d: self.d,
            c: self.c,
            hidden: self.hidden,
            config: self.config.clone(),
            seed: self.seed,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self> {
        match cp {
            Checkpoint::Softmax {
                d,
                c,
                hidden,
                config,
                seed,
                params,
            } => {
                let mut l = Self::new(d, c, hidden, config)?;
                l.seed = seed;
                l.set_params(params)?;
                Ok(l)
            }
            _ => Err(Error::Config("not a softmax checkpoint".into())),
        }
    }
}

impl Learner for SoftmaxLearner {
    fn num_classes(&self) -> usize {
        self.c
    }

    fn reinitialize(&mut self, seed: u64) {
        self.seed = seed;
        let mut params = vec![0.0; self.num_params()];
        if self.init == Init::Random {
            let mut rng = rng_from_seed(derive_seed(seed, 0));
            let (c, d) = (self.c, self.d);
            let mut fill = |slice: &mut [f64], fan_in: usize, gain: f64| {
                let std = (gain / fan_in.max(1) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("finite std");
                slice.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            };
            match self.hidden {
                None => fill(&mut params[..c * d], d, 1.0),
                Some(h) => {
                    fill(&mut params[..h * d], d, 2.0);
                    let start = h * d + h;
                    fill(&mut params[start..start + c * h], h, 1.0);
                }
            }
        }
        self.params = params;
    }

    fn fit(&mut self, train: &LabeledDataset) -> Result<()> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        self.check_dim(train)?;
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng_from_seed(self.epoch_shuffle_seed(epoch)));
            let rate = self.config.rate_at(epoch);
            let mut sum = 0.0;
            let mut batches = 0usize;
            for batch in order.chunks(self.config.batch_size) {
                let loss = self.sgd_step(train, batch, rate).map_err(|e| match e {
                    Error::Divergence { loss, .. } => Error::Divergence { epoch, loss },
                    other => other,
                })?;
                sum += loss;
                batches += 1;
            }
            log::trace!("epoch {epoch}: mean loss {}", sum / batches as f64);
        }
        Ok(())
    }

    fn predict(&self, data: &LabeledDataset) -> Result<Vec<Prediction>> {
        self.check_dim(data)?;
        let mut act = vec![0.0; self.hidden.unwrap_or(0)];
        let mut logits = vec![0.0; self.c];
        Ok((0..data.len())
            .map(|i| {
                self.forward(data.row(i), &mut act, &mut logits);
                let lse = log_sum_exp(&logits);
                let log_probabilities: Vec<f64> = logits.iter().map(|z| z - lse).collect();
                let probabilities = log_probabilities.iter().map(|l| l.exp()).collect();
                let mut p = Prediction::from_probabilities(probabilities);
                p.log_probabilities = log_probabilities;
                p
            })
            .collect())
    }
}

impl IncrementalLearner for SoftmaxLearner {
    fn batch_losses(&self, data: &LabeledDataset, rows: &[usize]) -> Result<Vec<f64>> {
        self.check_dim(data)?;
        let mut act = vec![0.0; self.hidden.unwrap_or(0)];
        let mut logits = vec![0.0; self.c];
        let labels = data.observed_labels();
        Ok(rows
            .iter()
            .map(|&i| {
                self.forward(data.row(i), &mut act, &mut logits);
                let lse = log_sum_exp(&logits);
                (lse - logits[labels[i]]).min(-MIN_PROB.ln())
            })
            .collect())
    }

    fn sgd_step(&mut self, data: &LabeledDataset, rows: &[usize], learning_rate: f64) -> Result<f64> {
        if rows.is_empty() {
            return Ok(0.0);
        }
        let (loss, grad) = self.loss_and_grad(data, rows)?;
        if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { epoch: 0, loss });
        }
        axpy(-learning_rate, &grad, &mut self.params);
        Ok(loss)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
