//! Label-noise learning toolkit.
//!
//! Models label corruption through a row-stochastic noise transition matrix
//! `T`, where `T[i][j]` is the probability that a sample of true class `i` is
//! observed with label `j`. On top of that model the crate provides:
//!
//! * closed-form predictions of test accuracy, label precision (LP) and label
//!   recall (LR) for a memorizing classifier trained on noisy data ([`theory`]),
//! * seeded synthetic datasets and their on-disk format ([`dataset`]),
//! * three learners behind one interface ([`learner`]): an exact
//!   distributional oracle, a k-nearest-neighbour memorizer and a small
//!   softmax network trained by SGD,
//! * noisy cross-validation (NCV) and its iterative variant (INCV) for
//!   selecting clean samples ([`selection`]),
//! * co-training of two learners that exchange small-loss samples
//!   ([`cotrain`]).
//!
//! Every random decision is driven by an explicit `u64` seed through a
//! ChaCha generator, so runs are reproducible across machines.

pub mod cotrain;
pub mod dataset;
pub mod error;
pub mod learner;
pub mod noise;
pub mod rng;
pub mod selection;
pub mod theory;

pub use cotrain::{
    batch_mix, cotrain, eps_s_from_theory, keep_count, CoTrainConfig, CoTrainReport, EpsSource,
};
pub use dataset::{BlobSpec, LabeledDataset, Manifest};
pub use error::{Error, Result};
pub use learner::{
    knn::KnnLearner, oracle::OracleLearner, softmax::SoftmaxLearner, Learner, Prediction,
    TrainConfig,
};
pub use noise::{NoiseKind, NoiseSpec, TransitionMatrix};
pub use selection::{
    confusion_matrix, incv, ncv, selection_metrics, ConfusionMatrix, IncvConfig, RemoveRatio,
    SelectionMetrics, SelectionResult,
};
