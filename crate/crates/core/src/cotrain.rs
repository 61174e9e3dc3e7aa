//! Robust training on a selected set with two cross-updating learners.
//!
//! Both learners see the same mini-batches. Each ranks the batch by its own
//! loss and hands its small-loss subset to the other for the SGD step. The
//! first `warmup` epochs use only the selected set `S`; later ones mix in a
//! smaller batch from the candidate set `C`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learner::{accuracy, IncrementalLearner, TrainConfig};
use crate::noise::NoiseKind;
use crate::rng::{derive_seed, rng_from_seed};
use crate::theory::{asymmetric_lp, symmetric_lp};

/// `floor(batch_total * (1 - eps_s * min(e / 10, 1)))`, at least 1.
pub fn keep_count(epoch: usize, batch_total: usize, eps_s: f64) -> usize {
    let frac = (epoch as f64 / 10.0).min(1.0);
    let n = (batch_total as f64 * (1.0 - eps_s * frac)).floor();
    (n as usize).max(1)
}

/// Batch sizes drawn from `S` and `C`. The `C` share is capped at half the
/// base batch.
pub fn batch_mix(size_s: usize, size_c: usize, base: usize) -> Result<(usize, usize)> {
    if size_s == 0 {
        return Err(Error::Validation("selected set is empty".into()));
    }
    if base == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    if size_c == 0 {
        return Ok((base, 0));
    }
    let ratio = (size_c as f64 / size_s as f64).min(0.5);
    Ok((base, (base as f64 * ratio).round() as usize))
}

/// Where the noise ratio of `S` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsSource {
    /// Passed in directly.
    Given,
    /// `1 - LP` measured with true labels.
    Measured,
    /// Predicted from the estimated dataset noise ratio.
    Theory,
}

/// Predicted noise ratio of an NCV selection, `1 - LP(eps_hat)`.
pub fn eps_s_from_theory(kind: NoiseKind, eps_hat: f64, c: usize) -> Result<f64> {
    let lp = match kind {
        NoiseKind::Symmetric => symmetric_lp(eps_hat, c)?,
        NoiseKind::Asymmetric => asymmetric_lp(eps_hat)?,
        NoiseKind::Custom => {
            return Err(Error::Config("no closed form for custom noise".into()));
        }
    };
    Ok(1.0 - lp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTrainConfig {
    /// Epochs trained on `S` alone.
    pub warmup: usize,
    pub epochs: usize,
    pub base_batch: usize,
    pub eps_s: f64,
    pub eps_source: EpsSource,
    /// Learning-rate schedule; `epochs`, `batch_size` and `seed` are ignored.
    pub train: TrainConfig,
    pub seed: u64,
}

impl CoTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup > self.epochs {
            return Err(Error::Config(format!(
                "warm-up {} exceeds total epochs {}",
                self.warmup, self.epochs
            )));
        }
        if self.base_batch < 2 {
            return Err(Error::Config("base batch must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.eps_s) {
            return Err(Error::Config(format!("eps_s must be in [0, 1), got {}", self.eps_s)));
        }
        if !(self.train.learning_rate > 0.0) || !(self.train.decay_factor > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub n_e: usize,
    pub acc_f1: Option<f64>,
    pub acc_f2: Option<f64>,
    pub c_samples_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTrainReport {
    pub eps_s: f64,
    pub eps_source: EpsSource,
    pub epochs: Vec<EpochRecord>,
}

pub const REPORT_CSV_HEADER: &str = "epoch,n_e,acc_f1,acc_f2,c_samples_used";

impl CoTrainReport {
    /// Accuracies without a test set are left empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.n_e,
                opt(r.acc_f1),
                opt(r.acc_f2),
                r.c_samples_used
            ));
        }
        out
    }

    pub fn final_accuracy(&self) -> Option<(f64, f64)> {
        let last = self.epochs.last()?;
        Some((last.acc_f1?, last.acc_f2?))
    }
}

/// One batch step as seen by an observer, before either update. Rows index
/// the concatenation of `S` then `C`.
pub struct StepView<'a, L> {
    pub epoch: usize,
    pub batch: &'a [usize],
    pub f1: &'a L,
    pub f2: &'a L,
    /// Rows `f1` kept by its own loss; these update `f2`.
    pub kept_by_f1: &'a [usize],
    pub kept_by_f2: &'a [usize],
    pub combined: &'a LabeledDataset,
}

/// S-batch row order for a 1-based epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(derive_seed(seed, 1), epoch as u64)));
    order
}

/// Infinite reshuffling stream over `0..n`, restarted every epoch.
struct CycleStream {
    n: usize,
    seed: u64,
    cycle: u64,
    order: Vec<usize>,
    pos: usize,
}

impl CycleStream {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            cycle: 0,
            order: Vec::new(),
            pos: 0,
        }
    }

    fn take(&mut self, k: usize, out: &mut Vec<usize>) {
        for _ in 0..k {
            if self.pos == self.order.len() {
                self.order = (0..self.n).collect();
                self.order.shuffle(&mut rng_from_seed(derive_seed(self.seed, self.cycle)));
                self.cycle += 1;
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
    }
}

/// The `keep` rows of `batch` with the smallest loss, in batch order. Ties
/// go to the earlier batch position.
fn small_loss<L: IncrementalLearner>(
    learner: &L,
    data: &LabeledDataset,
    batch: &[usize],
    keep: usize,
) -> Result<Vec<usize>> {
    let losses = learner.batch_losses(data, batch)?;
    let mut pos: Vec<usize> = (0..batch.len()).collect();
    pos.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    pos.truncate(keep);
    pos.sort_unstable();
    Ok(pos.into_iter().map(|p| batch[p]).collect())
}

fn concat(s: &LabeledDataset, c: &LabeledDataset) -> Result<LabeledDataset> {
    if c.is_empty() {
        return Ok(s.clone());
    }
    if s.dim() != c.dim() || s.num_classes() != c.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: c.dim(),
        });
    }
    let mut features = s.features().to_vec();
    features.extend_from_slice(c.features());
    let mut observed = s.observed_labels().to_vec();
    observed.extend_from_slice(c.observed_labels());
    let truth = match (s.true_labels(), c.true_labels()) {
        (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
        _ => None,
    };
    let mut ids = s.ids().to_vec();
    ids.extend_from_slice(c.ids());
    LabeledDataset::new(features, s.dim(), observed, truth, ids, s.num_classes())
}

/// Co-trains two learners built by `factory(seed)` and `factory(seed + 1)`.
pub fn cotrain<L, F>(
    s: &LabeledDataset,
    c: &LabeledDataset,
    cfg: &CoTrainConfig,
    factory: F,
    clean_test: Option<&LabeledDataset>,
) -> Result<(L, L, CoTrainReport)>
where
    L: IncrementalLearner,
    F: FnMut(u64) -> Result<L>,
{
    cotrain_with_observer(s, c, cfg, factory, clean_test, |_| {})
}

/// [`cotrain`], calling `observer` before every pair of updates.
pub fn cotrain_with_observer<L, F, O>(
    s: &LabeledDataset,
    c: &LabeledDataset,
    cfg: &CoTrainConfig,
    mut factory: F,
    clean_test: Option<&LabeledDataset>,
    mut observer: O,
) -> Result<(L, L, CoTrainReport)>
where
    L: IncrementalLearner,
    F: FnMut(u64) -> Result<L>,
    O: FnMut(&StepView<'_, L>),
{
    cfg.validate()?;
    let (base_s, base_c) = batch_mix(s.len(), c.len(), cfg.base_batch)?;
    let combined = concat(s, c)?;
    let n_s = s.len();
    let mut f1 = factory(cfg.seed)?;
    let mut f2 = factory(cfg.seed.wrapping_add(1))?;
    let batches_per_epoch = n_s.div_ceil(base_s);
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let rate = cfg.train.rate_at(epoch - 1);
        let use_c = epoch > cfg.warmup && base_c > 0;
        let order = epoch_order(n_s, cfg.seed, epoch);
        let mut c_stream = CycleStream::new(c.len(), derive_seed(derive_seed(cfg.seed, 2), epoch as u64));
        let mut c_used = 0usize;
        let mut batch = Vec::with_capacity(base_s + base_c);
        for b in 0..batches_per_epoch {
            batch.clear();
            let chunk = &order[b * base_s..((b + 1) * base_s).min(n_s)];
            batch.extend_from_slice(chunk);
            if use_c {
                let before = batch.len();
                c_stream.take(base_c, &mut batch);
                for r in &mut batch[before..] {
                    *r += n_s;
                }
                c_used += base_c;
            }
            let keep = keep_count(epoch, chunk.len(), cfg.eps_s).min(batch.len());
            let kept1 = small_loss(&f1, &combined, &batch, keep)?;
            let kept2 = small_loss(&f2, &combined, &batch, keep)?;
            observer(&StepView {
                epoch,
                batch: &batch,
                f1: &f1,
                f2: &f2,
                kept_by_f1: &kept1,
                kept_by_f2: &kept2,
                combined: &combined,
            });
            let relabel = |e: Error| match e {
                Error::Divergence { loss, .. } => Error::Divergence { epoch, loss },
                other => other,
            };
            f1.sgd_step(&combined, &kept2, rate).map_err(relabel)?;
            f2.sgd_step(&combined, &kept1, rate).map_err(relabel)?;
        }
        let (acc_f1, acc_f2) = match clean_test {
            Some(test) => {
                let truth = test.true_labels().unwrap_or(test.observed_labels());
                (
                    Some(accuracy(&f1.predict(test)?, truth)?),
                    Some(accuracy(&f2.predict(test)?, truth)?),
                )
            }
            None => (None, None),
        };
        log::debug!("cotrain epoch {epoch}: acc {acc_f1:?} / {acc_f2:?}, C used {c_used}");
        records.push(EpochRecord {
            epoch,
            n_e: keep_count(epoch, base_s, cfg.eps_s),
            acc_f1,
            acc_f2,
            c_samples_used: c_used,
        });
    }
    let report = CoTrainReport {
        eps_s: cfg.eps_s,
        eps_source: cfg.eps_source,
        epochs: records,
    };
    Ok((f1, f2, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_blobs, make_blobs_stream, BlobSpec};
    use crate::learner::softmax::SoftmaxLearner;

    #[test]
    fn keep_count_examples() {
        assert_eq!(keep_count(0, 128, 0.1), 128);
        assert_eq!(keep_count(10, 128, 0.1), 115);
        assert_eq!(keep_count(5, 128, 0.5), 96);
        assert_eq!(keep_count(20, 128, 0.1), 115);
        assert_eq!(keep_count(10, 2, 0.99), 1);
    }

    #[test]
    fn batch_mix_examples() {
        assert_eq!(batch_mix(20000, 30000, 128).unwrap(), (128, 64));
        assert_eq!(batch_mix(20000, 5000, 128).unwrap(), (128, 32));
        assert_eq!(batch_mix(77, 0, 128).unwrap(), (128, 0));
        assert!(batch_mix(0, 10, 128).is_err());
    }

    #[test]
    fn eps_from_theory() {
        // symmetric, c = 10, eps = 0.5: LP = 0.25 / (0.25 + 0.25 / 9)
        let e = eps_s_from_theory(NoiseKind::Symmetric, 0.5, 10).unwrap();
        assert!((e - 0.1).abs() < 1e-12);
        assert!(eps_s_from_theory(NoiseKind::Custom, 0.5, 10).is_err());
    }

    fn cfg(warmup: usize, epochs: usize, eps_s: f64) -> CoTrainConfig {
        CoTrainConfig {
            warmup,
            epochs,
            base_batch: 32,
            eps_s,
            eps_source: EpsSource::Given,
            train: TrainConfig {
                learning_rate: 0.1,
                ..TrainConfig::default()
            },
            seed: 11,
        }
    }

    fn blobs(seed: u64) -> (LabeledDataset, LabeledDataset) {
        let spec = BlobSpec {
            c: 4,
            d: 6,
            n_per_class: 100,
            separation: 8.0,
            spread: 1.0,
            seed,
        };
        (make_blobs(&spec).unwrap(), make_blobs_stream(&spec, 2).unwrap())
    }

    fn factory(d: usize, c: usize, train: TrainConfig) -> impl FnMut(u64) -> Result<SoftmaxLearner> {
        move |seed| SoftmaxLearner::new(d, c, None, TrainConfig { seed, ..train.clone() })
    }

    #[test]
    fn rejects_bad_config() {
        let (s, _) = blobs(1);
        let c = s.subset(&[]);
        let bad = cfg(5, 3, 0.0);
        let r = cotrain(&s, &c, &bad, factory(6, 4, bad.train.clone()), None);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn clean_separable_reaches_high_accuracy() {
        let (s, test) = blobs(2);
        let empty = s.subset(&[]);
        let config = cfg(0, 10, 0.0);
        let mut sizes = Vec::new();
        let (_, _, report) = cotrain_with_observer(
            &s,
            &empty,
            &config,
            factory(6, 4, config.train.clone()),
            Some(&test),
            |v| sizes.push((v.batch.len(), v.kept_by_f1.len(), v.kept_by_f2.len())),
        )
        .unwrap();
        assert!(sizes.iter().all(|&(b, k1, k2)| b == k1 && b == k2));
        let (a1, a2) = report.final_accuracy().unwrap();
        assert!(a1 >= 0.99 && a2 >= 0.99, "{a1} {a2}");
        assert_eq!(report.epochs.len(), 10);
    }

    #[test]
    fn warmup_only_never_touches_c() {
        let (d, _) = blobs(3);
        let s = d.subset(&(0..300).collect::<Vec<_>>());
        let c = d.subset(&(300..400).collect::<Vec<_>>());
        let config = cfg(4, 4, 0.2);
        let (_, _, report) = cotrain(&s, &c, &config, factory(6, 4, config.train.clone()), None).unwrap();
        assert!(report.epochs.iter().all(|r| r.c_samples_used == 0));
        assert!(report.epochs.iter().all(|r| r.acc_f1.is_none()));
    }

    #[test]
    fn c_consumed_after_warmup() {
        let (d, _) = blobs(3);
        let s = d.subset(&(0..300).collect::<Vec<_>>());
        let c = d.subset(&(300..400).collect::<Vec<_>>());
        let config = cfg(2, 5, 0.2);
        let (_, _, report) = cotrain(&s, &c, &config, factory(6, 4, config.train.clone()), None).unwrap();
        // |B_C| = round(32 * 1/3) = 11, 10 batches per epoch
        let used: Vec<usize> = report.epochs.iter().map(|r| r.c_samples_used).collect();
        assert_eq!(used, vec![0, 0, 110, 110, 110]);
        let n_e: Vec<usize> = report.epochs.iter().map(|r| r.n_e).collect();
        assert_eq!(n_e, (1..=5).map(|e| keep_count(e, 32, 0.2)).collect::<Vec<_>>());
    }

    #[test]
    fn updates_are_exchanged() {
        let (d, _) = blobs(4);
        let s = d.subset(&(0..300).collect::<Vec<_>>());
        let c = d.subset(&(300..400).collect::<Vec<_>>());
        let config = cfg(1, 4, 0.3);
        let mut steps = 0;
        cotrain_with_observer(&s, &c, &config, factory(6, 4, config.train.clone()), None, |v| {
            let keep = v.kept_by_f1.len();
            let own = |l: &SoftmaxLearner| {
                let losses = l.batch_losses(v.combined, v.batch).unwrap();
                let mut p: Vec<usize> = (0..v.batch.len()).collect();
                p.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
                let mut rows: Vec<usize> = p[..keep].iter().map(|&i| v.batch[i]).collect();
                rows.sort_unstable();
                rows
            };
            let mut k1 = v.kept_by_f1.to_vec();
            let mut k2 = v.kept_by_f2.to_vec();
            k1.sort_unstable();
            k2.sort_unstable();
            assert_eq!(own(v.f1), k1);
            assert_eq!(own(v.f2), k2);
            steps += 1;
        })
        .unwrap();
        assert_eq!(steps, 4 * 10);
    }

    #[test]
    fn degenerates_to_plain_training() {
        let (s, _) = blobs(5);
        let empty = s.subset(&[]);
        let config = cfg(3, 3, 0.0);
        let (f1, f2, _) = cotrain(&s, &empty, &config, factory(6, 4, config.train.clone()), None).unwrap();
        let plain = |seed: u64| {
            let mut l =
                SoftmaxLearner::new(6, 4, None, TrainConfig { seed, ..config.train.clone() }).unwrap();
            for epoch in 1..=3 {
                let order = epoch_order(s.len(), config.seed, epoch);
                for chunk in order.chunks(32) {
                    l.sgd_step(&s, chunk, config.train.rate_at(epoch - 1)).unwrap();
                }
            }
            l
        };
        assert_eq!(f1.params(), plain(11).params());
        assert_eq!(f2.params(), plain(12).params());
        assert_ne!(f1.params(), f2.params());
    }

    #[test]
    fn report_csv() {
        let report = CoTrainReport {
            eps_s: 0.1,
            eps_source: EpsSource::Theory,
            epochs: vec![EpochRecord {
                epoch: 1,
                n_e: 126,
                acc_f1: Some(0.5),
                acc_f2: None,
                c_samples_used: 0,
            }],
        };
        assert_eq!(report.to_csv(), "epoch,n_e,acc_f1,acc_f2,c_samples_used\n1,126,0.500000,,0\n");
    }
}
