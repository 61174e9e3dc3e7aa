//! Noise transition matrices and label corruption.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, sample_categorical};

const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic `c x c` matrix with `get(i, j) = P(observed = j | true = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    c: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds a matrix from rows, checking shape, range and row sums.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let c = rows.len();
        if c < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {c}")));
        }
        let mut entries = Vec::with_capacity(c * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Domain(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("entry ({i},{j}) = {v} outside [0,1]")));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Domain(format!("row {i} sums to {sum}")));
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { c, entries })
    }

    pub fn identity(c: usize) -> Result<Self> {
        Self::symmetric(c, 0.0)
    }

    /// Symmetric noise: `1 - ratio` on the diagonal, `ratio / (c - 1)` elsewhere.
    pub fn symmetric(c: usize, ratio: f64) -> Result<Self> {
        check_classes(c)?;
        check_ratio(ratio)?;
        let threshold = (c - 1) as f64 / c as f64;
        if ratio >= threshold && ratio > 0.0 {
            warn!("symmetric ratio {ratio} >= (c-1)/c = {threshold}: diagonal no longer dominates");
        }
        let off = ratio / (c - 1) as f64;
        let mut entries = vec![off; c * c];
        for i in 0..c {
            entries[i * c + i] = 1.0 - ratio;
        }
        Ok(Self { c, entries })
    }

    /// Asymmetric noise: class `i` keeps `1 - ratio` and sends `ratio` to
    /// `mapping[i]`.
    pub fn asymmetric(c: usize, ratio: f64, mapping: &[usize]) -> Result<Self> {
        check_classes(c)?;
        check_ratio(ratio)?;
        validate_mapping(c, mapping)?;
        if ratio >= 0.5 {
            warn!("asymmetric ratio {ratio} >= 0.5: diagonal no longer dominates");
        }
        let mut entries = vec![0.0; c * c];
        for (i, &target) in mapping.iter().enumerate() {
            entries[i * c + i] = 1.0 - ratio;
            entries[i * c + target] = ratio;
        }
        Ok(Self { c, entries })
    }

    pub fn num_classes(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.c + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.c..(i + 1) * self.c]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.c).map(|i| self.row(i).to_vec()).collect()
    }

    /// True when every diagonal entry is the strict maximum of its row.
    pub fn is_diagonal_dominant(&self) -> bool {
        (0..self.c).all(|i| {
            let d = self.get(i, i);
            (0..self.c).all(|j| j == i || self.get(i, j) < d)
        })
    }

    /// Draws an observed label for a sample of true class `class` from `u ~ U[0,1)`.
    #[inline]
    pub fn sample_row(&self, class: usize, u: f64) -> usize {
        sample_categorical(self.row(class), u)
    }
}

fn check_classes(c: usize) -> Result<()> {
    if c < 2 {
        return Err(Error::Domain(format!("need at least 2 classes, got {c}")));
    }
    Ok(())
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Domain(format!("noise ratio {ratio} outside [0,1]")));
    }
    Ok(())
}

/// Checks that `mapping` is a permutation of `0..c` without fixed points.
pub fn validate_mapping(c: usize, mapping: &[usize]) -> Result<()> {
    if mapping.len() != c {
        return Err(Error::Domain(format!(
            "mapping has {} entries, expected {c}",
            mapping.len()
        )));
    }
    let mut seen = vec![false; c];
    for (i, &t) in mapping.iter().enumerate() {
        if t >= c {
            return Err(Error::Domain(format!("mapping target {t} out of range")));
        }
        if t == i {
            return Err(Error::Domain(format!("mapping has a fixed point at {i}")));
        }
        if std::mem::replace(&mut seen[t], true) {
            return Err(Error::Domain(format!("mapping is not a permutation: {t} repeated")));
        }
    }
    Ok(())
}

/// `i -> (i + 1) mod c`.
pub fn cyclic_mapping(c: usize) -> Vec<usize> {
    (0..c).map(|i| (i + 1) % c).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
    Custom,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(NoiseKind::Symmetric),
            "asymmetric" => Ok(NoiseKind::Asymmetric),
            "custom" => Ok(NoiseKind::Custom),
            other => Err(Error::Domain(format!("unknown noise kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Asymmetric => "asymmetric",
            NoiseKind::Custom => "custom",
        })
    }
}

/// Corruption recipe as recorded in a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    pub mapping: Option<Vec<usize>>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn symmetric(ratio: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Symmetric,
            ratio,
            mapping: None,
            seed,
        }
    }

    /// Asymmetric spec; `mapping` defaults to the cyclic shift when `None`.
    pub fn asymmetric(c: usize, ratio: f64, mapping: Option<Vec<usize>>, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Asymmetric,
            ratio,
            mapping: Some(mapping.unwrap_or_else(|| cyclic_mapping(c))),
            seed,
        }
    }

    /// Transition matrix for `c` classes. Custom specs carry no matrix.
    pub fn matrix(&self, c: usize) -> Result<TransitionMatrix> {
        match self.kind {
            NoiseKind::Symmetric => TransitionMatrix::symmetric(c, self.ratio),
            NoiseKind::Asymmetric => {
                let mapping = self.mapping.clone().unwrap_or_else(|| cyclic_mapping(c));
                TransitionMatrix::asymmetric(c, self.ratio, &mapping)
            }
            NoiseKind::Custom => Err(Error::Domain(
                "custom noise spec does not define a matrix".into(),
            )),
        }
    }
}

/// Draws one observed label per true label from the matching row of `t`.
///
/// Consumes exactly one uniform draw per sample, in index order.
pub fn corrupt_labels(true_labels: &[usize], t: &TransitionMatrix, seed: u64) -> Result<Vec<usize>> {
    let c = t.num_classes();
    if let Some(&bad) = true_labels.iter().find(|&&y| y >= c) {
        return Err(Error::Index { index: bad, len: c });
    }
    let mut rng = rng_from_seed(seed);
    Ok(true_labels
        .iter()
        .map(|&y| {
            let u: f64 = rng.random();
            t.sample_row(y, u)
        })
        .collect())
}

/// Fraction of positions where `observed` and `truth` differ.
pub fn actual_noise_ratio(observed: &[usize], truth: &[usize]) -> Result<f64> {
    if observed.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: truth.len(),
        });
    }
    if observed.is_empty() {
        return Ok(0.0);
    }
    let wrong = observed.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / observed.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_five_classes() {
        let t = TransitionMatrix::symmetric(5, 0.4).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 0.6 } else { 0.1 };
                assert_abs_diff_eq!(t.get(i, j), want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = TransitionMatrix::symmetric(7, 0.0).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(t.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        let a = TransitionMatrix::asymmetric(4, 0.0, &cyclic_mapping(4)).unwrap();
        assert_eq!(a, TransitionMatrix::identity(4).unwrap());
    }

    #[test]
    fn full_flip_two_classes() {
        let t = TransitionMatrix::symmetric(2, 1.0).unwrap();
        assert_eq!(t.rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn symmetric_rejects_bad_ratio() {
        assert!(matches!(TransitionMatrix::symmetric(3, 1.5), Err(Error::Domain(_))));
        assert!(matches!(TransitionMatrix::symmetric(3, -0.1), Err(Error::Domain(_))));
        assert!(matches!(TransitionMatrix::symmetric(1, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn asymmetric_cyclic_five() {
        let t = TransitionMatrix::asymmetric(5, 0.4, &cyclic_mapping(5)).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(t.get(i, i), 0.6, epsilon = 1e-15);
            assert_abs_diff_eq!(t.get(i, (i + 1) % 5), 0.4, epsilon = 1e-15);
            let rest: f64 = (0..5)
                .filter(|&j| j != i && j != (i + 1) % 5)
                .map(|j| t.get(i, j))
                .sum();
            assert_eq!(rest, 0.0);
        }
    }

    #[test]
    fn asymmetric_three_by_hand() {
        let t = TransitionMatrix::asymmetric(3, 0.25, &[1, 2, 0]).unwrap();
        assert_eq!(
            t.rows(),
            vec![
                vec![0.75, 0.25, 0.0],
                vec![0.0, 0.75, 0.25],
                vec![0.25, 0.0, 0.75]
            ]
        );
    }

    #[test]
    fn asymmetric_rejects_fixed_point_and_non_permutation() {
        assert!(TransitionMatrix::asymmetric(3, 0.2, &[0, 2, 1]).is_err());
        assert!(TransitionMatrix::asymmetric(3, 0.2, &[1, 0, 0]).is_err());
        assert!(TransitionMatrix::asymmetric(3, 0.2, &[1, 2]).is_err());
        assert!(TransitionMatrix::asymmetric(3, 1.2, &[1, 2, 0]).is_err());
    }

    #[test]
    fn from_rows_validates() {
        assert!(TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.7]]).is_err());
        assert!(TransitionMatrix::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]).is_ok());
    }

    #[test]
    fn identity_corruption_is_noop() {
        let labels: Vec<usize> = (0..500).map(|i| i % 5).collect();
        let t = TransitionMatrix::identity(5).unwrap();
        assert_eq!(corrupt_labels(&labels, &t, 3).unwrap(), labels);
    }

    #[test]
    fn corruption_rate_matches_ratio() {
        let labels: Vec<usize> = (0..100_000).map(|i| i % 10).collect();
        let t = TransitionMatrix::symmetric(10, 0.5).unwrap();
        let noisy = corrupt_labels(&labels, &t, 11).unwrap();
        let ratio = actual_noise_ratio(&noisy, &labels).unwrap();
        assert!((ratio - 0.5).abs() <= 0.005, "ratio {ratio}");
    }

    #[test]
    fn corruption_is_deterministic() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 4).collect();
        let t = TransitionMatrix::symmetric(4, 0.3).unwrap();
        assert_eq!(
            corrupt_labels(&labels, &t, 99).unwrap(),
            corrupt_labels(&labels, &t, 99).unwrap()
        );
        assert_ne!(
            corrupt_labels(&labels, &t, 99).unwrap(),
            corrupt_labels(&labels, &t, 100).unwrap()
        );
    }

    #[test]
    fn corruption_rejects_out_of_range() {
        let t = TransitionMatrix::identity(3).unwrap();
        assert!(matches!(
            corrupt_labels(&[0, 3], &t, 0),
            Err(Error::Index { index: 3, len: 3 })
        ));
    }

    #[test]
    fn empirical_rows_converge() {
        let c = 5;
        let n = 20_000;
        let t = TransitionMatrix::asymmetric(c, 0.3, &cyclic_mapping(c)).unwrap();
        let truth: Vec<usize> = (0..n * c).map(|i| i % c).collect();
        for seed in [1u64, 2, 3] {
            let noisy = corrupt_labels(&truth, &t, seed).unwrap();
            let mut counts = vec![0usize; c * c];
            for (&y, &o) in truth.iter().zip(&noisy) {
                counts[y * c + o] += 1;
            }
            let tol = 3.0 * (0.25 / n as f64).sqrt();
            for i in 0..c {
                for j in 0..c {
                    let freq = counts[i * c + j] as f64 / n as f64;
                    assert!((freq - t.get(i, j)).abs() <= tol);
                }
            }
        }
    }

    #[test]
    fn noise_ratio_hand_cases() {
        assert_eq!(actual_noise_ratio(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(actual_noise_ratio(&[1, 2, 3], &[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(actual_noise_ratio(&[0, 1, 2, 3], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert!(matches!(
            actual_noise_ratio(&[0], &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn noise_spec_json_shape() {
        let spec = NoiseSpec::asymmetric(3, 0.2, None, 5);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"asymmetric","ratio":0.2,"mapping":[1,2,0],"seed":5}"#);
        let sym: NoiseSpec =
            serde_json::from_str(r#"{"kind":"symmetric","ratio":0.5,"mapping":null,"seed":1}"#)
                .unwrap();
        assert_eq!(sym, NoiseSpec::symmetric(0.5, 1));
    }

    proptest! {
        #[test]
        fn constructors_are_row_stochastic(c in 2usize..12, ratio in 0.0f64..=1.0) {
            let s = TransitionMatrix::symmetric(c, ratio).unwrap();
            let a = TransitionMatrix::asymmetric(c, ratio, &cyclic_mapping(c)).unwrap();
            for t in [&s, &a] {
                for i in 0..c {
                    let sum: f64 = t.row(i).iter().sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-12);
                    prop_assert!(t.row(i).iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }

        #[test]
        fn diagonal_dominates_below_threshold(c in 2usize..12, frac in 0.0f64..0.999) {
            let sym_ratio = frac * (c - 1) as f64 / c as f64;
            prop_assert!(TransitionMatrix::symmetric(c, sym_ratio).unwrap().is_diagonal_dominant());
            let asym_ratio = frac * 0.5;
            prop_assert!(TransitionMatrix::asymmetric(c, asym_ratio, &cyclic_mapping(c))
                .unwrap()
                .is_diagonal_dominant());
        }
    }
}
