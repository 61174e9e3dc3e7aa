//! Closed-form predictions for a memorizing classifier trained on noisy labels.
//!
//! If a trained model predicts class `j` for a test sample of true class `i`
//! with probability `T[i][j]` (it reproduces the noise distribution rather
//! than the true label), and test labels are corrupted independently by the
//! same `T`, then the agreement rate on class `i` is `sum_j T[i][j]^2`.
//! Everything in this module follows from that identity.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{cyclic_mapping, NoiseKind, TransitionMatrix};

/// Probability that prediction and observed label agree for true class `class`.
pub fn class_accuracy(t: &TransitionMatrix, class: usize) -> Result<f64> {
    let c = t.num_classes();
    if class >= c {
        return Err(Error::Index { index: class, len: c });
    }
    Ok(t.row(class).iter().map(|v| v * v).sum())
}

fn check_ratio(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("noise ratio {eps} outside [0,1]")));
    }
    Ok(())
}

fn check_classes(c: usize) -> Result<()> {
    if c < 2 {
        return Err(Error::Domain(format!("need at least 2 classes, got {c}")));
    }
    Ok(())
}

/// `(1 - eps)^2 + eps^2 / (c - 1)`.
pub fn symmetric_accuracy(eps: f64, c: usize) -> Result<f64> {
    check_ratio(eps)?;
    check_classes(c)?;
    Ok((1.0 - eps).powi(2) + eps * eps / (c - 1) as f64)
}

/// `(1 - eps)^2 + eps^2`.
pub fn asymmetric_accuracy(eps: f64) -> Result<f64> {
    check_ratio(eps)?;
    Ok((1.0 - eps).powi(2) + eps * eps)
}

/// Per-class label precision and recall of one noisy cross-validation pass:
/// `LP_i = T_ii^2 / sum_j T_ij^2`, `LR_i = T_ii`.
pub fn lp_lr_general(t: &TransitionMatrix) -> Vec<(f64, f64)> {
    (0..t.num_classes())
        .map(|i| {
            let tii = t.get(i, i);
            let denom: f64 = t.row(i).iter().map(|v| v * v).sum();
            let lp = if denom > 0.0 {
                tii * tii / denom
            } else {
                warn!("row {i} has no mass; LP is 0/0, reporting 0");
                0.0
            };
            (lp, tii)
        })
        .collect()
}

/// Bounds on `LP_i` given only the diagonal entry `t_ii`. The upper bound is
/// reached when the off-diagonal mass is spread evenly (symmetric noise), the
/// lower when it sits on a single class (asymmetric noise).
pub fn lp_bounds(t_ii: f64, c: usize) -> Result<(f64, f64)> {
    check_classes(c)?;
    if !(t_ii > 0.0 && t_ii <= 1.0) {
        return Err(Error::Domain(format!("diagonal entry {t_ii} outside (0,1]")));
    }
    let d2 = t_ii * t_ii;
    let off2 = (1.0 - t_ii).powi(2);
    Ok((d2 / (d2 + off2), d2 / (d2 + off2 / (c - 1) as f64)))
}

/// Inverts [`symmetric_accuracy`] on the branch `eps <= (c-1)/c`.
///
/// Accuracies below the minimum `1/c` clamp to `(c-1)/c` (with a warning),
/// accuracies above 1 clamp to 0.
pub fn estimate_epsilon_symmetric(accuracy: f64, c: usize) -> f64 {
    let cf = c.max(2) as f64;
    let vertex = (cf - 1.0) / cf;
    if accuracy >= 1.0 {
        return 0.0;
    }
    if accuracy < 1.0 / cf {
        warn!("accuracy {accuracy} below the minimum 1/c; clamping noise estimate to {vertex}");
        return vertex;
    }
    // 1 - c/(c-1) * (1 - a) rewritten as (c*a - 1)/(c - 1); equals
    // (1 - c*eps/(c-1))^2 at the root.
    let excess = cf.mul_add(accuracy, -1.0);
    // within rounding of the vertex the root is numerically undetermined
    let excess = if excess.abs() <= 8.0 * f64::EPSILON { 0.0 } else { excess };
    let radicand = (excess / (cf - 1.0)).max(0.0);
    // rationalized (1 - sqrt(rad)) * (c-1)/c
    ((1.0 - accuracy) / (1.0 + radicand.sqrt())).min(vertex)
}

/// Inverts [`asymmetric_accuracy`] on the branch `eps <= 0.5`.
pub fn estimate_epsilon_asymmetric(accuracy: f64) -> f64 {
    if accuracy >= 1.0 {
        return 0.0;
    }
    if accuracy < 0.5 {
        warn!("accuracy {accuracy} below the minimum 0.5; clamping noise estimate to 0.5");
        return 0.5;
    }
    let radicand = 2.0f64.mul_add(accuracy, -1.0).max(0.0);
    ((1.0 - accuracy) / (1.0 + radicand.sqrt())).min(0.5)
}

/// Estimates the noise ratio from an observed agreement rate.
pub fn estimate_epsilon(kind: NoiseKind, accuracy: f64, c: usize) -> f64 {
    match kind {
        NoiseKind::Asymmetric => estimate_epsilon_asymmetric(accuracy),
        _ => estimate_epsilon_symmetric(accuracy, c),
    }
}

/// Label precision of one pass under symmetric noise of ratio `eps`.
pub fn symmetric_lp(eps: f64, c: usize) -> Result<f64> {
    let acc = symmetric_accuracy(eps, c)?;
    Ok((1.0 - eps).powi(2) / acc)
}

/// Label precision of one pass under asymmetric noise of ratio `eps`.
pub fn asymmetric_lp(eps: f64) -> Result<f64> {
    let acc = asymmetric_accuracy(eps)?;
    Ok((1.0 - eps).powi(2) / acc)
}

/// One row of a theory curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub kind: NoiseKind,
    pub c: usize,
    pub epsilon: f64,
    pub accuracy: f64,
    pub lp: f64,
    pub lr: f64,
    pub eps_s: f64,
}

impl TheoryPoint {
    pub fn at(kind: NoiseKind, c: usize, eps: f64) -> Result<Self> {
        let t = match kind {
            NoiseKind::Symmetric => TransitionMatrix::symmetric(c, eps)?,
            NoiseKind::Asymmetric => TransitionMatrix::asymmetric(c, eps, &cyclic_mapping(c))?,
            NoiseKind::Custom => {
                return Err(Error::Domain(
                    "theory curves need symmetric or asymmetric noise".into(),
                ))
            }
        };
        let accuracy = class_accuracy(&t, 0)?;
        let (lp, lr) = lp_lr_general(&t)[0];
        Ok(Self {
            kind,
            c,
            epsilon: eps,
            accuracy,
            lp,
            lr,
            eps_s: 1.0 - lp,
        })
    }
}

/// Evaluates accuracy, LP, LR and `eps_S` at every grid point.
pub fn theory_curve(kind: NoiseKind, c: usize, grid: &[f64]) -> Result<Vec<TheoryPoint>> {
    grid.iter().map(|&eps| TheoryPoint::at(kind, c, eps)).collect()
}

pub const THEORY_CSV_HEADER: &str = "kind,c,epsilon,accuracy,lp,lr,eps_s";

/// CSV rendering with a fixed header and six decimals per float.
pub fn theory_csv(points: &[TheoryPoint]) -> String {
    let mut out = String::from(THEORY_CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            p.kind, p.c, p.epsilon, p.accuracy, p.lp, p.lr, p.eps_s
        ));
    }
    out
}
