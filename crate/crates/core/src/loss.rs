//! Multi-label focal loss.
//!
//! For a sigmoid score `r` and a binary label `c`, let `p = r` when `c = 1` and
//! `p = 1 - r` otherwise. The element loss is `(1 - p)^gamma * (-ln p)`, which
//! reduces to binary cross-entropy at `gamma = 0`. A batch of `b` instances is
//! reduced to a scalar as `(1/b) * sum_i sum_a alpha_a * l_ia` with `sum_a alpha_a = 1`.
//!
//! Scores are clamped to `[prob_floor, 1 - prob_floor]`. The logit-space entry
//! points apply the same clamp as `|z| <= ln((1 - floor) / floor)`, outside of
//! which the gradient is exactly zero.

use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalConfig {
    gamma: f64,
    prob_floor: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            prob_floor: 1e-7,
        }
    }
}

impl FocalConfig {
    pub fn new(gamma: f64, prob_floor: f64) -> Result<Self> {
        if gamma < 0.0 || !gamma.is_finite() {
            return Err(invalid(format!(
                "focal gamma must be finite and >= 0, got {gamma}"
            )));
        }
        if !(prob_floor > 0.0 && prob_floor < 0.5) {
            return Err(invalid(format!(
                "prob_floor must lie in (0, 0.5), got {prob_floor}"
            )));
        }
        Ok(Self { gamma, prob_floor })
    }

    /// Plain cross-entropy (`gamma = 0`).
    pub fn cross_entropy() -> Self {
        Self {
            gamma: 0.0,
            ..Self::default()
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn prob_floor(&self) -> f64 {
        self.prob_floor
    }

    fn logit_bound(&self) -> f64 {
        ((1.0 - self.prob_floor) / self.prob_floor).ln()
    }
}

/// Per-instance, per-class losses (`b x w`).
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix(pub Array2<f64>);

/// Element loss from a probability score.
pub fn focal_element(score: f64, label: bool, cfg: &FocalConfig) -> f64 {
    let r = score.clamp(cfg.prob_floor, 1.0 - cfg.prob_floor);
    let p = if label { r } else { 1.0 - r };
    (1.0 - p).powf(cfg.gamma) * -p.ln()
}

/// `ln(sigmoid(x))` without overflow.
#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Element loss from a logit, `z` such that `score = sigmoid(z)`.
pub fn focal_element_from_logit(logit: f64, label: bool, cfg: &FocalConfig) -> f64 {
    let bound = cfg.logit_bound();
    let z = logit.clamp(-bound, bound);
    let q = if label { z } else { -z };
    let one_minus_p = sigmoid(-q);
    one_minus_p.powf(cfg.gamma) * -log_sigmoid(q)
}

/// Derivative of [`focal_element_from_logit`] with respect to the logit.
pub fn focal_element_grad(logit: f64, label: bool, cfg: &FocalConfig) -> f64 {
    let bound = cfg.logit_bound();
    if logit.abs() > bound {
        return 0.0;
    }
    let (q, sign) = if label { (logit, 1.0) } else { (-logit, -1.0) };
    let p = sigmoid(q);
    let one_minus_p = sigmoid(-q);
    let g = cfg.gamma;
    // d/dq of -(1-p)^g ln p, with dp/dq = p(1-p)
    let dq = if g == 0.0 {
        -one_minus_p
    } else {
        g * p * one_minus_p.powf(g) * log_sigmoid(q) - one_minus_p.powf(g + 1.0)
    };
    sign * dq
}

fn check_pair(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("scores {a:?} vs labels {b:?}")));
    }
    Ok(())
}

pub(crate) fn check_weights(alpha: &[f64], w: usize) -> Result<()> {
    if alpha.len() != w {
        return Err(Error::Shape(format!(
            "{} class weights for {w} classes",
            alpha.len()
        )));
    }
    if alpha.iter().any(|a| *a < 0.0 || !a.is_finite()) {
        return Err(invalid("class weights must be finite and non-negative"));
    }
    let sum: f64 = alpha.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("class weights sum to {sum}, expected 1")));
    }
    Ok(())
}

pub fn loss_matrix(
    scores: ArrayView2<f64>,
    labels: ArrayView2<bool>,
    cfg: &FocalConfig,
) -> Result<LossMatrix> {
    check_pair(scores.dim(), labels.dim())?;
    let mut out = Array2::zeros(scores.dim());
    Zip::from(&mut out)
        .and(&scores)
        .and(&labels)
        .for_each(|o, &r, &c| *o = focal_element(r, c, cfg));
    Ok(LossMatrix(out))
}

fn weighted_mean(losses: &Array2<f64>, alpha: &[f64]) -> f64 {
    let b = losses.nrows();
    let total: f64 = losses
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(alpha).map(|(l, a)| a * l).sum::<f64>())
        .sum();
    total / b as f64
}

/// Weighted batch loss from probability scores.
pub fn batch_loss(
    scores: ArrayView2<f64>,
    labels: ArrayView2<bool>,
    alpha: &[f64],
    cfg: &FocalConfig,
) -> Result<f64> {
    check_weights(alpha, scores.ncols())?;
    if scores.nrows() == 0 {
        return Err(Error::Empty("batch has no instances".into()));
    }
    Ok(weighted_mean(&loss_matrix(scores, labels, cfg)?.0, alpha))
}

/// Weighted batch loss from logits; the quantity [`batch_loss_grad`] differentiates.
pub fn batch_loss_from_logits(
    logits: ArrayView2<f64>,
    labels: ArrayView2<bool>,
    alpha: &[f64],
    cfg: &FocalConfig,
) -> Result<f64> {
    check_weights(alpha, logits.ncols())?;
    check_pair(logits.dim(), labels.dim())?;
    if logits.nrows() == 0 {
        return Err(Error::Empty("batch has no instances".into()));
    }
    let mut losses = Array2::zeros(logits.dim());
    Zip::from(&mut losses)
        .and(&logits)
        .and(&labels)
        .for_each(|o, &z, &c| *o = focal_element_from_logit(z, c, cfg));
    Ok(weighted_mean(&losses, alpha))
}

/// Gradient of the weighted batch loss with respect to each logit. `alpha` is a
/// constant here: no gradient flows into the class weights.
pub fn batch_loss_grad(
    logits: ArrayView2<f64>,
    labels: ArrayView2<bool>,
    alpha: &[f64],
    cfg: &FocalConfig,
) -> Result<Array2<f64>> {
    check_weights(alpha, logits.ncols())?;
    check_pair(logits.dim(), labels.dim())?;
    let b = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.dim());
    for ((i, a), g) in grad.indexed_iter_mut() {
        *g = alpha[a] / b * focal_element_grad(logits[[i, a]], labels[[i, a]], cfg);
    }
    Ok(grad)
}

/// Unweighted per-class loss sums over the batch (not means).
pub fn per_class_batch_loss(
    scores: ArrayView2<f64>,
    labels: ArrayView2<bool>,
    cfg: &FocalConfig,
) -> Result<Array1<f64>> {
    Ok(column_sums(&loss_matrix(scores, labels, cfg)?.0))
}

pub fn per_class_batch_loss_from_logits(
    logits: ArrayView2<f64>,
    labels: ArrayView2<bool>,
    cfg: &FocalConfig,
) -> Result<Array1<f64>> {
    check_pair(logits.dim(), labels.dim())?;
    let mut losses = Array2::zeros(logits.dim());
    Zip::from(&mut losses)
        .and(&logits)
        .and(&labels)
        .for_each(|o, &z, &c| *o = focal_element_from_logit(z, c, cfg));
    Ok(column_sums(&losses))
}

// Sequential row order keeps the sums bit-stable.
fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(m.ncols());
    for row in m.rows() {
        out += &row;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn element_examples() {
        let ce = FocalConfig::cross_entropy();
        assert!((focal_element(0.5, true, &ce) - std::f64::consts::LN_2).abs() < 1e-15);
        let f2 = FocalConfig::new(2.0, 1e-7).unwrap();
        // 0.01 * -ln 0.9
        let expected = 0.01 * 0.105_360_515_657_826_3;
        assert!((focal_element(0.9, true, &f2) - expected).abs() < 1e-15);
        assert!((focal_element(0.9, false, &ce) - std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn negative_gamma_rejected() {
        assert!(FocalConfig::new(-0.1, 1e-7).is_err());
        assert!(FocalConfig::new(1.0, 0.5).is_err());
        assert!(FocalConfig::new(1.0, 0.0).is_err());
    }

    #[test]
    fn batch_loss_examples() {
        let ce = FocalConfig::cross_entropy();
        let s = array![[0.5, 0.5]];
        let l = array![[true, false]];
        let v = batch_loss(s.view(), l.view(), &[0.5, 0.5], &ce).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);

        let s = array![[0.2, 0.7], [0.9, 0.4]];
        let l = array![[true, true], [false, true]];
        let one_hot = batch_loss(s.view(), l.view(), &[1.0, 0.0], &ce).unwrap();
        let col0 = (focal_element(0.2, true, &ce) + focal_element(0.9, false, &ce)) / 2.0;
        assert!((one_hot - col0).abs() < 1e-15);

        let uniform = batch_loss(s.view(), l.view(), &[0.5, 0.5], &ce).unwrap();
        let mean_bce = loss_matrix(s.view(), l.view(), &ce)
            .unwrap()
            .0
            .mean()
            .unwrap();
        assert!((uniform - mean_bce).abs() < 1e-15);
    }

    #[test]
    fn weight_sum_violation_is_error() {
        let s = array![[0.5, 0.5]];
        let l = array![[true, false]];
        let ce = FocalConfig::cross_entropy();
        assert!(batch_loss(s.view(), l.view(), &[0.5, 0.6], &ce).is_err());
        assert!(batch_loss(s.view(), l.view(), &[1.5, -0.5], &ce).is_err());
    }

    #[test]
    fn grad_at_zero_logit_cross_entropy() {
        let b = 3;
        let w = 2;
        let logits = Array2::zeros((b, w));
        let labels = Array2::from_elem((b, w), true);
        let g = batch_loss_grad(
            logits.view(),
            labels.view(),
            &[0.5, 0.5],
            &FocalConfig::cross_entropy(),
        )
        .unwrap();
        for v in g.iter() {
            assert!((v - (-0.5 / (b * w) as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn grad_vanishes_when_saturated() {
        let cfg = FocalConfig::default();
        assert_eq!(focal_element_grad(40.0, true, &cfg), 0.0);
        assert!(focal_element_grad(12.0, true, &cfg).abs() < 1e-5);
    }

    #[test]
    fn per_class_sums() {
        let cfg = FocalConfig::default();
        let s = array![[0.3, 0.8]];
        let l = array![[true, false]];
        let one = per_class_batch_loss(s.view(), l.view(), &cfg).unwrap();
        let lm = loss_matrix(s.view(), l.view(), &cfg).unwrap();
        assert_eq!(one.to_vec(), lm.0.row(0).to_vec());

        let s2 = array![[0.3, 0.8], [0.3, 0.8]];
        let l2 = array![[true, false], [true, false]];
        let two = per_class_batch_loss(s2.view(), l2.view(), &cfg).unwrap();
        assert_eq!(two, &one * 2.0);
    }

    #[test]
    fn perfect_predictions_hit_the_floor() {
        let cfg = FocalConfig::default();
        let s = array![[1.0, 0.0], [1.0, 0.0]];
        let l = array![[true, false], [true, false]];
        let v = per_class_batch_loss(s.view(), l.view(), &cfg).unwrap();
        let floor = cfg.prob_floor();
        let expected = 2.0 * -(1.0 - floor).ln() * floor.powf(cfg.gamma());
        for x in v.iter() {
            assert!((x - expected).abs() < 1e-25);
            assert!(*x < 1e-20);
        }
    }
}
