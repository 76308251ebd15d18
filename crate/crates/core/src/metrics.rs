//! Multi-label evaluation metrics over binary prediction/gold matrices
//! (rows are instances, columns are classes).
//!
//! Zero-division convention: an F1 whose denominator `2TP + FP + FN` is zero is 0.
//! A Jaccard term whose gold and predicted sets are both empty is 1.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn f1(&self) -> f64 {
        f1_from_counts(self.tp, self.fp, self.fn_)
    }

    fn add(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

#[inline]
pub(crate) fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub jaccard: f64,
}

impl MetricsReport {
    pub fn compute(preds: ArrayView2<bool>, golds: ArrayView2<bool>) -> Result<Self> {
        let counts = all_confusion_counts(preds, golds)?;
        if counts.is_empty() {
            return Err(Error::Shape("no classes".into()));
        }
        let per_class_f1: Vec<f64> = counts.iter().map(ConfusionCounts::f1).collect();
        Ok(Self {
            macro_f1: mean(&per_class_f1),
            micro_f1: pooled(&counts).f1(),
            jaccard: jaccard_accuracy(preds, golds)?,
            per_class_f1,
        })
    }
}

fn check_shapes(preds: &ArrayView2<bool>, golds: &ArrayView2<bool>) -> Result<()> {
    if preds.dim() != golds.dim() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs golds {:?}",
            preds.dim(),
            golds.dim()
        )));
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn pooled(counts: &[ConfusionCounts]) -> ConfusionCounts {
    counts
        .iter()
        .fold(ConfusionCounts::default(), |acc, c| acc.add(*c))
}

pub fn confusion_counts(
    preds: ArrayView2<bool>,
    golds: ArrayView2<bool>,
    class: usize,
) -> Result<ConfusionCounts> {
    check_shapes(&preds, &golds)?;
    if class >= preds.ncols() {
        return Err(Error::Shape(format!(
            "class {class} out of range for {} columns",
            preds.ncols()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in preds.column(class).iter().zip(golds.column(class)) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn all_confusion_counts(
    preds: ArrayView2<bool>,
    golds: ArrayView2<bool>,
) -> Result<Vec<ConfusionCounts>> {
    check_shapes(&preds, &golds)?;
    (0..preds.ncols())
        .map(|a| confusion_counts(preds, golds, a))
        .collect()
}

pub fn class_f1(preds: ArrayView2<bool>, golds: ArrayView2<bool>, class: usize) -> Result<f64> {
    Ok(confusion_counts(preds, golds, class)?.f1())
}

pub fn per_class_f1(preds: ArrayView2<bool>, golds: ArrayView2<bool>) -> Result<Vec<f64>> {
    Ok(all_confusion_counts(preds, golds)?
        .iter()
        .map(ConfusionCounts::f1)
        .collect())
}

pub fn macro_f1(preds: ArrayView2<bool>, golds: ArrayView2<bool>) -> Result<f64> {
    let f1s = per_class_f1(preds, golds)?;
    if f1s.is_empty() {
        return Err(Error::Shape("macro-F1 needs at least one class".into()));
    }
    Ok(mean(&f1s))
}

pub fn micro_f1(preds: ArrayView2<bool>, golds: ArrayView2<bool>) -> Result<f64> {
    Ok(pooled(&all_confusion_counts(preds, golds)?).f1())
}

/// Instance-averaged intersection over union of predicted and gold label sets.
pub fn jaccard_accuracy(preds: ArrayView2<bool>, golds: ArrayView2<bool>) -> Result<f64> {
    check_shapes(&preds, &golds)?;
    let n = preds.nrows();
    if n == 0 {
        return Err(Error::Shape("Jaccard needs at least one instance".into()));
    }
    let total: f64 = preds
        .rows()
        .into_iter()
        .zip(golds.rows())
        .map(|(p, g)| {
            let (mut inter, mut union) = (0u32, 0u32);
            for (&a, &b) in p.iter().zip(g.iter()) {
                inter += (a && b) as u32;
                union += (a || b) as u32;
            }
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        })
        .sum();
    Ok(total / n as f64)
}
