//! Class-specific decision thresholds that maximize macro-F1.
//!
//! Macro-F1 is a mean of per-class F1 values and each class's F1 depends only on
//! its own threshold, so the joint maximization splits into `w` independent
//! one-dimensional problems. Each is solved exactly by sweeping the observed
//! scores in descending order while maintaining TP/FP counts.
//!
//! A class is predicted when `score >= tau`. Candidate thresholds are the distinct
//! observed scores plus a sentinel (`max score + 1`) that predicts nothing. Among
//! equally good thresholds the smallest is returned, except that a class with no
//! positives gets the sentinel.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};

use crate::error::{invalid, Error, Result};
use crate::metrics::{f1_from_counts, macro_f1};

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector(pub Vec<f64>);

impl ThresholdVector {
    pub fn uniform(w: usize, tau: f64) -> Self {
        Self(vec![tau; w])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Model scores on the thresholding set, with gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Array2<f64>,
    pub golds: Array2<bool>,
}

impl ScoredSet {
    pub fn new(scores: Array2<f64>, golds: Array2<bool>) -> Result<Self> {
        if scores.dim() != golds.dim() {
            return Err(Error::Shape(format!(
                "scores {:?} vs golds {:?}",
                scores.dim(),
                golds.dim()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(invalid("scores must be finite"));
        }
        Ok(Self { scores, golds })
    }

    pub fn num_classes(&self) -> usize {
        self.scores.ncols()
    }
}

pub fn apply_thresholds(scores: ArrayView2<f64>, tau: &ThresholdVector) -> Result<Array2<bool>> {
    if scores.ncols() != tau.len() {
        return Err(Error::Shape(format!(
            "{} thresholds for {} classes",
            tau.len(),
            scores.ncols()
        )));
    }
    Ok(Array2::from_shape_fn(scores.dim(), |(i, a)| {
        scores[[i, a]] >= tau.0[a]
    }))
}

fn sentinel(scores: &[f64]) -> f64 {
    scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0
}

/// Smallest threshold maximizing F1 for one class, with that F1.
///
/// A class with no positives gets the sentinel: every threshold scores F1 = 0
/// there, and predicting nothing is the only choice without false positives.
pub fn best_threshold_for_class(scores: &[f64], golds: &[bool]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::Empty("no scores to threshold".into()));
    }
    if scores.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} golds",
            scores.len(),
            golds.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("scores must be finite"));
    }
    let positives = golds.iter().filter(|&&g| g).count() as u64;
    if positives == 0 {
        return Ok((sentinel(scores), 0.0));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut best = (sentinel(scores), f1_from_counts(0, 0, positives));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let value = scores[order[k]];
        // Tied scores enter the prediction set together.
        while k < order.len() && scores[order[k]] == value {
            if golds[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let f1 = f1_from_counts(tp, fp, positives - tp);
        if f1 >= best.1 {
            best = (value, f1);
        }
    }
    Ok(best)
}

/// Per-class thresholds maximizing macro-F1 on the thresholding set.
pub fn select_thresholds(set: &ScoredSet) -> Result<ThresholdVector> {
    (0..set.num_classes())
        .map(|a| {
            let scores = set.scores.column(a).to_vec();
            let golds = set.golds.column(a).to_vec();
            best_threshold_for_class(&scores, &golds).map(|(tau, _)| tau)
        })
        .collect::<Result<Vec<_>>>()
        .map(ThresholdVector)
}

pub const BRUTE_FORCE_MAX_CLASSES: usize = 4;
pub const BRUTE_FORCE_MAX_CANDIDATES: usize = 12;

/// Sorted candidate thresholds for one class: distinct observed scores and the sentinel.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = scores.to_vec();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c.push(sentinel(scores));
    c
}

/// Exhaustive joint search over every combination of per-class candidates.
///
/// Exponential in the class count; guarded to at most
/// [`BRUTE_FORCE_MAX_CLASSES`] classes and [`BRUTE_FORCE_MAX_CANDIDATES`]
/// candidates per class. Returns the lexicographically smallest maximizer;
/// classes without positives are pinned to the sentinel as in
/// [`best_threshold_for_class`].
pub fn brute_force_thresholds(set: &ScoredSet) -> Result<ThresholdVector> {
    let w = set.num_classes();
    if w == 0 || set.scores.nrows() == 0 {
        return Err(Error::Empty("empty scored set".into()));
    }
    if w > BRUTE_FORCE_MAX_CLASSES {
        return Err(invalid(format!(
            "brute force supports at most {BRUTE_FORCE_MAX_CLASSES} classes, got {w}"
        )));
    }
    let candidates: Vec<Vec<f64>> = (0..w)
        .map(|a| candidate_thresholds(&set.scores.column(a).to_vec()))
        .collect();
    if let Some(c) = candidates
        .iter()
        .find(|c| c.len() > BRUTE_FORCE_MAX_CANDIDATES)
    {
        return Err(invalid(format!(
            "brute force supports at most {BRUTE_FORCE_MAX_CANDIDATES} candidates per class, got {}",
            c.len()
        )));
    }
    let candidates: Vec<Vec<f64>> = candidates
        .into_iter()
        .enumerate()
        .map(|(a, c)| {
            if set.golds.column(a).iter().any(|&g| g) {
                c
            } else {
                vec![*c.last().expect("sentinel present")]
            }
        })
        .collect();

    let mut idx = vec![0usize; w];
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        let tau = ThresholdVector(idx.iter().zip(&candidates).map(|(&i, c)| c[i]).collect());
        let preds = apply_thresholds(set.scores.view(), &tau)?;
        let value = macro_f1(preds.view(), set.golds.view())?;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, tau.0));
        }
        // Odometer increment, last class fastest, so combos come in lexicographic order.
        let mut pos = w;
        loop {
            if pos == 0 {
                return Ok(ThresholdVector(best.expect("at least one combination").1));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < candidates[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Serializes thresholds as `class_name<TAB>tau` lines.
pub fn format_thresholds(class_names: &[String], tau: &ThresholdVector) -> Result<String> {
    if class_names.len() != tau.len() {
        return Err(Error::Shape(format!(
            "{} names for {} thresholds",
            class_names.len(),
            tau.len()
        )));
    }
    let mut out = String::new();
    for (name, t) in class_names.iter().zip(&tau.0) {
        writeln!(out, "{name}\t{t}").expect("write to String");
    }
    Ok(out)
}

pub fn parse_thresholds(text: &str) -> Result<(Vec<String>, ThresholdVector)> {
    let mut names = Vec::new();
    let mut taus = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, tau) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected `class_name<TAB>tau`".into(),
        })?;
        let tau: f64 = tau.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("bad threshold `{tau}`"),
        })?;
        names.push(name.to_string());
        taus.push(tau);
    }
    if names.is_empty() {
        return Err(Error::Empty("threshold file has no entries".into()));
    }
    Ok((names, ThresholdVector(taus)))
}
