//! Browser bindings for three interactive views: the focal loss curve, the
//! trajectory of dynamic class weights during a small training run, and a
//! per-class threshold sweep.

use mlfocal::loss::{focal_element, sigmoid, FocalConfig};
use mlfocal::metrics::class_f1;
use mlfocal::model::{CellKind, ModelConfig};
use mlfocal::optim::AdamConfig;
use mlfocal::synthetic::{generate, SyntheticSpec};
use mlfocal::thresholding::{
    apply_thresholds, best_threshold_for_class, candidate_thresholds, ThresholdVector,
};
use mlfocal::trainer::{train_with_observer, BatchRecord, EpochRecord, TrainConfig, TrainObserver};
use mlfocal::weighting::{Weighting, DEFAULT_EPSILON};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Focal loss of a positive label at `points` evenly spaced probabilities in (0, 1).
#[wasm_bindgen]
pub fn focal_curve(gamma: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let cfg = FocalConfig::new(gamma, 1e-7).map_err(js_err)?;
    Ok((1..=points)
        .map(|k| focal_element(k as f64 / (points + 1) as f64, true, &cfg))
        .collect())
}

/// Class weights per batch and validation macro-F1 per epoch of one training run.
#[wasm_bindgen]
pub struct Trajectory {
    classes: usize,
    alpha: Vec<f64>,
    macro_f1: Vec<f64>,
}

#[wasm_bindgen]
impl Trajectory {
    #[wasm_bindgen(getter)]
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Row-major `batches x classes`.
    #[wasm_bindgen(getter)]
    pub fn alpha(&self) -> Vec<f64> {
        self.alpha.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn macro_f1(&self) -> Vec<f64> {
        self.macro_f1.clone()
    }
}

#[derive(Default)]
struct Collect {
    alpha: Vec<f64>,
    macro_f1: Vec<f64>,
}

impl TrainObserver for Collect {
    fn on_batch(&mut self, record: &BatchRecord) {
        self.alpha.extend_from_slice(&record.alpha_used);
    }
    fn on_epoch(&mut self, record: &EpochRecord) {
        self.macro_f1.push(record.val_macro_f1);
    }
}

pub const DEMO_FREQUENCIES: [f64; 4] = [0.4, 0.4, 0.15, 0.05];

/// Trains a small bidirectional Elman classifier on skewed synthetic data with
/// dynamic weighting at the given smoothing `kappa`.
#[wasm_bindgen]
pub fn weight_trajectory(kappa: f64, epochs: usize, seed: u32) -> Result<Trajectory, JsError> {
    let spec = SyntheticSpec {
        noise: 0.5,
        ..SyntheticSpec::separable(120, DEMO_FREQUENCIES.to_vec())
    };
    let seed = u64::from(seed);
    let train = generate(&spec, seed).map_err(js_err)?;
    let val = generate(
        &SyntheticSpec {
            num_instances: 60,
            ..spec
        },
        seed + 1,
    )
    .map_err(js_err)?;
    let model = ModelConfig {
        cell: CellKind::Elman,
        hidden_size: 4,
        num_layers: 1,
        input_dim: 8,
        num_classes: DEMO_FREQUENCIES.len(),
    };
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: epochs.max(1),
        patience_epochs: usize::MAX,
        weighting: Weighting::Dynamic {
            kappa,
            epsilon: DEFAULT_EPSILON,
        },
        adam: AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        },
        seed,
        ..TrainConfig::default()
    };
    let mut collect = Collect::default();
    train_with_observer(&train, &val, &model, &cfg, &mut collect).map_err(js_err)?;
    Ok(Trajectory {
        classes: model.num_classes,
        alpha: collect.alpha,
        macro_f1: collect.macro_f1,
    })
}

/// F1 at every candidate threshold of one noisy score column.
#[wasm_bindgen]
pub struct Sweep {
    thresholds: Vec<f64>,
    f1: Vec<f64>,
    best_tau: f64,
    best_f1: f64,
    f1_at_half: f64,
}

#[wasm_bindgen]
impl Sweep {
    #[wasm_bindgen(getter)]
    pub fn thresholds(&self) -> Vec<f64> {
        self.thresholds.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn f1(&self) -> Vec<f64> {
        self.f1.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn best_tau(&self) -> f64 {
        self.best_tau
    }
    #[wasm_bindgen(getter)]
    pub fn best_f1(&self) -> f64 {
        self.best_f1
    }
    #[wasm_bindgen(getter)]
    pub fn f1_at_half(&self) -> f64 {
        self.f1_at_half
    }
}

/// Scores `sigmoid(+-separation + noise)` for `n` instances of which roughly
/// `prevalence` are positive, swept over every candidate threshold.
#[wasm_bindgen]
pub fn threshold_sweep(
    n: usize,
    prevalence: f64,
    separation: f64,
    seed: u32,
) -> Result<Sweep, JsError> {
    if n == 0 || !(0.0..=1.0).contains(&prevalence) {
        return Err(JsError::new("need n >= 1 and prevalence in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
    let golds: Vec<bool> = (0..n).map(|_| rng.random_bool(prevalence)).collect();
    let scores: Vec<f64> = golds
        .iter()
        .map(|&g| sigmoid(if g { separation } else { -separation } + rng.random_range(-2.0..2.0)))
        .collect();
    let score_col = Array2::from_shape_vec((n, 1), scores.clone()).map_err(js_err)?;
    let gold_col = Array2::from_shape_vec((n, 1), golds.clone()).map_err(js_err)?;
    let f1_at = |tau: f64| -> Result<f64, JsError> {
        let preds =
            apply_thresholds(score_col.view(), &ThresholdVector(vec![tau])).map_err(js_err)?;
        class_f1(preds.view(), gold_col.view(), 0).map_err(js_err)
    };
    let thresholds = candidate_thresholds(&scores);
    let f1 = thresholds
        .iter()
        .map(|&t| f1_at(t))
        .collect::<Result<Vec<_>, _>>()?;
    let (best_tau, best_f1) = best_threshold_for_class(&scores, &golds).map_err(js_err)?;
    Ok(Sweep {
        thresholds,
        f1,
        best_tau,
        best_f1,
        f1_at_half: f1_at(0.5)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_curve_falls_and_flattens_with_gamma() {
        let ce = focal_curve(0.0, 50).unwrap();
        let focal = focal_curve(2.0, 50).unwrap();
        assert_eq!(ce.len(), 50);
        assert!(ce.windows(2).all(|w| w[1] < w[0]));
        assert!(focal.iter().zip(&ce).all(|(f, c)| f < c));
    }

    #[test]
    fn trajectory_has_one_row_per_batch() {
        let t = weight_trajectory(0.4, 3, 1).unwrap();
        // 120 instances in batches of 16 -> 8 batches per epoch.
        assert_eq!(t.alpha.len(), 3 * 8 * 4);
        assert_eq!(t.macro_f1.len(), 3);
        for row in t.alpha.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let flat = weight_trajectory(0.0, 2, 1).unwrap();
        assert!(flat.alpha.iter().all(|&a| a == 0.25));
    }

    #[test]
    fn sweep_peak_is_the_selected_threshold() {
        let s = threshold_sweep(200, 0.1, 1.0, 3).unwrap();
        assert_eq!(s.thresholds.len(), s.f1.len());
        let peak = s.f1.iter().copied().fold(0.0, f64::max);
        assert_eq!(peak, s.best_f1);
        assert!(s.best_f1 >= s.f1_at_half);
        let first = s.f1.iter().position(|&f| f == peak).unwrap();
        assert_eq!(s.thresholds[first], s.best_tau);
    }
}
