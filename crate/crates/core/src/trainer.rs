//! Mini-batch training: forward/backward per batch, class weights from the
//! configured strategy, Adam updates, per-epoch threshold selection on a held-out
//! slice of the validation data, and early stopping on validation macro-F1.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::loss::FocalConfig;
use crate::metrics::{macro_f1, MetricsReport};
use crate::model::{batch_gradients, predict_scores, ModelConfig, ModelParams};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::thresholding::{apply_thresholds, select_thresholds, ScoredSet, ThresholdVector};
use crate::types::{EmbeddedDataset, EmbeddedInstance};
use crate::weighting::{WeightSchedule, Weighting};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub weighting: Weighting,
    pub focal: FocalConfig,
    pub threshold_split_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            adam: AdamConfig::default(),
            patience_epochs: 10,
            max_epochs: 200,
            weighting: Weighting::default(),
            focal: FocalConfig::default(),
            threshold_split_fraction: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(invalid("max_epochs must be >= 1"));
        }
        if !(self.threshold_split_fraction > 0.0 && self.threshold_split_fraction < 1.0) {
            return Err(invalid("threshold_split_fraction must lie in (0, 1)"));
        }
        self.adam.validate()
    }
}

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    /// Class weights in effect at the end of the epoch.
    pub alpha: Vec<f64>,
    /// Macro-F1 on the thresholding set with the selected thresholds.
    pub threshold_set_macro_f1: f64,
    /// Macro-F1 on the thresholding set at a global 0.5 threshold.
    pub threshold_set_macro_f1_at_half: f64,
}

impl EpochRecord {
    /// One line of the JSON-lines training log.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_macro_f1": self.val_macro_f1,
            "alpha": self.alpha,
        })
        .to_string()
    }
}

/// What happened in one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub epoch: usize,
    /// Global batch counter, starting at 1.
    pub iteration: u64,
    pub loss: f64,
    /// Weights used for this batch's loss.
    pub alpha_used: Vec<f64>,
    pub class_losses: Vec<f64>,
    /// Smoothed losses after folding in this batch (dynamic weighting only).
    pub omega_after: Option<Vec<f64>>,
    /// Weights that the next batch will use.
    pub alpha_next: Vec<f64>,
}

pub trait TrainObserver {
    fn on_batch(&mut self, _record: &BatchRecord) {}
    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub thresholds: ThresholdVector,
    pub class_names: Vec<String>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch the returned parameters come from.
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn best_val_macro_f1(&self) -> f64 {
        self.history[self.best_epoch - 1].val_macro_f1
    }
}

/// Patience counter: stops once more than `patience` consecutive epochs pass
/// without a strictly greater score.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, score: f64) -> StopDecision {
        let improved = self.best.is_none_or(|b| score > b);
        if improved {
            self.best = Some(score);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        StopDecision {
            improved,
            stop: self.since_best > self.patience,
        }
    }
}

/// Deterministic shuffled split into `(val_core, threshold_set)`; the threshold
/// set receives `ceil(fraction * n)` instances.
pub fn split_threshold_set(
    validation: &EmbeddedDataset,
    fraction: f64,
    seed: u64,
) -> Result<(EmbeddedDataset, EmbeddedDataset)> {
    let n = validation.len();
    if n < 2 {
        return Err(invalid(format!(
            "validation set needs at least 2 instances, has {n}"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let take = ((fraction * n as f64) - 1e-9).ceil() as usize;
    if take == 0 || take >= n {
        return Err(invalid(format!(
            "fraction {fraction} of {n} instances leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (thresh, core) = order.split_at(take);
    let (mut thresh, mut core) = (thresh.to_vec(), core.to_vec());
    thresh.sort_unstable();
    core.sort_unstable();
    Ok((validation.subset(&core), validation.subset(&thresh)))
}

fn check_compatible(train: &EmbeddedDataset, val: &EmbeddedDataset) -> Result<()> {
    crate::types::check_class_names(&train.class_names, &val.class_names)?;
    if train.embedding_dim != val.embedding_dim {
        return Err(Error::Shape(format!(
            "train width {} vs validation width {}",
            train.embedding_dim, val.embedding_dim
        )));
    }
    Ok(())
}

fn scored_set(params: &ModelParams, data: &EmbeddedDataset) -> Result<ScoredSet> {
    ScoredSet::new(
        predict_scores(params, &data.instances)?,
        data.gold_matrix()?,
    )
}

pub fn train(
    train_set: &EmbeddedDataset,
    validation_set: &EmbeddedDataset,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    train_with_observer(train_set, validation_set, model, config, &mut ())
}

pub fn train_with_observer(
    train_set: &EmbeddedDataset,
    validation_set: &EmbeddedDataset,
    model: &ModelConfig,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainedModel> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set has no instances".into()));
    }
    check_compatible(train_set, validation_set)?;
    let model = ModelConfig {
        input_dim: train_set.embedding_dim,
        num_classes: train_set.num_classes(),
        ..*model
    };
    train_set.gold_matrix()?;

    let (val_core, threshold_set) =
        split_threshold_set(validation_set, config.threshold_split_fraction, config.seed)?;
    let val_golds = val_core.gold_matrix()?;

    let mut params = ModelParams::init(model, config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut schedule = WeightSchedule::new(config.weighting, &train_set.positive_counts())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut stopper = EarlyStopping::new(config.patience_epochs);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(ModelParams, ThresholdVector, usize)> = None;
    let mut iteration = 0u64;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            iteration += 1;
            let batch: Vec<&EmbeddedInstance> =
                chunk.iter().map(|&i| &train_set.instances[i]).collect();
            let alpha = schedule.current();
            let step = batch_gradients(&params, &batch, &config.focal, alpha.as_slice())?;
            schedule.observe(&step.class_losses)?;
            observer.on_batch(&BatchRecord {
                epoch,
                iteration,
                loss: step.loss,
                alpha_used: alpha.into_vec(),
                class_losses: step.class_losses.clone(),
                omega_after: schedule.omega().map(<[f64]>::to_vec),
                alpha_next: schedule.current().into_vec(),
            });
            adam_step(&mut params, &step.grads, &mut adam, &config.adam)?;
            loss_sum += step.loss;
            batches += 1;
        }

        // Model selection runs on checkpoint-precision parameters so a saved
        // checkpoint reproduces the recorded scores exactly.
        let mut snapshot = params.clone();
        snapshot.round_to_f32();
        let tset = scored_set(&snapshot, &threshold_set)?;
        let tau = select_thresholds(&tset)?;
        let t_preds = apply_thresholds(tset.scores.view(), &tau)?;
        let t_half = apply_thresholds(
            tset.scores.view(),
            &ThresholdVector::uniform(model.num_classes, 0.5),
        )?;
        let val_scores = predict_scores(&snapshot, &val_core.instances)?;
        let val_preds = apply_thresholds(val_scores.view(), &tau)?;

        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_macro_f1: macro_f1(val_preds.view(), val_golds.view())?,
            alpha: schedule.current().into_vec(),
            threshold_set_macro_f1: macro_f1(t_preds.view(), tset.golds.view())?,
            threshold_set_macro_f1_at_half: macro_f1(t_half.view(), tset.golds.view())?,
        };
        observer.on_epoch(&record);
        let decision = stopper.observe(record.val_macro_f1);
        history.push(record);
        if decision.improved {
            best = Some((snapshot, tau, epoch));
        }
        if decision.stop {
            break;
        }
    }

    let (params, thresholds, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainedModel {
        params,
        thresholds,
        class_names: train_set.class_names.clone(),
        history,
        best_epoch,
    })
}

/// Thresholded predictions of a trained model.
pub fn predict(model: &TrainedModel, data: &EmbeddedDataset) -> Result<Array2<bool>> {
    let scores = predict_scores(&model.params, &data.instances)?;
    apply_thresholds(scores.view(), &model.thresholds)
}

pub fn evaluate(model: &TrainedModel, data: &EmbeddedDataset) -> Result<MetricsReport> {
    crate::types::check_class_names(&model.class_names, &data.class_names)?;
    let preds = predict(model, data)?;
    MetricsReport::compute(preds.view(), data.gold_matrix()?.view())
}
