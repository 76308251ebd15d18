//! Per-class loss weights.
//!
//! Dynamic weighting keeps an exponentially smoothed per-class loss
//! `omega_a <- kappa * L_a + (1 - kappa) * omega_a`, where `L_a` is the summed
//! loss of class `a` over the last mini-batch, starting from `omega_a = 1/w`.
//! The weights are `alpha_a = phi_a / sum_u phi_u` with `phi_a = 1 / (eps + omega_a)`,
//! so classes whose recent loss is small get a larger share. Weights are plain
//! numbers: nothing downstream differentiates through them.
//!
//! The static baselines (uniform, inverse frequency, class-balanced, class prior)
//! are fixed for the whole run.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_KAPPA: f64 = 0.4;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Normalized class weights: strictly positive and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn uniform(w: usize) -> Self {
        Self(vec![1.0 / w as f64; w])
    }

    /// Normalizes strictly positive raw weights.
    ///
    /// Each entry is computed as `1 / sum_u (raw_u / raw_a)`, which returns exactly
    /// `1/w` whenever all raw weights are equal.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(invalid("no classes to weight"));
        }
        if raw.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(invalid(format!(
                "raw class weights must be finite and > 0: {raw:?}"
            )));
        }
        Ok(Self(
            raw.iter()
                .map(|&own| 1.0 / raw.iter().map(|&other| other / own).sum::<f64>())
                .collect(),
        ))
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

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicWeightState {
    omega: Vec<f64>,
    t: u64,
    kappa: f64,
    epsilon: f64,
}

impl DynamicWeightState {
    pub fn new(w: usize, kappa: f64, epsilon: f64) -> Result<Self> {
        if w == 0 {
            return Err(invalid("class count must be >= 1"));
        }
        if !(0.0..=1.0).contains(&kappa) {
            return Err(invalid(format!("kappa must lie in [0, 1], got {kappa}")));
        }
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self {
            omega: vec![1.0 / w as f64; w],
            t: 1,
            kappa,
            epsilon,
        })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Folds one mini-batch's per-class loss sums into the smoothed losses.
    pub fn update(&mut self, batch_class_losses: &[f64]) -> Result<()> {
        if batch_class_losses.len() != self.omega.len() {
            return Err(Error::Shape(format!(
                "{} class losses for {} classes",
                batch_class_losses.len(),
                self.omega.len()
            )));
        }
        if let Some(bad) = batch_class_losses
            .iter()
            .find(|l| **l < 0.0 || !l.is_finite())
        {
            return Err(invalid(format!(
                "class loss {bad} is negative or non-finite"
            )));
        }
        for (o, &l) in self.omega.iter_mut().zip(batch_class_losses) {
            *o = self.kappa * l + (1.0 - self.kappa) * *o;
        }
        self.t += 1;
        Ok(())
    }

    pub fn weights(&self) -> ClassWeights {
        let shifted: Vec<f64> = self.omega.iter().map(|o| self.epsilon + o).collect();
        // alpha_a = (1/s_a) / sum_u (1/s_u) = 1 / sum_u (s_a / s_u)
        ClassWeights(
            shifted
                .iter()
                .map(|&own| 1.0 / shifted.iter().map(|&other| own / other).sum::<f64>())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticWeighting {
    Uniform,
    InverseFrequency,
    ClassBalanced { beta: f64 },
    Prior,
}

/// Fixed weights computed from the number of positive training instances per class.
pub fn static_weights(
    strategy: StaticWeighting,
    class_positive_counts: &[usize],
) -> Result<ClassWeights> {
    let w = class_positive_counts.len();
    if w == 0 {
        return Err(invalid("no classes to weight"));
    }
    let need_positive = |name: &str| -> Result<()> {
        if let Some(a) = class_positive_counts.iter().position(|&n| n == 0) {
            return Err(invalid(format!(
                "{name} weighting needs a positive count for every class; class {a} has none"
            )));
        }
        Ok(())
    };
    match strategy {
        StaticWeighting::Uniform => Ok(ClassWeights::uniform(w)),
        StaticWeighting::InverseFrequency => {
            need_positive("inverse-frequency")?;
            let raw: Vec<f64> = class_positive_counts
                .iter()
                .map(|&n| 1.0 / n as f64)
                .collect();
            ClassWeights::normalize(&raw)
        }
        StaticWeighting::ClassBalanced { beta } => {
            if !(0.0..1.0).contains(&beta) {
                return Err(invalid(format!(
                    "class-balanced beta must lie in [0, 1), got {beta}"
                )));
            }
            need_positive("class-balanced")?;
            let raw: Vec<f64> = class_positive_counts
                .iter()
                .map(|&n| (1.0 - beta) / (1.0 - beta.powf(n as f64)))
                .collect();
            ClassWeights::normalize(&raw)
        }
        StaticWeighting::Prior => {
            need_positive("prior")?;
            let raw: Vec<f64> = class_positive_counts.iter().map(|&n| n as f64).collect();
            ClassWeights::normalize(&raw)
        }
    }
}

/// Weighting strategy selected for a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Dynamic { kappa: f64, epsilon: f64 },
    Static(StaticWeighting),
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::Dynamic {
            kappa: DEFAULT_KAPPA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Supplies the weights for each mini-batch of a training run.
///
/// Dynamic weights lag one batch: the weights returned by [`current`](Self::current)
/// depend only on losses passed to [`observe`](Self::observe) earlier.
#[derive(Debug, Clone)]
pub enum WeightSchedule {
    Dynamic(DynamicWeightState),
    Fixed(ClassWeights),
}

impl WeightSchedule {
    pub fn new(weighting: Weighting, class_positive_counts: &[usize]) -> Result<Self> {
        match weighting {
            Weighting::Dynamic { kappa, epsilon } => Ok(Self::Dynamic(DynamicWeightState::new(
                class_positive_counts.len(),
                kappa,
                epsilon,
            )?)),
            Weighting::Static(s) => Ok(Self::Fixed(static_weights(s, class_positive_counts)?)),
        }
    }

    pub fn current(&self) -> ClassWeights {
        match self {
            Self::Dynamic(state) => state.weights(),
            Self::Fixed(w) => w.clone(),
        }
    }

    pub fn observe(&mut self, batch_class_losses: &[f64]) -> Result<()> {
        match self {
            Self::Dynamic(state) => state.update(batch_class_losses),
            Self::Fixed(_) => Ok(()),
        }
    }

    pub fn omega(&self) -> Option<&[f64]> {
        match self {
            Self::Dynamic(state) => Some(state.omega()),
            Self::Fixed(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_examples() {
        assert_eq!(
            DynamicWeightState::new(4, 0.4, 1e-5).unwrap().omega(),
            &[0.25; 4]
        );
        let one = DynamicWeightState::new(1, 0.4, 1e-5).unwrap();
        assert_eq!(one.omega(), &[1.0]);
        assert_eq!(one.iteration(), 1);
        assert!(DynamicWeightState::new(3, 1.2, 1e-5).is_err());
        assert!(DynamicWeightState::new(0, 0.4, 1e-5).is_err());
        assert!(DynamicWeightState::new(3, 0.4, 0.0).is_err());
    }

    #[test]
    fn update_examples() {
        let mut s = DynamicWeightState::new(2, 0.0, 1e-5).unwrap();
        s.update(&[7.0, 3.0]).unwrap();
        assert_eq!(s.omega(), &[0.5, 0.5]);
        assert_eq!(s.iteration(), 2);

        let mut s = DynamicWeightState::new(2, 1.0, 1e-5).unwrap();
        s.update(&[2.0, 1.0]).unwrap();
        assert_eq!(s.omega(), &[2.0, 1.0]);

        let mut s = DynamicWeightState::new(2, 0.5, 1e-5).unwrap();
        s.update(&[2.0, 1.0]).unwrap();
        assert_eq!(s.omega(), &[1.25, 0.75]);
    }

    #[test]
    fn update_rejects_bad_losses() {
        let mut s = DynamicWeightState::new(2, 0.5, 1e-5).unwrap();
        assert!(s.update(&[-1.0, 1.0]).is_err());
        assert!(s.update(&[f64::NAN, 1.0]).is_err());
        assert!(s.update(&[1.0]).is_err());
        assert_eq!(s.iteration(), 1);
    }

    #[test]
    fn weights_examples() {
        let mut s = DynamicWeightState::new(2, 1.0, 1e-5).unwrap();
        s.update(&[2.0, 1.0]).unwrap();
        let a = s.weights();
        assert!((a.as_slice()[0] - 1.0 / 3.0).abs() < 1e-4);
        assert!((a.as_slice()[1] - 2.0 / 3.0).abs() < 1e-4);

        let u = DynamicWeightState::new(5, 0.4, 1e-5).unwrap().weights();
        assert_eq!(u, ClassWeights::uniform(5));

        s.update(&[0.0, 1.0]).unwrap();
        let a = s.weights();
        let (phi1, phi2) = (1.0 / 1e-5, 1.0 / (1e-5 + 1.0));
        assert!((a.as_slice()[0] - phi1 / (phi1 + phi2)).abs() < 1e-15);
        assert!((a.as_slice()[1] - phi2 / (phi1 + phi2)).abs() < 1e-15);
        assert!((a.as_slice()[1] - 9.9999e-6).abs() < 1e-9);
    }

    #[test]
    fn static_examples() {
        let u = static_weights(StaticWeighting::Uniform, &[5, 1, 9]).unwrap();
        assert_eq!(u.as_slice(), &[1.0 / 3.0; 3]);
        let inv = static_weights(StaticWeighting::InverseFrequency, &[100, 50]).unwrap();
        assert!((inv.as_slice()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((inv.as_slice()[1] - 2.0 / 3.0).abs() < 1e-15);
        for beta in [0.0, 0.9, 0.999] {
            let cb = static_weights(StaticWeighting::ClassBalanced { beta }, &[1, 1]).unwrap();
            assert_eq!(cb.as_slice(), &[0.5, 0.5]);
        }
        let prior = static_weights(StaticWeighting::Prior, &[30, 10]).unwrap();
        assert!((prior.as_slice()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn static_errors() {
        assert!(static_weights(StaticWeighting::InverseFrequency, &[3, 0]).is_err());
        assert!(static_weights(StaticWeighting::ClassBalanced { beta: 0.5 }, &[3, 0]).is_err());
        assert!(static_weights(StaticWeighting::ClassBalanced { beta: 1.0 }, &[3, 3]).is_err());
        assert!(static_weights(StaticWeighting::Uniform, &[]).is_err());
    }
}
