//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; every key is optional, so an empty file yields the defaults.
//!
//! | key                        | default   |
//! |----------------------------|-----------|
//! | `cell`                     | `lstm`    |
//! | `hidden_size`              | `128`     |
//! | `num_layers`               | `1`       |
//! | `batch_size`               | `32`      |
//! | `learning_rate`            | `0.001`   |
//! | `adam_beta1`               | `0.9`     |
//! | `adam_beta2`               | `0.999`   |
//! | `adam_eps`                 | `1e-8`    |
//! | `weight_decay`             | `1e-5`    |
//! | `patience_epochs`          | `10`      |
//! | `max_epochs`               | `200`     |
//! | `weighting`                | `dynamic` (`uniform`, `inverse_frequency`, `class_balanced`, `prior`) |
//! | `kappa`                    | `0.4`     |
//! | `epsilon`                  | `1e-5`    |
//! | `beta`                     | `0.999` (class-balanced only) |
//! | `gamma`                    | `2`       |
//! | `prob_floor`               | `1e-7`    |
//! | `threshold_split_fraction` | `0.5`     |
//! | `seed`                     | `0`       |

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::FocalConfig;
use crate::model::CellKind;
use crate::trainer::TrainConfig;
use crate::weighting::{
    DynamicWeightState, StaticWeighting, Weighting, DEFAULT_EPSILON, DEFAULT_KAPPA,
};

/// Recurrent architecture; input width and class count come from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub cell: CellKind,
    pub hidden_size: usize,
    pub num_layers: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            cell: CellKind::Lstm,
            hidden_size: 128,
            num_layers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

const KEYS: &[&str] = &[
    "cell",
    "hidden_size",
    "num_layers",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "weight_decay",
    "patience_epochs",
    "max_epochs",
    "weighting",
    "kappa",
    "epsilon",
    "beta",
    "gamma",
    "prob_floor",
    "threshold_split_fraction",
    "seed",
];

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some((line, raw)) => raw.parse().map_err(|_| Error::Config {
                line: *line,
                msg: format!("cannot parse `{raw}` for `{key}`"),
            }),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |(l, _)| *l)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or_default().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        if entries
            .insert(key.to_string(), (line, value.trim().to_string()))
            .is_some()
        {
            return Err(Error::Config {
                line,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }
    let e = Entries(entries);
    let defaults = RunConfig::default();

    let cell = match e.get("cell", "lstm".to_string())?.as_str() {
        "lstm" => CellKind::Lstm,
        "elman" | "rnn" => CellKind::Elman,
        other => {
            return Err(Error::Config {
                line: e.line("cell"),
                msg: format!("unknown cell `{other}`"),
            })
        }
    };
    let arch = ArchConfig {
        cell,
        hidden_size: e.get("hidden_size", defaults.arch.hidden_size)?,
        num_layers: e.get("num_layers", defaults.arch.num_layers)?,
    };

    let weighting = match e.get("weighting", "dynamic".to_string())?.as_str() {
        "dynamic" => {
            let kappa = e.get("kappa", DEFAULT_KAPPA)?;
            let epsilon = e.get("epsilon", DEFAULT_EPSILON)?;
            DynamicWeightState::new(1, kappa, epsilon)?;
            Weighting::Dynamic { kappa, epsilon }
        }
        "uniform" => Weighting::Static(StaticWeighting::Uniform),
        "inverse_frequency" => Weighting::Static(StaticWeighting::InverseFrequency),
        "class_balanced" => {
            let beta = e.get("beta", 0.999)?;
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config {
                    line: e.line("beta"),
                    msg: format!("beta must lie in [0, 1), got {beta}"),
                });
            }
            Weighting::Static(StaticWeighting::ClassBalanced { beta })
        }
        "prior" => Weighting::Static(StaticWeighting::Prior),
        other => {
            return Err(Error::Config {
                line: e.line("weighting"),
                msg: format!("unknown weighting `{other}`"),
            })
        }
    };
    let d = &defaults.train;
    let focal = FocalConfig::new(
        e.get("gamma", d.focal.gamma())?,
        e.get("prob_floor", d.focal.prob_floor())?,
    )?;
    let train = TrainConfig {
        batch_size: e.get("batch_size", d.batch_size)?,
        adam: crate::optim::AdamConfig {
            learning_rate: e.get("learning_rate", d.adam.learning_rate)?,
            beta1: e.get("adam_beta1", d.adam.beta1)?,
            beta2: e.get("adam_beta2", d.adam.beta2)?,
            eps: e.get("adam_eps", d.adam.eps)?,
            weight_decay: e.get("weight_decay", d.adam.weight_decay)?,
        },
        patience_epochs: e.get("patience_epochs", d.patience_epochs)?,
        max_epochs: e.get("max_epochs", d.max_epochs)?,
        weighting,
        focal,
        threshold_split_fraction: e.get("threshold_split_fraction", d.threshold_split_fraction)?,
        seed: e.get("seed", d.seed)?,
    };
    train.validate()?;
    if arch.hidden_size == 0 || arch.num_layers == 0 {
        return Err(Error::InvalidArgument(
            "hidden_size and num_layers must be >= 1".into(),
        ));
    }
    Ok(RunConfig { arch, train })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(
            c.train.weighting,
            Weighting::Dynamic {
                kappa: 0.4,
                epsilon: 1e-5
            }
        );
        assert_eq!(c.arch.hidden_size, 128);
    }

    #[test]
    fn parses_overrides() {
        let c = parse_config(
            "# small run\ncell = elman\nhidden_size=16\nweighting = class_balanced\nbeta = 0.99\ngamma = 0 # plain CE\nseed=7\n",
        )
        .unwrap();
        assert_eq!(c.arch.cell, CellKind::Elman);
        assert_eq!(c.arch.hidden_size, 16);
        assert_eq!(
            c.train.weighting,
            Weighting::Static(StaticWeighting::ClassBalanced { beta: 0.99 })
        );
        assert_eq!(c.train.focal.gamma(), 0.0);
        assert_eq!(c.train.seed, 7);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_config("nonsense"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("\nfoo = 1"),
            Err(Error::Config { line: 2, .. })
        ));
        assert!(parse_config("seed = x").is_err());
        assert!(parse_config("seed = 1\nseed = 2").is_err());
        assert!(parse_config("gamma = -1").is_err());
        assert!(parse_config("kappa = 1.5").is_err());
        assert!(parse_config("weighting = class_balanced\nbeta = 1").is_err());
        assert!(parse_config("threshold_split_fraction = 1").is_err());
    }
}
