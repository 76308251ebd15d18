use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Standard deviation of the initial hidden/cell states (variance 0.01).
pub const INITIAL_STATE_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Elman,
    Lstm,
}

impl CellKind {
    /// Number of stacked pre-activation blocks per step.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Elman => 1,
            CellKind::Lstm => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cell: CellKind,
    /// Hidden units per direction.
    pub hidden_size: usize,
    pub num_layers: usize,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("input_dim", self.input_dim),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(invalid(format!("model {name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            2 * self.hidden_size
        }
    }
}

/// Parameters of one recurrent direction. For LSTM the blocks of rows in `w_x`,
/// `w_h` and `bias` are, in order, the candidate `z`, the input gate, the forget
/// gate and the output gate.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionParams {
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub bias: Array1<f64>,
    /// Fixed initial hidden state (sampled once, never trained).
    pub h0: Array1<f64>,
    /// Fixed initial cell state; empty for Elman cells.
    pub c0: Array1<f64>,
}

impl DirectionParams {
    fn zeros(cell: CellKind, hidden: usize, input: usize) -> Self {
        let g = cell.gates() * hidden;
        Self {
            w_x: Array2::zeros((g, input)),
            w_h: Array2::zeros((g, hidden)),
            bias: Array1::zeros(g),
            h0: Array1::zeros(hidden),
            c0: Array1::zeros(if cell == CellKind::Lstm { hidden } else { 0 }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub fwd: DirectionParams,
    pub bwd: DirectionParams,
}

/// All tensors of the classifier. The same struct doubles as the gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
    /// Attention vector scoring each top-layer state.
    pub attention: Array1<f64>,
    /// Output projection, `num_classes x 2*hidden_size`.
    pub output: Array2<f64>,
}

/// Shape and name of one serialized tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub learnable: bool,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_size;
        let layers = (0..config.num_layers)
            .map(|k| {
                let input = config.layer_input_dim(k);
                LayerParams {
                    fwd: DirectionParams::zeros(config.cell, h, input),
                    bwd: DirectionParams::zeros(config.cell, h, input),
                }
            })
            .collect();
        Ok(Self {
            config,
            layers,
            attention: Array1::zeros(2 * h),
            output: Array2::zeros((config.num_classes, 2 * h)),
        })
    }

    /// Weights uniform in `±1/sqrt(hidden_size)`; initial states `N(0, 0.01)`.
    /// Deterministic for a given seed.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (config.hidden_size as f64).sqrt();
        let normal = Normal::new(0.0, INITIAL_STATE_STD).expect("valid std");
        for layer in &mut params.layers {
            for dir in [&mut layer.fwd, &mut layer.bwd] {
                for v in dir
                    .w_x
                    .iter_mut()
                    .chain(dir.w_h.iter_mut())
                    .chain(dir.bias.iter_mut())
                {
                    *v = rng.random_range(-bound..=bound);
                }
                for v in dir.h0.iter_mut().chain(dir.c0.iter_mut()) {
                    *v = normal.sample(&mut rng);
                }
            }
        }
        for v in params.attention.iter_mut().chain(params.output.iter_mut()) {
            *v = rng.random_range(-bound..=bound);
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    /// Every tensor in serialization order, learnable ones flagged.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            for (dname, dir) in [("fwd", &layer.fwd), ("bwd", &layer.bwd)] {
                let p = format!("layer{k}.{dname}");
                out.push(spec(format!("{p}.w_x"), dir.w_x.shape(), true));
                out.push(spec(format!("{p}.w_h"), dir.w_h.shape(), true));
                out.push(spec(format!("{p}.bias"), dir.bias.shape(), true));
                out.push(spec(format!("{p}.h0"), dir.h0.shape(), false));
                if self.config.cell == CellKind::Lstm {
                    out.push(spec(format!("{p}.c0"), dir.c0.shape(), false));
                }
            }
        }
        out.push(spec("attention".into(), self.attention.shape(), true));
        out.push(spec("output".into(), self.output.shape(), true));
        out
    }

    /// All tensors as flat slices, in [`tensor_specs`](Self::tensor_specs) order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        let lstm = self.config.cell == CellKind::Lstm;
        for layer in &self.layers {
            for dir in [&layer.fwd, &layer.bwd] {
                out.push(dir.w_x.as_slice().expect("standard layout"));
                out.push(dir.w_h.as_slice().expect("standard layout"));
                out.push(dir.bias.as_slice().expect("standard layout"));
                out.push(dir.h0.as_slice().expect("standard layout"));
                if lstm {
                    out.push(dir.c0.as_slice().expect("standard layout"));
                }
            }
        }
        out.push(self.attention.as_slice().expect("standard layout"));
        out.push(self.output.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        let lstm = self.config.cell == CellKind::Lstm;
        for layer in &mut self.layers {
            for dir in [&mut layer.fwd, &mut layer.bwd] {
                out.push(dir.w_x.as_slice_mut().expect("standard layout"));
                out.push(dir.w_h.as_slice_mut().expect("standard layout"));
                out.push(dir.bias.as_slice_mut().expect("standard layout"));
                out.push(dir.h0.as_slice_mut().expect("standard layout"));
                if lstm {
                    out.push(dir.c0.as_slice_mut().expect("standard layout"));
                }
            }
        }
        out.push(self.attention.as_slice_mut().expect("standard layout"));
        out.push(self.output.as_slice_mut().expect("standard layout"));
        out
    }

    /// Learnable tensors only, with their names.
    pub fn learnable(&self) -> Vec<(String, &[f64])> {
        self.tensor_specs()
            .into_iter()
            .zip(self.tensors())
            .filter(|(s, _)| s.learnable)
            .map(|(s, t)| (s.name, t))
            .collect()
    }

    pub fn learnable_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let specs = self.tensor_specs();
        specs
            .into_iter()
            .zip(self.tensors_mut())
            .filter(|(s, _)| s.learnable)
            .map(|(s, t)| (s.name, t))
            .collect()
    }

    pub fn num_learnable(&self) -> usize {
        self.learnable().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rounds every value to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Adds `scale * other` to every learnable tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, dst), (_, src)) in self.learnable_mut().into_iter().zip(other.learnable()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    /// Swaps the forward and backward parameter sets of every layer.
    pub fn swap_directions(&mut self) {
        for layer in &mut self.layers {
            std::mem::swap(&mut layer.fwd, &mut layer.bwd);
        }
    }
}

fn spec(name: String, dims: &[usize], learnable: bool) -> TensorSpec {
    TensorSpec {
        name,
        dims: dims.to_vec(),
        learnable,
    }
}
