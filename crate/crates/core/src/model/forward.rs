use ndarray::{s, Array1, ArrayView1};

use super::params::{CellKind, DirectionParams, ModelParams};
use crate::error::{Error, Result};
use crate::loss::sigmoid;
use crate::types::EmbeddedInstance;

/// Cached activations of one recurrent direction, in processing order.
#[derive(Debug, Clone)]
pub struct DirectionTrace {
    /// Hidden state after each step.
    pub hidden: Vec<Array1<f64>>,
    /// LSTM only: gate activations `[z, s, f, o]` stacked, cell state and `tanh(cell)`.
    pub gates: Vec<Array1<f64>>,
    pub cell: Vec<Array1<f64>>,
    pub cell_tanh: Vec<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Inputs at each original timestep.
    pub inputs: Vec<Array1<f64>>,
    pub fwd: DirectionTrace,
    /// Processed over the reversed sequence; index `j` is original timestep `T-1-j`.
    pub bwd: DirectionTrace,
    /// `[fwd_t; bwd_t]` at each original timestep.
    pub outputs: Vec<Array1<f64>>,
}

/// Everything the backward pass needs for one instance.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    /// Attention weights over timesteps.
    pub attention: Array1<f64>,
    pub pooled: Array1<f64>,
    pub logits: Array1<f64>,
    pub scores: Array1<f64>,
}

impl ForwardTrace {
    pub fn top_states(&self) -> &[Array1<f64>] {
        &self.layers.last().expect("at least one layer").outputs
    }
}

pub(crate) fn run_direction(
    cell: CellKind,
    p: &DirectionParams,
    inputs: &[Array1<f64>],
) -> DirectionTrace {
    let h = p.h0.len();
    let mut trace = DirectionTrace {
        hidden: Vec::with_capacity(inputs.len()),
        gates: Vec::new(),
        cell: Vec::new(),
        cell_tanh: Vec::new(),
    };
    let mut h_prev = p.h0.clone();
    let mut c_prev = p.c0.clone();
    for x in inputs {
        let pre = p.w_x.dot(x) + p.w_h.dot(&h_prev) + &p.bias;
        match cell {
            CellKind::Elman => {
                h_prev = pre.mapv(f64::tanh);
            }
            CellKind::Lstm => {
                let mut gates = pre;
                gates.slice_mut(s![..h]).mapv_inplace(f64::tanh);
                gates.slice_mut(s![h..]).mapv_inplace(sigmoid);
                let z = gates.slice(s![..h]);
                let i = gates.slice(s![h..2 * h]);
                let f = gates.slice(s![2 * h..3 * h]);
                let o = gates.slice(s![3 * h..]);
                let c = &i * &z + &f * &c_prev;
                let ct = c.mapv(f64::tanh);
                h_prev = &o * &ct;
                c_prev = c.clone();
                trace.gates.push(gates);
                trace.cell.push(c);
                trace.cell_tanh.push(ct);
            }
        }
        trace.hidden.push(h_prev.clone());
    }
    trace
}

fn concat(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(a.len() + b.len());
    out.slice_mut(s![..a.len()]).assign(&a);
    out.slice_mut(s![a.len()..]).assign(&b);
    out
}

pub(crate) fn softmax(values: &Array1<f64>) -> Array1<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = values.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Runs the classifier on one token sequence.
pub fn forward(params: &ModelParams, instance: &EmbeddedInstance) -> Result<ForwardTrace> {
    let cfg = &params.config;
    if instance.embedding_dim() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "instance `{}` has width {}, model expects {}",
            instance.id,
            instance.embedding_dim(),
            cfg.input_dim
        )));
    }
    let mut inputs: Vec<Array1<f64>> = instance
        .tokens()
        .rows()
        .into_iter()
        .map(|r| r.mapv(f64::from))
        .collect();
    let t_len = inputs.len();

    let mut layers = Vec::with_capacity(cfg.num_layers);
    for layer in &params.layers {
        let fwd = run_direction(cfg.cell, &layer.fwd, &inputs);
        let reversed: Vec<Array1<f64>> = inputs.iter().rev().cloned().collect();
        let bwd = run_direction(cfg.cell, &layer.bwd, &reversed);
        let outputs: Vec<Array1<f64>> = (0..t_len)
            .map(|t| concat(fwd.hidden[t].view(), bwd.hidden[t_len - 1 - t].view()))
            .collect();
        layers.push(LayerTrace {
            inputs: std::mem::take(&mut inputs),
            fwd,
            bwd,
            outputs: outputs.clone(),
        });
        inputs = outputs;
    }

    let top = &layers.last().expect("num_layers >= 1").outputs;
    let energies = Array1::from_iter(top.iter().map(|h| h.dot(&params.attention)));
    let attention = softmax(&energies);
    let mut pooled = Array1::zeros(2 * cfg.hidden_size);
    for (beta, h) in attention.iter().zip(top) {
        pooled.scaled_add(*beta, h);
    }
    let logits = params.output.dot(&pooled);
    let scores = logits.mapv(sigmoid);
    Ok(ForwardTrace {
        layers,
        attention,
        pooled,
        logits,
        scores,
    })
}
