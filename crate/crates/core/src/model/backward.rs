use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::forward::{forward, DirectionTrace, ForwardTrace};
use super::params::{CellKind, DirectionParams, ModelParams};
use crate::error::{invalid, Result};
use crate::loss::{
    batch_loss_from_logits, batch_loss_grad, per_class_batch_loss_from_logits, FocalConfig,
};
use crate::types::EmbeddedInstance;

fn add_outer(dst: &mut Array2<f64>, col: &Array1<f64>, row: ArrayView1<f64>) {
    for (mut dst_row, &c) in dst.rows_mut().into_iter().zip(col) {
        if c != 0.0 {
            dst_row.scaled_add(c, &row);
        }
    }
}

/// Backpropagation through time for one direction. `d_hidden[j]` is the upstream
/// gradient on the hidden state produced at processing step `j`. Returns the
/// gradient on each step's input.
fn direction_backward(
    cell: CellKind,
    p: &DirectionParams,
    trace: &DirectionTrace,
    inputs: &[Array1<f64>],
    d_hidden: &[Array1<f64>],
    grad: &mut DirectionParams,
) -> Vec<Array1<f64>> {
    let h = p.h0.len();
    let steps = inputs.len();
    let mut d_inputs = vec![Array1::zeros(0); steps];
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    let w_x_t: ArrayView2<f64> = p.w_x.t();
    let w_h_t: ArrayView2<f64> = p.w_h.t();

    for j in (0..steps).rev() {
        let h_prev = if j == 0 {
            p.h0.view()
        } else {
            trace.hidden[j - 1].view()
        };
        let dh = &d_hidden[j] + &dh_next;
        let d_pre = match cell {
            CellKind::Elman => {
                let out = &trace.hidden[j];
                &dh * &out.mapv(|v| 1.0 - v * v)
            }
            CellKind::Lstm => {
                let gates = &trace.gates[j];
                let z = gates.slice(s![..h]);
                let i = gates.slice(s![h..2 * h]);
                let f = gates.slice(s![2 * h..3 * h]);
                let o = gates.slice(s![3 * h..]);
                let ct = &trace.cell_tanh[j];
                let c_prev = if j == 0 {
                    p.c0.view()
                } else {
                    trace.cell[j - 1].view()
                };

                let dc = &dc_next + &(&dh * &o * &ct.mapv(|v| 1.0 - v * v));
                let mut d_pre = Array1::zeros(4 * h);
                d_pre
                    .slice_mut(s![..h])
                    .assign(&(&dc * &i * &z.mapv(|v| 1.0 - v * v)));
                d_pre
                    .slice_mut(s![h..2 * h])
                    .assign(&(&dc * &z * &i.mapv(|v| v * (1.0 - v))));
                d_pre
                    .slice_mut(s![2 * h..3 * h])
                    .assign(&(&dc * &c_prev * &f.mapv(|v| v * (1.0 - v))));
                d_pre
                    .slice_mut(s![3 * h..])
                    .assign(&(&dh * ct * &o.mapv(|v| v * (1.0 - v))));
                dc_next = &dc * &f;
                d_pre
            }
        };
        add_outer(&mut grad.w_x, &d_pre, inputs[j].view());
        add_outer(&mut grad.w_h, &d_pre, h_prev);
        grad.bias += &d_pre;
        d_inputs[j] = w_x_t.dot(&d_pre);
        dh_next = w_h_t.dot(&d_pre);
    }
    d_inputs
}

/// Accumulates into `grad` the parameter gradient of `d_logits . logits` for one
/// instance, given its forward trace.
pub fn backward_instance(
    params: &ModelParams,
    trace: &ForwardTrace,
    d_logits: ArrayView1<f64>,
    grad: &mut ModelParams,
) {
    let cfg = &params.config;
    let hidden = cfg.hidden_size;
    let top = trace.top_states();
    let t_len = top.len();

    add_outer(&mut grad.output, &d_logits.to_owned(), trace.pooled.view());
    let d_pooled = params.output.t().dot(&d_logits);

    // Attention softmax backward.
    let d_beta: Vec<f64> = top.iter().map(|h| h.dot(&d_pooled)).collect();
    let weighted: f64 = trace
        .attention
        .iter()
        .zip(&d_beta)
        .map(|(b, d)| b * d)
        .sum();
    let mut d_states: Vec<Array1<f64>> = Vec::with_capacity(t_len);
    for (t, h) in top.iter().enumerate() {
        let beta = trace.attention[t];
        let d_energy = beta * (d_beta[t] - weighted);
        grad.attention.scaled_add(d_energy, h);
        let mut d = &d_pooled * beta;
        d.scaled_add(d_energy, &params.attention);
        d_states.push(d);
    }

    for (k, layer_trace) in trace.layers.iter().enumerate().rev() {
        let layer = &params.layers[k];
        let d_fwd: Vec<Array1<f64>> = d_states
            .iter()
            .map(|d| d.slice(s![..hidden]).to_owned())
            .collect();
        let d_bwd: Vec<Array1<f64>> = (0..t_len)
            .map(|j| d_states[t_len - 1 - j].slice(s![hidden..]).to_owned())
            .collect();
        let reversed: Vec<Array1<f64>> = layer_trace.inputs.iter().rev().cloned().collect();

        let grad_layer = &mut grad.layers[k];
        let dx_fwd = direction_backward(
            cfg.cell,
            &layer.fwd,
            &layer_trace.fwd,
            &layer_trace.inputs,
            &d_fwd,
            &mut grad_layer.fwd,
        );
        let dx_bwd = direction_backward(
            cfg.cell,
            &layer.bwd,
            &layer_trace.bwd,
            &reversed,
            &d_bwd,
            &mut grad_layer.bwd,
        );
        if k > 0 {
            d_states = (0..t_len)
                .map(|t| &dx_fwd[t] + &dx_bwd[t_len - 1 - t])
                .collect();
        }
    }
}

/// Loss, per-class loss sums and parameter gradients for one mini-batch.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    /// Unweighted per-class loss sums over the batch.
    pub class_losses: Vec<f64>,
    pub grads: ModelParams,
    pub logits: Array2<f64>,
}

/// Forward and backward over a batch of labeled instances with fixed class weights.
/// The loss averages over the batch, so duplicating every instance leaves the
/// gradient unchanged.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &[&EmbeddedInstance],
    focal: &FocalConfig,
    alpha: &[f64],
) -> Result<BatchGradients> {
    let w = params.config.num_classes;
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let mut traces = Vec::with_capacity(batch.len());
    let mut logits = Array2::zeros((batch.len(), w));
    let mut labels = Array2::from_elem((batch.len(), w), false);
    for (i, inst) in batch.iter().enumerate() {
        let l = inst
            .labels
            .as_ref()
            .ok_or_else(|| invalid(format!("instance `{}` has no labels", inst.id)))?;
        if l.len() != w {
            return Err(invalid(format!(
                "instance `{}` has {} labels, model has {w} classes",
                inst.id,
                l.len()
            )));
        }
        let trace = forward(params, inst)?;
        logits.row_mut(i).assign(&trace.logits);
        for (a, &b) in l.bits().iter().enumerate() {
            labels[[i, a]] = b;
        }
        traces.push(trace);
    }

    let loss = batch_loss_from_logits(logits.view(), labels.view(), alpha, focal)?;
    let class_losses =
        per_class_batch_loss_from_logits(logits.view(), labels.view(), focal)?.to_vec();
    let d_logits = batch_loss_grad(logits.view(), labels.view(), alpha, focal)?;

    let mut grads = params.zeros_like();
    for (i, trace) in traces.iter().enumerate() {
        backward_instance(params, trace, d_logits.row(i), &mut grads);
    }
    Ok(BatchGradients {
        loss,
        class_losses,
        grads,
        logits,
    })
}
