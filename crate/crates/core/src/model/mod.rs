//! Bidirectional recurrent classifier with attention pooling and a sigmoid head.
//!
//! Each of the `num_layers` layers runs a forward and a backward recurrence
//! (Elman `tanh` cells or LSTM cells) over the sequence; the backward one reads
//! the reversed sequence. Their states are concatenated per timestep and feed
//! both directions of the next layer. The top layer's states `h_t` are pooled
//! with `beta = softmax_t(h_t . s)` and mapped to independent per-class scores
//! `sigmoid(W * sum_t beta_t h_t)`.
//!
//! Sequences are processed one instance at a time, without padding.

mod backward;
mod forward;
mod params;

pub use backward::{backward_instance, batch_gradients, BatchGradients};
pub use forward::{forward, DirectionTrace, ForwardTrace, LayerTrace};
pub use params::{
    CellKind, DirectionParams, LayerParams, ModelConfig, ModelParams, TensorSpec, INITIAL_STATE_STD,
};

use ndarray::Array2;

use crate::error::Result;
use crate::types::EmbeddedInstance;

/// Scores (`n x w`) for a list of instances.
pub fn predict_scores(params: &ModelParams, instances: &[EmbeddedInstance]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((instances.len(), params.config.num_classes));
    for (i, inst) in instances.iter().enumerate() {
        out.row_mut(i).assign(&forward(params, inst)?.scores);
    }
    Ok(out)
}
