//! Test-side reference implementations, written as plain loops over `Vec<f64>`
//! so they share no code with the library's ndarray paths.
#![allow(dead_code)]

use mlfocal::loss::FocalConfig;
use mlfocal::model::{batch_gradients, CellKind, DirectionParams, ModelConfig, ModelParams};
use mlfocal::types::{EmbeddedDataset, EmbeddedInstance, LabelVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn config(
    cell: CellKind,
    hidden: usize,
    layers: usize,
    input: usize,
    classes: usize,
) -> ModelConfig {
    ModelConfig {
        cell,
        hidden_size: hidden,
        num_layers: layers,
        input_dim: input,
        num_classes: classes,
    }
}

pub fn random_instance(
    rng: &mut impl Rng,
    id: usize,
    len: usize,
    m: usize,
    w: usize,
) -> EmbeddedInstance {
    let tokens = Array2::from_shape_fn((len, m), |_| rng.random_range(-1.0f32..1.0));
    let labels = LabelVector::new((0..w).map(|_| rng.random_bool(0.5)).collect());
    EmbeddedInstance::new(format!("i{id}"), tokens, Some(labels)).unwrap()
}

pub fn random_dataset(rng: &mut impl Rng, n: usize, m: usize, w: usize) -> EmbeddedDataset {
    let instances = (0..n)
        .map(|i| {
            let len = rng.random_range(1..=4);
            random_instance(rng, i, len, m, w)
        })
        .collect();
    EmbeddedDataset::new((0..w).map(|a| format!("c{a}")).collect(), m, instances).unwrap()
}

/// Random class weights summing to one.
pub fn random_alpha(rng: &mut impl Rng, w: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..w).map(|_| rng.random_range(0.1..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| v / sum).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec(m: &ndarray::Array2<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[r] += m[[r, c]] * x[c];
        }
    }
    out
}

fn run(cell: CellKind, p: &DirectionParams, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = p.h0.len();
    let mut hp: Vec<f64> = p.h0.to_vec();
    let mut cp: Vec<f64> = p.c0.to_vec();
    let mut out = Vec::new();
    for x in xs {
        let a = matvec(&p.w_x, x);
        let b = matvec(&p.w_h, &hp);
        let pre: Vec<f64> = (0..a.len()).map(|r| a[r] + b[r] + p.bias[r]).collect();
        match cell {
            CellKind::Elman => hp = pre.iter().map(|v| v.tanh()).collect(),
            CellKind::Lstm => {
                let mut c = vec![0.0; h];
                let mut hn = vec![0.0; h];
                for j in 0..h {
                    let z = pre[j].tanh();
                    let i = sig(pre[h + j]);
                    let f = sig(pre[2 * h + j]);
                    let o = sig(pre[3 * h + j]);
                    c[j] = z * i + cp[j] * f;
                    hn[j] = c[j].tanh() * o;
                }
                cp = c;
                hp = hn;
            }
        }
        out.push(hp.clone());
    }
    out
}

/// Top-layer states, attention weights and logits for one instance.
pub struct Reference {
    pub top: Vec<Vec<f64>>,
    pub attention: Vec<f64>,
    pub logits: Vec<f64>,
}

pub fn reference_forward(params: &ModelParams, inst: &EmbeddedInstance) -> Reference {
    let mut xs: Vec<Vec<f64>> = inst
        .tokens()
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let t = xs.len();
    for layer in &params.layers {
        let f = run(params.config.cell, &layer.fwd, &xs);
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let b = run(params.config.cell, &layer.bwd, &rev);
        xs = (0..t)
            .map(|i| [f[i].clone(), b[t - 1 - i].clone()].concat())
            .collect();
    }
    let e: Vec<f64> = xs
        .iter()
        .map(|h| {
            h.iter()
                .zip(params.attention.iter())
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    let mx = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = e.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = ex.iter().sum();
    let attention: Vec<f64> = ex.iter().map(|v| v / s).collect();
    let mut pooled = vec![0.0; xs[0].len()];
    for (beta, h) in attention.iter().zip(&xs) {
        for (p, v) in pooled.iter_mut().zip(h) {
            *p += beta * v;
        }
    }
    let logits = matvec(&params.output, &pooled);
    Reference {
        top: xs,
        attention,
        logits,
    }
}

/// `(1 - p)^gamma * -ln p` with `p` the probability of the gold outcome.
pub fn focal_ref(score: f64, gold: bool, gamma: f64) -> f64 {
    let p = if gold { score } else { 1.0 - score };
    (1.0 - p).powf(gamma) * -p.ln()
}

/// Class-weighted mean focal loss computed entirely through the reference forward.
pub fn reference_batch_loss(
    params: &ModelParams,
    batch: &[&EmbeddedInstance],
    alpha: &[f64],
    gamma: f64,
) -> f64 {
    let mut total = 0.0;
    for inst in batch {
        let r = reference_forward(params, inst);
        let labels = inst.labels.as_ref().unwrap();
        for (a, z) in r.logits.iter().enumerate() {
            total += alpha[a] * focal_ref(sig(*z), labels.get(a), gamma);
        }
    }
    total / batch.len() as f64
}

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

/// Worst element-wise relative error between analytic gradients and central
/// differences of [`reference_batch_loss`]. Magnitudes below `FLOOR` are
/// compared against `FLOOR` instead.
pub fn gradient_error(
    params: &ModelParams,
    batch: &[&EmbeddedInstance],
    alpha: &[f64],
    gamma: f64,
) -> f64 {
    let focal = FocalConfig::new(gamma, 1e-7).unwrap();
    let analytic = batch_gradients(params, batch, &focal, alpha).unwrap().grads;
    let mut probe = params.clone();
    let names: Vec<String> = params.learnable().into_iter().map(|(n, _)| n).collect();
    let mut worst: f64 = 0.0;
    for (k, name) in names.iter().enumerate() {
        let len = params.learnable()[k].1.len();
        for j in 0..len {
            let orig = probe.learnable()[k].1[j];
            probe.learnable_mut()[k].1[j] = orig + STEP;
            let up = reference_batch_loss(&probe, batch, alpha, gamma);
            probe.learnable_mut()[k].1[j] = orig - STEP;
            let down = reference_batch_loss(&probe, batch, alpha, gamma);
            probe.learnable_mut()[k].1[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic.learnable()[k].1[j];
            let scale = a.abs().max(numeric.abs()).max(FLOOR);
            let err = (a - numeric).abs() / scale;
            assert!(err.is_finite(), "{name}[{j}]");
            worst = worst.max(err);
        }
    }
    worst
}

/// One small random gradient check; `seed` picks the data, lengths and gamma.
pub fn gradient_case(cell: CellKind, layers: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (m, w) = (3, 2);
    let params = ModelParams::init(config(cell, 3, layers, m, w), seed).unwrap();
    let insts: Vec<_> = (0..2)
        .map(|i| {
            let len = 1 + (seed as usize + i) % 4;
            random_instance(&mut r, i, len, m, w)
        })
        .collect();
    let batch: Vec<&EmbeddedInstance> = insts.iter().collect();
    let alpha = random_alpha(&mut r, w);
    gradient_error(
        &params,
        &batch,
        &alpha,
        [0.0, 1.0, 2.0, 2.5][seed as usize % 4],
    )
}

/// Small random scored set with scores on a coarse grid so ties are common.
pub fn discrete_scored_set(rng: &mut impl Rng) -> mlfocal::thresholding::ScoredSet {
    let n = rng.random_range(1..=10);
    let w = rng.random_range(1..=3);
    let scores = Array2::from_shape_fn((n, w), |_| rng.random_range(0..=5) as f64 / 5.0);
    let golds = Array2::from_shape_fn((n, w), |_| rng.random_bool(0.4));
    mlfocal::thresholding::ScoredSet::new(scores, golds).unwrap()
}

/// Per-class F1 by direct counting; zero denominators give 0.
pub fn f1_by_counting(preds: &Array2<bool>, golds: &Array2<bool>, class: usize) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for i in 0..preds.nrows() {
        match (preds[[i, class]], golds[[i, class]]) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}
