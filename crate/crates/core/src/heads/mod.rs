//! Trainable pieces of the hierarchy and their hand-derived gradients.
//!
//! * global head: linear softmax classifier on average-pooled features;
//! * shared attention: `M` latent queries attending over the `H·W` cells,
//!   `A = softmax(QKᵀ/√d)V` with `K = V =` the cell vectors;
//! * local heads: one linear layer per group on `flatten(A)` (query-major).
//!
//! All arithmetic is `f64`.

mod optim;
mod saliency;
mod snapshot;
mod train;

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::ActivationMap;
use crate::morph::ArchState;

pub use optim::{lr_at_epoch, sgd_step, OptimizerState, Param, LR_DECAY, LR_DECAY_EVERY, MOMENTUM, WEIGHT_DECAY};
pub use saliency::saliency;
pub use snapshot::{decode_model, encode_model, ModelHeader, MODEL_FORMAT};
pub use train::{train_global, train_local, LocalExample, TrainConfig};

pub const DEFAULT_QUERIES: usize = 6;

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..=a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LinearHead {
    pub fn zeros(arity: usize, in_dim: usize) -> Self {
        Self { weights: Array2::zeros((arity, in_dim)), biases: Array1::zeros(arity) }
    }

    pub fn arity(&self) -> usize {
        self.biases.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// `W·x + b`.
    pub fn forward(&self, x: &[f64]) -> Result<Array1<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::DimMismatch { expected: self.in_dim(), got: x.len() });
        }
        let x = ndarray::ArrayView1::from(x);
        Ok(self.weights.dot(&x) + &self.biases)
    }
}

pub fn global_forward(head: &LinearHead, pooled: &[f64]) -> Result<Array1<f64>> {
    head.forward(pooled)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedAttention {
    /// `M × d`, one latent query per row.
    pub queries: Array2<f64>,
}

impl SharedAttention {
    pub fn num_queries(&self) -> usize {
        self.queries.nrows()
    }

    pub fn dim(&self) -> usize {
        self.queries.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalHead {
    pub group_id: usize,
    pub head: LinearHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `M × (H·W)` softmax weights.
    pub weights: Array2<f64>,
    /// `M × d` attended descriptors.
    pub output: Array2<f64>,
}

impl Attention {
    /// Rows of the output concatenated, query-major.
    pub fn flattened(&self) -> Vec<f64> {
        self.output.iter().copied().collect()
    }
}

pub fn attention_forward(queries: &Array2<f64>, map: &ActivationMap) -> Result<Attention> {
    let d = map.grid().d;
    if queries.ncols() != d {
        return Err(Error::DimMismatch { expected: d, got: queries.ncols() });
    }
    let keys = map.cells();
    let scale = 1.0 / (d as f64).sqrt();
    let mut weights = queries.dot(&keys.t()) * scale;
    for mut row in weights.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    let output = weights.dot(&keys);
    Ok(Attention { weights, output })
}

pub fn local_forward(shared: &SharedAttention, head: &LocalHead, map: &ActivationMap) -> Result<Array1<f64>> {
    let att = attention_forward(&shared.queries, map)?;
    head.head.forward(&att.flattened())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl LinearGrads {
    fn zeros_like(h: &LinearHead) -> Self {
        Self { weights: Array2::zeros(h.weights.raw_dim()), biases: Array1::zeros(h.arity()) }
    }

    fn scale(&mut self, s: f64) {
        self.weights *= s;
        self.biases *= s;
    }
}

/// `softmax(z) − onehot(label)`, the cross-entropy gradient w.r.t. logits,
/// with the loss.
fn cross_entropy_grad(logits: &Array1<f64>, label: usize) -> (f64, Array1<f64>) {
    let probs = softmax(logits.as_slice().expect("contiguous"));
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
    let mut dz = Array1::from(probs);
    dz[label] -= 1.0;
    (loss, dz)
}

/// Mean cross-entropy of the global head over `(pooled, label)` pairs.
pub fn global_loss_and_gradients(head: &LinearHead, batch: &[(&[f64], usize)]) -> Result<(f64, LinearGrads)> {
    let mut grads = LinearGrads::zeros_like(head);
    let mut loss = 0.0;
    for &(x, label) in batch {
        if label >= head.arity() {
            return Err(Error::InvalidLabel { label, arity: head.arity() });
        }
        let z = head.forward(x)?;
        let (l, dz) = cross_entropy_grad(&z, label);
        loss += l;
        let xv = ndarray::ArrayView1::from(x);
        grads.weights += &outer(&dz.view(), &xv);
        grads.biases += &dz;
    }
    let n = batch.len().max(1) as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

fn outer(a: &ndarray::ArrayView1<f64>, b: &ndarray::ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Gradients of one local-path backward pass, given `dz = ∂L/∂logits`.
pub(crate) struct LocalBackward {
    pub queries: Array2<f64>,
    pub head: LinearGrads,
    /// `∂L/∂map` as `(H·W) × d`.
    pub input: Array2<f64>,
}

pub(crate) fn local_backward(
    queries: &Array2<f64>,
    head: &LinearHead,
    keys: ArrayView2<'_, f64>,
    att: &Attention,
    dz: &Array1<f64>,
) -> LocalBackward {
    let (m, d) = queries.dim();
    let scale = 1.0 / (d as f64).sqrt();
    let flat = Array1::from(att.flattened());
    let d_weights = outer(&dz.view(), &flat.view());
    let d_flat = head.weights.t().dot(dz);
    let d_out = d_flat.into_shape_with_order((m, d)).expect("M·d elements");

    // A = P K ;  S = Q Kᵀ / √d ;  P = softmax_rows(S)
    let d_p = d_out.dot(&keys.t());
    let mut d_s = Array2::zeros(d_p.raw_dim());
    for i in 0..m {
        let p = att.weights.row(i);
        let dp = d_p.row(i);
        let dot: f64 = p.iter().zip(dp.iter()).map(|(a, b)| a * b).sum();
        for j in 0..p.len() {
            d_s[[i, j]] = p[j] * (dp[j] - dot);
        }
    }
    let d_queries = d_s.dot(&keys) * scale;
    let input = att.weights.t().dot(&d_out) + d_s.t().dot(queries) * scale;
    LocalBackward {
        queries: d_queries,
        head: LinearGrads { weights: d_weights, biases: dz.clone() },
        input,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalGrads {
    pub queries: Array2<f64>,
    /// Indexed like the `heads` slice passed in.
    pub heads: Vec<LinearGrads>,
}

/// Mean cross-entropy over a batch that may mix several local heads. The
/// shared queries collect gradient from every head that appears.
pub fn local_loss_and_gradients(
    shared: &SharedAttention,
    heads: &[LocalHead],
    batch: &[LocalExample<'_>],
) -> Result<(f64, LocalGrads)> {
    let mut grads = LocalGrads {
        queries: Array2::zeros(shared.queries.raw_dim()),
        heads: heads.iter().map(|h| LinearGrads::zeros_like(&h.head)).collect(),
    };
    let mut loss = 0.0;
    for ex in batch {
        let head = &heads[ex.head].head;
        if ex.label >= head.arity() {
            return Err(Error::InvalidLabel { label: ex.label, arity: head.arity() });
        }
        let att = attention_forward(&shared.queries, ex.map)?;
        let z = head.forward(&att.flattened())?;
        let (l, dz) = cross_entropy_grad(&z, ex.label);
        loss += l;
        let back = local_backward(&shared.queries, head, ex.map.cells(), &att, &dz);
        grads.queries += &back.queries;
        grads.heads[ex.head].weights += &back.head.weights;
        grads.heads[ex.head].biases += &back.head.biases;
    }
    let n = batch.len().max(1) as f64;
    grads.queries *= 1.0 / n;
    grads.heads.iter_mut().for_each(|g| g.scale(1.0 / n));
    Ok((loss / n, grads))
}

/// Shapes needed to allocate a [`Model`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub global_arity: usize,
    pub dim: usize,
    pub queries: usize,
    /// `(group_id, arity)` in ascending group order.
    pub locals: Vec<(usize, usize)>,
}

impl ModelShape {
    pub fn for_arch(arch: &ArchState, dim: usize, queries: usize, with_locals: bool) -> Self {
        let locals = if with_locals {
            arch.groups().iter().map(|g| (g.group_id, g.members.len())).collect()
        } else {
            Vec::new()
        };
        Self { global_arity: arch.arity(), dim, queries, locals }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub global: LinearHead,
    pub attention: SharedAttention,
    pub locals: Vec<LocalHead>,
}

impl Model {
    pub fn shape(&self) -> ModelShape {
        ModelShape {
            global_arity: self.global.arity(),
            dim: self.global.in_dim(),
            queries: self.attention.num_queries(),
            locals: self.locals.iter().map(|l| (l.group_id, l.head.arity())).collect(),
        }
    }

    pub fn local(&self, group_id: usize) -> Option<&LocalHead> {
        self.locals.iter().find(|l| l.group_id == group_id)
    }

    pub fn zeros(shape: &ModelShape) -> Self {
        Self {
            global: LinearHead::zeros(shape.global_arity, shape.dim),
            attention: SharedAttention { queries: Array2::zeros((shape.queries, shape.dim)) },
            locals: shape
                .locals
                .iter()
                .map(|&(group_id, arity)| LocalHead {
                    group_id,
                    head: LinearHead::zeros(arity, shape.queries * shape.dim),
                })
                .collect(),
        }
    }
}

/// Xavier-uniform weights and queries, zero biases; a pure function of `seed`.
pub fn init_params(shape: &ModelShape, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::zeros(shape);
    model.global.weights = xavier(shape.global_arity, shape.dim, &mut rng);
    model.attention.queries = xavier(shape.queries, shape.dim, &mut rng);
    for local in &mut model.locals {
        let (rows, cols) = local.head.weights.dim();
        local.head.weights = xavier(rows, cols, &mut rng);
    }
    model
}

/// Group id → local index lookups for the current arch, used when assembling
/// local training batches.
pub fn head_index(model: &Model) -> BTreeMap<usize, usize> {
    model.locals.iter().enumerate().map(|(i, l)| (l.group_id, i)).collect()
}
