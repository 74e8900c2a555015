use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::{sgd_step, OptimizerState, Param, MOMENTUM, WEIGHT_DECAY};
use super::{global_loss_and_gradients, local_loss_and_gradients, LinearHead, LocalHead, SharedAttention};
use crate::error::{Error, Result};
use crate::feature_store::ActivationMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, base_lr: 0.01, batch_size: 16, momentum: MOMENTUM, weight_decay: WEIGHT_DECAY }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be positive", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1) and weight decay non-negative".into()));
        }
        Ok(())
    }

    fn optimizer(&self) -> OptimizerState {
        OptimizerState::with(self.base_lr, self.momentum, self.weight_decay)
    }
}

/// One training example for a local head: `head` indexes the heads slice and
/// `label` is the position of the fine class inside that head's group.
#[derive(Debug, Clone, Copy)]
pub struct LocalExample<'a> {
    pub map: &'a ActivationMap,
    pub head: usize,
    pub label: usize,
}

fn epoch_order<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Mini-batch SGD on the global head. Returns the mean training loss of each
/// epoch.
pub fn train_global<R: Rng>(
    head: &mut LinearHead,
    data: &[(Vec<f64>, usize)],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut opt = cfg.optimizer();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        let order = epoch_order(data.len(), rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (data[i].0.as_slice(), data[i].1)).collect();
            let (loss, grads) = global_loss_and_gradients(head, &batch)?;
            total += loss * chunk.len() as f64;
            sgd_step(
                &mut [
                    Param { values: head.weights.as_slice_mut().expect("standard layout"), decay: true },
                    Param { values: head.biases.as_slice_mut().expect("standard layout"), decay: false },
                ],
                &[grads.weights.as_slice().expect("standard layout"), grads.biases.as_slice().expect("standard layout")],
                &mut opt,
            );
        }
        losses.push(total / data.len().max(1) as f64);
    }
    Ok(losses)
}

/// Joint mini-batch SGD over the shared queries and every local head. Batches
/// mix examples from all heads.
pub fn train_local<R: Rng>(
    shared: &mut SharedAttention,
    heads: &mut [LocalHead],
    data: &[LocalExample<'_>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if let Some(bad) = data.iter().find(|e| e.head >= heads.len()) {
        return Err(Error::InvalidLabel { label: bad.head, arity: heads.len() });
    }
    let mut opt = cfg.optimizer();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        let order = epoch_order(data.len(), rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LocalExample<'_>> = chunk.iter().map(|&i| data[i]).collect();
            let (loss, grads) = local_loss_and_gradients(shared, heads, &batch)?;
            total += loss * chunk.len() as f64;

            let mut params = vec![Param { values: shared.queries.as_slice_mut().expect("standard layout"), decay: true }];
            let mut flat_grads: Vec<&[f64]> = vec![grads.queries.as_slice().expect("standard layout")];
            for (h, g) in heads.iter_mut().zip(&grads.heads) {
                params.push(Param { values: h.head.weights.as_slice_mut().expect("standard layout"), decay: true });
                params.push(Param { values: h.head.biases.as_slice_mut().expect("standard layout"), decay: false });
                flat_grads.push(g.weights.as_slice().expect("standard layout"));
                flat_grads.push(g.biases.as_slice().expect("standard layout"));
            }
            sgd_step(&mut params, &flat_grads, &mut opt);
        }
        losses.push(total / data.len().max(1) as f64);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::Grid;
    use crate::heads::{init_params, ModelShape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn global_training_reduces_loss() {
        let data: Vec<(Vec<f64>, usize)> = (0..40)
            .map(|i| {
                let c = i % 2;
                let s = if c == 0 { 1.0 } else { -1.0 };
                (vec![s + 0.01 * i as f64, -s, 0.5], c)
            })
            .collect();
        let mut head = init_params(&ModelShape { global_arity: 2, dim: 3, queries: 1, locals: vec![] }, 3).global;
        let cfg = TrainConfig { epochs: 10, base_lr: 0.1, ..TrainConfig::default() };
        let losses = train_global(&mut head, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(losses.last().unwrap() < &(losses[0] * 0.5));
    }

    #[test]
    fn local_training_is_deterministic_and_learns() {
        let grid = Grid::new(2, 2, 4);
        let maps: Vec<ActivationMap> = (0..24)
            .map(|i| {
                let mut v = vec![0.1; grid.len()];
                let c = i % 2;
                v[c] = 2.0 + 0.01 * i as f64;
                ActivationMap::new(grid, v).unwrap()
            })
            .collect();
        let data: Vec<LocalExample<'_>> =
            maps.iter().enumerate().map(|(i, m)| LocalExample { map: m, head: 0, label: i % 2 }).collect();
        let shape = ModelShape { global_arity: 1, dim: 4, queries: 2, locals: vec![(0, 2)] };
        let cfg = TrainConfig { epochs: 8, base_lr: 0.1, batch_size: 4, ..TrainConfig::default() };
        let run = || {
            let mut model = init_params(&shape, 9);
            let losses =
                train_local(&mut model.attention, &mut model.locals, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(1))
                    .unwrap();
            (model, losses)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.last().unwrap() < &la[0]);
    }

    #[test]
    fn rejects_bad_config() {
        let mut head = LinearHead::zeros(2, 1);
        let cfg = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(train_global(&mut head, &[], &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
