use serde::{Deserialize, Serialize};

pub const MOMENTUM: f64 = 0.9;
pub const WEIGHT_DECAY: f64 = 1e-5;
pub const LR_DECAY: f64 = 0.9;
pub const LR_DECAY_EVERY: usize = 2;

/// Step schedule: `base · 0.9^⌊epoch/2⌋`.
pub fn lr_at_epoch(base: f64, epoch: usize) -> f64 {
    base * LR_DECAY.powi((epoch / LR_DECAY_EVERY) as i32)
}

/// A parameter tensor viewed as a flat slice. `decay` selects weight decay.
pub struct Param<'a> {
    pub values: &'a mut [f64],
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub base_lr: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epoch: usize,
    buffers: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(base_lr: f64) -> Self {
        Self::with(base_lr, MOMENTUM, WEIGHT_DECAY)
    }

    pub fn with(base_lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self { base_lr, lr: base_lr, momentum, weight_decay, epoch: 0, buffers: Vec::new() }
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
        self.lr = lr_at_epoch(self.base_lr, epoch);
    }

    pub fn buffers(&self) -> &[Vec<f64>] {
        &self.buffers
    }
}

/// Momentum SGD with decoupled-into-gradient L2:
/// `buf ← μ·buf + (g + λ·p)`, `p ← p − lr·buf`.
///
/// # Panics
/// If the parameter and gradient shapes disagree with each other or with the
/// buffers from previous steps.
pub fn sgd_step(params: &mut [Param<'_>], grads: &[&[f64]], opt: &mut OptimizerState) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    if opt.buffers.is_empty() {
        opt.buffers = params.iter().map(|p| vec![0.0; p.values.len()]).collect();
    }
    assert_eq!(opt.buffers.len(), params.len(), "parameter list changed between steps");
    for ((param, grad), buf) in params.iter_mut().zip(grads).zip(opt.buffers.iter_mut()) {
        assert_eq!(param.values.len(), grad.len());
        assert_eq!(param.values.len(), buf.len());
        let decay = if param.decay { opt.weight_decay } else { 0.0 };
        for ((p, g), b) in param.values.iter_mut().zip(grad.iter()).zip(buf.iter_mut()) {
            *b = opt.momentum * *b + (g + decay * *p);
            *p -= opt.lr * *b;
        }
    }
}
