use serde::{Deserialize, Serialize};

use super::{DiffError, ParamStore};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// First-order optimizer with coupled L2 weight decay.
///
/// Only parameters marked as touched by the last backward pass are updated,
/// so an arm that saw no sample in a minibatch keeps its values and moments.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    moments: Vec<Moments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Result<Self, DiffError> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(DiffError::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(weight_decay >= 0.0) {
            return Err(DiffError::Config(format!("weight decay must be non-negative, got {weight_decay}")));
        }
        Ok(Self { kind, lr, weight_decay, moments: Vec::new() })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        if self.moments.len() < store.len() {
            self.moments.resize_with(store.len(), Moments::default);
        }
        let (lr, wd) = (self.lr, self.weight_decay);
        for (id, moments) in store.ids().zip(self.moments.iter_mut()) {
            let p = store.get_mut(id);
            if !p.touched {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (v, &g) in p.value.iter_mut().zip(&p.grad) {
                        *v -= lr * (g + wd * *v);
                    }
                }
                OptimizerKind::Adam => {
                    if moments.m.len() != p.value.len() {
                        moments.m = vec![0.0; p.value.len()];
                        moments.v = vec![0.0; p.value.len()];
                    }
                    moments.t += 1;
                    let c1 = 1.0 - ADAM_BETA1.powi(moments.t);
                    let c2 = 1.0 - ADAM_BETA2.powi(moments.t);
                    for ((v, &g), (m, s)) in p.value.iter_mut().zip(&p.grad).zip(moments.m.iter_mut().zip(moments.v.iter_mut())) {
                        let g = g + wd * *v;
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *s = ADAM_BETA2 * *s + (1.0 - ADAM_BETA2) * g * g;
                        *v -= lr * (*m / c1) / ((*s / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}
