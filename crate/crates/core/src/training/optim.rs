use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

/// Which update rule a training run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Parameter update rule; `lr` is supplied per step by the schedule.
#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &ParamStore) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(params)),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::invalid("gradient count differs from parameter count"));
        }
        match self {
            Optimizer::Sgd => {
                for (id, g) in grads.iter().enumerate() {
                    for (p, d) in params.tensor_mut(id).data_mut().iter_mut().zip(g.data()) {
                        *p -= lr * d;
                    }
                }
                Ok(())
            }
            Optimizer::Adam(a) => a.step(params, grads, lr),
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| alloc::vec![0.0; t.len()]).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::invalid("gradient count differs from optimizer state"));
        }
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (id, g) in grads.iter().enumerate() {
            let p = params.tensor_mut(id).data_mut();
            for (k, &d) in g.data().iter().enumerate() {
                let m = &mut self.m[id][k];
                let v = &mut self.v[id][k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * d;
                *v = self.beta2 * *v + (1.0 - self.beta2) * d * d;
                p[k] -= lr * (*m / c1) / (libm::sqrt(*v / c2) + self.eps);
            }
        }
        Ok(())
    }
}
