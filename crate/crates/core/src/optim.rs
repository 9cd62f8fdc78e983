//! First-order optimizers behind a single `step` interface.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Param;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    SgdM,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Sgd, OptimizerKind::SgdM, OptimizerKind::Adam];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdM => "sgd-m",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown optimizer `{s}`")))
    }
}

/// Optimizer hyperparameters plus per-parameter state.
///
/// - SGD: `p ← p − lr·g`
/// - SGD-M: `v ← μ·v + g; p ← p − lr·v`
/// - Adam: bias-corrected first/second moments, `p ← p − lr·m̂/(√v̂ + ε)`
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        OptimizerState {
            kind,
            lr,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn with_momentum(mut self, mu: f64) -> Self {
        self.momentum = mu;
        self
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update using each parameter's accumulated gradient.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        self.check_buffers(params)?;
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let Param { value, grad } = &mut **p;
                    for (w, g) in value.data_mut().iter_mut().zip(grad.data()) {
                        *w -= self.lr * g;
                    }
                }
            }
            OptimizerKind::SgdM => {
                for (p, v) in params.iter_mut().zip(self.first.iter_mut()) {
                    let Param { value, grad } = &mut **p;
                    for ((w, g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(v.iter_mut()) {
                        *v = self.momentum * *v + g;
                        *w -= self.lr * *v;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.t as f64;
                let c1 = 1.0 - self.beta1.powf(t);
                let c2 = 1.0 - self.beta2.powf(t);
                for ((p, m), v) in params.iter_mut().zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
                    let Param { value, grad } = &mut **p;
                    for (((w, g), m), v) in value
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }

    fn check_buffers(&mut self, params: &[&mut Param]) -> Result<()> {
        if self.first.is_empty() && self.t == 0 {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            if self.kind == OptimizerKind::Adam {
                self.second = self.first.clone();
            }
        }
        if self.kind != OptimizerKind::Sgd {
            let same = self.first.len() == params.len()
                && self.first.iter().zip(params).all(|(b, p)| b.len() == p.len());
            if !same {
                return Err(Error::Contract(
                    "parameter set changed shape since the optimizer was created".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn zero_grads(params: &mut [&mut Param]) {
    for p in params.iter_mut() {
        p.zero_grad();
    }
}
