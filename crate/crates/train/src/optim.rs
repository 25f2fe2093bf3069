//! Optimizers over a flat parameter vector, and the name registry behind
//! the optimizer slot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("unknown optimizer {name:?} (registered: {known})")]
    Unknown { name: String, known: String },
    #[error("optimizer state does not match {0} parameters")]
    StateSize(usize),
    #[error("optimizer state: {0}")]
    State(#[from] serde_json::Error),
}

pub trait Optimizer: Send + Sync {
    fn name(&self) -> &str;
    /// Updates `params` in place from `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64);
    fn state(&self) -> serde_json::Value;
    fn load_state(&mut self, state: serde_json::Value) -> Result<(), OptimError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &str {
        "adam"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("adam state serializes")
    }

    fn load_state(&mut self, state: serde_json::Value) -> Result<(), OptimError> {
        let s: Adam = serde_json::from_value(state)?;
        if s.m.len() != self.m.len() {
            return Err(OptimError::StateSize(self.m.len()));
        }
        *self = s;
        Ok(())
    }
}

/// Heavy-ball SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(n: usize) -> Self {
        Momentum { momentum: 0.9, velocity: vec![0.0; n] }
    }
}

impl Optimizer for Momentum {
    fn name(&self) -> &str {
        "sgd"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for i in 0..params.len() {
            self.velocity[i] = self.momentum * self.velocity[i] + grad[i];
            params[i] -= lr * self.velocity[i];
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("momentum state serializes")
    }

    fn load_state(&mut self, state: serde_json::Value) -> Result<(), OptimError> {
        let s: Momentum = serde_json::from_value(state)?;
        if s.velocity.len() != self.velocity.len() {
            return Err(OptimError::StateSize(self.velocity.len()));
        }
        *self = s;
        Ok(())
    }
}

pub type OptimizerFactory = fn(usize) -> Box<dyn Optimizer>;

/// Name of the slot reserved for an externally supplied second-order method.
pub const PLUGIN: &str = "plugin";

/// Optimizers by name. `adam` (the default) and `sgd` are built in; the
/// `plugin` slot is empty until a factory is registered under that name.
#[derive(Clone)]
pub struct OptimizerRegistry {
    factories: BTreeMap<String, OptimizerFactory>,
}

impl Default for OptimizerRegistry {
    fn default() -> Self {
        let mut r = OptimizerRegistry { factories: BTreeMap::new() };
        r.register("adam", |n| Box::new(Adam::new(n)));
        r.register("sgd", |n| Box::new(Momentum::new(n)));
        r
    }
}

impl OptimizerRegistry {
    pub fn register(&mut self, name: &str, factory: OptimizerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, n_params: usize) -> Result<Box<dyn Optimizer>, OptimError> {
        let f = self.factories.get(name).ok_or_else(|| OptimError::Unknown {
            name: name.to_string(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })?;
        Ok(f(n_params))
    }
}

/// Rescales `grad` so its L2 norm is at most `max_norm`; returns the
/// original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimize(opt: &mut dyn Optimizer, lr: f64) -> f64 {
        // f(x, y) = (x - 3)^2 + 10 (y + 1)^2
        let mut p = vec![0.0, 0.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 3.0), 20.0 * (p[1] + 1.0)];
            opt.step(&mut p, &g, lr);
        }
        (p[0] - 3.0).abs() + (p[1] + 1.0).abs()
    }

    #[test]
    fn builtins_converge() {
        let reg = OptimizerRegistry::default();
        assert!(minimize(reg.build("adam", 2).unwrap().as_mut(), 0.05) < 1e-3);
        assert!(minimize(reg.build("sgd", 2).unwrap().as_mut(), 0.005) < 1e-3);
    }

    #[test]
    fn plugin_slot_is_empty_until_registered() {
        let mut reg = OptimizerRegistry::default();
        let err = reg.build(PLUGIN, 2).err().unwrap();
        assert!(err.to_string().contains("adam, sgd"));
        reg.register(PLUGIN, |n| Box::new(Momentum::new(n)));
        assert_eq!(reg.build(PLUGIN, 2).unwrap().name(), "sgd");
    }

    #[test]
    fn state_round_trip() {
        let mut a = Adam::new(2);
        let mut p = vec![1.0, 2.0];
        a.step(&mut p, &[0.5, -0.5], 0.1);
        let mut b = Adam::new(2);
        b.load_state(a.state()).unwrap();
        assert_eq!(a, b);
        assert!(Adam::new(3).load_state(a.state()).is_err());
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }
}
