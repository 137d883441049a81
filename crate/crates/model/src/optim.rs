//! AdaGrad over a [`ParamStore`].

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{Result, Tensor};

use crate::params::ParamStore;

/// `acc += g²; p -= lr · g / (sqrt(acc) + eps)`.
#[derive(Debug, Clone)]
pub struct AdaGrad {
    pub initial_accumulator: f64,
    pub eps: f64,
    accumulators: BTreeMap<String, Tensor>,
}

impl Default for AdaGrad {
    fn default() -> Self {
        Self {
            initial_accumulator: 0.1,
            eps: 1e-7,
            accumulators: BTreeMap::new(),
        }
    }
}

impl AdaGrad {
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore, lr: f64) -> Result<()> {
        for (name, var) in params.trainable() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = g.detach();
            let acc = match self.accumulators.remove(name) {
                Some(a) => a,
                None => (var.as_tensor().zeros_like()? + self.initial_accumulator)?.detach(),
            };
            let acc = (acc + g.sqr()?)?.detach();
            let update = ((&g / (acc.sqrt()? + self.eps)?)? * lr)?;
            var.set(&(var.as_detached_tensor() - update)?)?;
            self.accumulators.insert(name.to_string(), acc);
        }
        Ok(())
    }

    pub fn state(&self) -> &BTreeMap<String, Tensor> {
        &self.accumulators
    }

    pub fn set_state(&mut self, state: BTreeMap<String, Tensor>) {
        self.accumulators = state;
    }
}
