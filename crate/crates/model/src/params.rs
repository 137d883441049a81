//! Named parameter storage with seeded initialisation.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Result, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Whether a stored tensor is updated by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Trainable,
    /// Running statistics and other state that gradients never touch.
    Buffer,
}

/// Every tensor of a model, keyed by a dotted layer path.
///
/// Initialisation draws from a private ChaCha stream so that a given seed
/// and architecture always produce identical weights.
pub struct ParamStore {
    device: Device,
    rng: ChaCha8Rng,
    entries: BTreeMap<String, (Var, Role)>,
}

impl ParamStore {
    pub fn new(seed: u64, device: Device) -> Self {
        Self {
            device,
            rng: ChaCha8Rng::seed_from_u64(seed),
            entries: BTreeMap::new(),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, data: Vec<f32>, shape: &[usize], role: Role) -> Result<Var> {
        assert!(!self.entries.contains_key(name), "duplicate parameter {name}");
        let var = Var::from_tensor(&Tensor::from_vec(data, shape, &self.device)?)?;
        self.entries.insert(name.to_string(), (var.clone(), role));
        Ok(var)
    }

    /// He-normal weights, `std = sqrt(2 / fan_in)`.
    pub fn kaiming(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<Tensor> {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(&mut self.rng) as f32).collect();
        Ok(self.insert(name, data, shape, Role::Trainable)?.into_inner())
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f32) -> Result<Tensor> {
        let n = shape.iter().product();
        Ok(self.insert(name, vec![value; n], shape, Role::Trainable)?.into_inner())
    }

    /// Non-trainable state, returned as a handle that can be written in place.
    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f32) -> Result<Var> {
        let n = shape.iter().product();
        self.insert(name, vec![value; n], shape, Role::Buffer)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.get(name).map(|(v, _)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var, Role)> {
        self.entries.iter().map(|(k, (v, r))| (k.as_str(), v, *r))
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.iter().filter(|(_, _, r)| *r == Role::Trainable).map(|(k, v, _)| (k, v))
    }

    /// Number of trainable scalars under `prefix`.
    pub fn count(&self, prefix: &str) -> usize {
        self.trainable()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// Overwrites a stored tensor, keeping its shape.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .get(name)
            .ok_or_else(|| candle_core::Error::Msg(format!("unknown parameter {name}")))?;
        var.set(&value.to_dtype(DType::F32)?)
    }

    /// Sets every tensor under `prefix` to zero.
    pub fn zero_prefix(&self, prefix: &str) -> Result<()> {
        for (k, v, _) in self.iter() {
            if k.starts_with(prefix) {
                v.set(&v.zeros_like()?)?;
            }
        }
        Ok(())
    }
}
