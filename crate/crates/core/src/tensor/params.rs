use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Named registry of every learnable tensor, in registration order.
///
/// Registration order is the iteration order everywhere (optimizer state,
/// checkpoint manifest), which keeps runs reproducible.
#[derive(Debug, Clone, Default)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<Tensor> {
        let name = name.into();
        if !tensor.requires_grad() {
            return Err(Error::Contract(format!("parameter {name} is not a learnable leaf")));
        }
        if self.get(&name).is_some() {
            return Err(Error::Contract(format!("parameter {name} registered twice")));
        }
        self.entries.push((name, tensor.clone()));
        Ok(tensor)
    }

    /// Registers a `rows x cols` matrix drawn from
    /// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` with `fan_in = rows`.
    pub fn matrix(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Tensor> {
        let t = Tensor::parameter(rows, cols, init_uniform(rows * cols, rows, rng))?;
        self.register(name, t)
    }

    pub fn bias(&mut self, name: impl Into<String>, cols: usize) -> Result<Tensor> {
        self.register(name, Tensor::parameter(1, cols, vec![0.0; cols])?)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&self) {
        self.entries.iter().for_each(|(_, t)| t.zero_grad());
    }

    pub fn clear_grads(&self) {
        self.entries.iter().for_each(|(_, t)| t.clear_grad());
    }

    /// Rounds every value to the nearest `f32`, the precision checkpoints
    /// store.
    pub fn round_to_f32(&self) {
        for (_, t) in &self.entries {
            t.data_mut().iter_mut().for_each(|x| *x = f64::from(*x as f32));
        }
    }

    /// Copies values from `other`, matching by name and shape.
    pub fn load_from(&self, other: &ModelParams) -> Result<()> {
        for (name, t) in &self.entries {
            let src = other.get(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if src.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?} does not match {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(&src.data());
        }
        Ok(())
    }
}

pub fn init_uniform(len: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}
