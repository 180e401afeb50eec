//! Named parameter storage and graph binding.
//!
//! All trainable tensors live in a [`ParameterStore`] under hierarchical
//! dotted names (`gen.enc0.conv.weight`). Optimizer state shares the store
//! under its own namespace so checkpoints capture both. Per-episode, the
//! store is bound onto a [`Graph`] as leaves and gradients are collected back
//! by name after `backward`.

use indexmap::IndexMap;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Ordered map of trainable tensors plus non-trainable optimizer state.
#[derive(Debug, Clone)]
pub struct ParameterStore<S: Scalar> {
    params: IndexMap<String, Tensor<S>>,
    state: IndexMap<String, Tensor<S>>,
}

impl<S: Scalar> Default for ParameterStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParameterStore<S> {
    pub fn new() -> Self {
        Self {
            params: IndexMap::new(),
            state: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.params.insert(name.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total trainable scalar count.
    pub fn trainable_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn state_insert(&mut self, name: &str, tensor: Tensor<S>) {
        self.state.insert(name.to_string(), tensor);
    }

    pub fn state_get(&self, name: &str) -> Option<&Tensor<S>> {
        self.state.get(name)
    }

    pub fn state_get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.state.get_mut(name)
    }

    pub fn state_iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.state.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Cast all parameters and state to another scalar type.
    pub fn cast<T: Scalar>(&self) -> ParameterStore<T> {
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
            state: self
                .state
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// Register a parameter initialized from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_uniform<S: Scalar>(
    store: &mut ParameterStore<S>,
    name: &str,
    shape: &[usize],
    fan_in: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = S::from64(rng.gen_range(-bound..bound));
    }
    store.insert(name, t)
}

/// Register a parameter filled with a constant.
pub fn init_constant<S: Scalar>(
    store: &mut ParameterStore<S>,
    name: &str,
    shape: &[usize],
    value: f64,
) -> Result<()> {
    store.insert(name, Tensor::filled(shape, S::from64(value)))
}

/// Parameter-name -> leaf-var map for one graph episode.
pub struct Bindings {
    map: IndexMap<String, Var>,
}

impl Bindings {
    /// Bind every parameter of `store` onto `g` as leaves.
    pub fn bind<S: Scalar>(
        store: &ParameterStore<S>,
        g: &mut Graph<S>,
        requires_grad: bool,
    ) -> Self {
        let map = store
            .iter()
            .map(|(name, tensor)| (name.to_string(), g.leaf(tensor.clone(), requires_grad)))
            .collect();
        Self { map }
    }

    /// Merge another binding set (e.g. generator + discriminator stores).
    pub fn extend(&mut self, other: Bindings) {
        self.map.extend(other.map);
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} was not registered"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Collect accumulated gradients by parameter name. Parameters that never
    /// received a gradient get zeros of the right shape.
    pub fn collect_grads<S: Scalar>(&self, g: &Graph<S>) -> IndexMap<String, Tensor<S>> {
        self.map
            .iter()
            .map(|(name, &var)| {
                let grad = g
                    .grad_tensor(var)
                    .unwrap_or_else(|| Tensor::zeros(g.shape(var)));
                (name.clone(), grad)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_unique() {
        let mut store = ParameterStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        init_uniform(&mut store, "a.weight", &[2, 3], 3, &mut rng).unwrap();
        assert!(init_uniform(&mut store, "a.weight", &[2, 3], 3, &mut rng).is_err());
    }

    #[test]
    fn trainable_count_sums_shapes() {
        let mut store = ParameterStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        init_uniform(&mut store, "w", &[4, 5], 5, &mut rng).unwrap();
        init_constant(&mut store, "b", &[4], 0.0).unwrap();
        assert_eq!(store.trainable_count(), 24);
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut store = ParameterStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        init_uniform(&mut store, "w", &[64, 64], 64, &mut rng).unwrap();
        let bound = 1.0 / 8.0;
        assert!(store
            .get("w")
            .unwrap()
            .data()
            .iter()
            .all(|v| v.abs() < bound));
    }
}
