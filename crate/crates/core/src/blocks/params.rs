use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Conv2dSpec, Element, Tensor};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered set of trainable tensors.
///
/// Blocks keep [`ParamId`]s and look tensors up on every forward pass, so the
/// optimizer can swap in updated leaves without touching the blocks.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Element = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn insert(&mut self, name: String, tensor: Tensor<T>) -> Result<ParamId> {
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor.into_param());
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count over all parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Replaces the values of a parameter; the shape must not change.
    pub fn set(&mut self, id: ParamId, data: Vec<T>) -> Result<()> {
        let old = &self.tensors[id.0];
        if data.len() != old.numel() {
            return Err(Error::contract(
                "set_param",
                format!("{} holds {} values, got {}", self.names[id.0], old.numel(), data.len()),
            ));
        }
        let t = Tensor::param(old.shape(), data)?;
        t.set_grad(old.grad());
        self.tensors[id.0] = t;
        Ok(())
    }

    pub fn set_by_name(&mut self, name: &str, data: Vec<T>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        self.set(id, data)
    }

    /// Sets every parameter whose name starts with `prefix` to zero; returns how many matched.
    pub fn zero_prefix(&mut self, prefix: &str) -> usize {
        let ids: Vec<usize> = (0..self.len()).filter(|&i| self.names[i].starts_with(prefix)).collect();
        for &i in &ids {
            let n = self.tensors[i].numel();
            self.set(ParamId(i), vec![T::zero(); n]).expect("same length");
        }
        ids.len()
    }

    /// Copy of the store with the listed parameters replaced by the given
    /// tensors as they are, graph links included.
    pub fn with_tensors(&self, ids: &[ParamId], tensors: &[Tensor<T>]) -> Result<ParamStore<T>> {
        let mut out = self.clone();
        for (&id, t) in ids.iter().zip(tensors) {
            if t.shape() != self.tensors[id.0].shape() {
                return Err(crate::tensor::shape_error("with_tensors", self.tensors[id.0].shape(), t.shape()));
            }
            out.tensors[id.0] = t.clone();
        }
        Ok(out)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn zero_grad(&self) {
        self.tensors.iter().for_each(Tensor::zero_grad);
    }

    /// Same names and shapes, values converted to another element type.
    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (name, t) in self.iter() {
            let data = t.data().iter().map(|v| U::lit(v.to_f64().unwrap())).collect();
            out.insert(name.to_string(), Tensor::from_vec(t.shape(), data).unwrap())
                .unwrap();
        }
        out
    }
}

/// Registers parameters under a dotted name prefix, drawing initial values
/// from a seeded stream in registration order.
pub struct Builder<'a, T: Element> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Element> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Self {
        Builder {
            store,
            rng,
            prefix: String::new(),
        }
    }

    /// Child builder whose names are prefixed with `name.`.
    pub fn sub(&mut self, name: impl std::fmt::Display) -> Builder<'_, T> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Builder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        let t = Tensor::full(shape, T::lit(value));
        self.store.insert(self.full_name(name), t)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::lit(if bound > 0.0 { self.rng.random_range(-bound..bound) } else { 0.0 }))
            .collect();
        self.store.insert(self.full_name(name), Tensor::from_vec(shape, data)?)
    }

    /// Convolution with weight and bias drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, groups: usize) -> Result<Conv> {
        self.conv_with(name, cin, cout, k, groups, 1, false)
    }

    /// Convolution whose weight and bias start at zero.
    pub fn conv_zero(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<Conv> {
        self.conv_with(name, cin, cout, k, 1, 1, true)
    }

    pub fn conv_with(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        groups: usize,
        stride: usize,
        zero: bool,
    ) -> Result<Conv> {
        if groups == 0 || cin % groups != 0 || cout % groups != 0 {
            return Err(Error::Config(format!(
                "{}: {cin}->{cout} channels not divisible into {groups} groups",
                self.full_name(name)
            )));
        }
        let fan_in = cin / groups * k * k;
        let bound = if zero { 0.0 } else { 1.0 / (fan_in as f64).sqrt() };
        let mut b = self.sub(name);
        let weight = b.uniform("weight", &[cout, cin / groups, k, k], bound)?;
        let bias = b.uniform("bias", &[cout], bound)?;
        Ok(Conv {
            weight,
            bias,
            spec: Conv2dSpec {
                stride,
                padding: k / 2,
                groups,
            },
        })
    }

    /// Layer norm with unit scale and zero shift.
    pub fn layer_norm(&mut self, name: &str, c: usize) -> Result<LayerNorm> {
        let mut b = self.sub(name);
        Ok(LayerNorm {
            gamma: b.constant("weight", &[c], 1.0)?,
            beta: b.constant("bias", &[c], 0.0)?,
        })
    }
}

/// Parameter ids of a biased 2D convolution.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: Conv2dSpec,
}

impl Conv {
    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv2d(ps.get(self.weight), Some(ps.get(self.bias)), self.spec)
    }
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn forward<T: Element>(&self, ps: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.layer_norm(ps.get(self.gamma), ps.get(self.beta), LN_EPS)
    }
}

/// Fresh generator for parameter initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
