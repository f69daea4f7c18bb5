//! Dense f64 tensors, a tape-based reverse-mode graph, optimizers and the
//! binary checkpoint container.

mod checkpoint;
mod graph;
mod optim;

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use checkpoint::{read_container, write_container, Container, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use graph::{BatchNormMode, ChannelStats, Graph, Padding, Var, BN_EPS, BN_MOMENTUM};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};

/// Row-major dense tensor with an optional gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape("tensor", format!("zero extent in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} holds {n} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient accumulator.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::shape(
                "accumulate_grad",
                format!("gradient has {} values, tensor {}", g.len(), self.data.len()),
            ));
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Named parameters of one network. Entries with `requires_grad == false`
/// are buffers (batch-norm running statistics) that the optimizer skips.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
    step: u64,
}

/// Graph variables for the trainable entries of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
    trainable: bool,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unbound parameter {name}")))
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names are unique; re-registration is rejected.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter {name}")));
        }
        self.params.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    /// Overwrites the values of an existing entry, keeping its shape.
    pub fn set_data(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let t = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        if t.data.len() != data.len() {
            return Err(Error::shape(
                "set_data",
                format!("{name}: expected {} values, got {}", t.data.len(), data.len()),
            ));
        }
        t.data.copy_from_slice(data);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn bump_step(&mut self) {
        self.step += 1;
    }

    pub fn zero_grad(&mut self) {
        self.params.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn num_trainable(&self) -> usize {
        self.params
            .values()
            .filter(|t| t.requires_grad)
            .map(Tensor::numel)
            .sum()
    }

    /// Inserts every trainable entry as a graph leaf. When `trainable` is
    /// false the leaves are constants and receive no gradient.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .filter(|(_, t)| t.requires_grad)
            .map(|(name, t)| {
                let v = g.leaf(t.shape.clone(), t.data.clone(), trainable);
                (name.clone(), v)
            })
            .collect();
        Bound { vars, trainable }
    }

    /// Copies graph gradients of bound leaves into the accumulators.
    /// Leaves the graph never reached get an explicit zero gradient.
    pub fn accumulate_grads(&mut self, g: &Graph, bound: &Bound) -> Result<()> {
        for (name, &v) in &bound.vars {
            let t = self
                .params
                .get_mut(name)
                .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
            match g.grad(v) {
                Some(gr) => t.accumulate_grad(gr)?,
                None => {
                    let zeros = vec![0.0; t.numel()];
                    t.accumulate_grad(&zeros)?
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over names, shapes, value bits and the step counter.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.step.to_le_bytes());
        for (name, t) in &self.params {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            for &d in &t.shape {
                h.update((d as u64).to_le_bytes());
            }
            for v in &t.data {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(Tensor::is_finite)
    }

    /// Records `(name, shape, data)` for the checkpoint container.
    pub fn to_records(&self, prefix: &str) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.params
            .iter()
            .map(|(n, t)| (format!("{prefix}{n}"), t.shape.clone(), t.data.clone()))
            .collect()
    }

    /// Loads values for every entry from `container` under `prefix`.
    pub fn load_records(&mut self, container: &Container, prefix: &str) -> Result<()> {
        for (name, t) in self.params.iter_mut() {
            let key = format!("{prefix}{name}");
            let (shape, data) = container
                .record(&key)
                .ok_or_else(|| Error::Format(format!("missing record {key}")))?;
            if shape != t.shape.as_slice() {
                return Err(Error::Format(format!(
                    "record {key}: shape {shape:?} does not match {:?}",
                    t.shape
                )));
            }
            t.data.copy_from_slice(data);
        }
        Ok(())
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_rejects_wrong_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().numel(), 6);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(vec![2])).unwrap();
        assert!(p.insert("w", Tensor::zeros(vec![3])).is_err());
    }

    #[test]
    fn digest_tracks_values() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(vec![2]).with_requires_grad(true)).unwrap();
        let d0 = p.digest();
        assert_eq!(d0, p.clone().digest());
        p.set_data("w", &[0.0, 1e-300]).unwrap();
        assert_ne!(d0, p.digest());
    }

    #[test]
    fn unreached_leaf_gets_zero_grad() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::full(vec![2], 1.0).with_requires_grad(true))
            .unwrap();
        p.insert("b", Tensor::full(vec![3], 1.0).with_requires_grad(true))
            .unwrap();
        let mut g = Graph::new();
        let bound = p.bind(&mut g, true);
        let loss = g.sum(bound.var("a").unwrap());
        g.backward(loss).unwrap();
        p.accumulate_grads(&g, &bound).unwrap();
        assert_eq!(p.get("a").unwrap().grad().unwrap(), &[1.0, 1.0]);
        assert_eq!(p.get("b").unwrap().grad().unwrap(), &[0.0, 0.0, 0.0]);
    }
}
