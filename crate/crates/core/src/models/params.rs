use std::collections::HashMap;

use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::GridTensor;

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, GridTensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: GridTensor) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.entries[i].1 = tensor,
            None => {
                self.index.insert(name.clone(), self.entries.len());
                self.entries.push((name, tensor));
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&GridTensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut GridTensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&GridTensor> {
        self.get(name)
            .ok_or_else(|| Error::Model(format!("missing parameter '{name}'")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &GridTensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut GridTensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Registers every tensor on `tape` as a differentiable leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> Bound<'a> {
        let vars = self
            .entries
            .iter()
            .map(|(_, t)| tape.param(t.clone()))
            .collect();
        Bound { set: self, vars }
    }
}

/// Tape handles for a [`ParamSet`], aligned with its entry order.
pub struct Bound<'a> {
    set: &'a ParamSet,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.set
            .index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Model(format!("missing parameter '{name}'")))
    }

    /// `(name, var)` pairs in entry order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.set.names().zip(self.vars.iter().copied())
    }
}

/// Creates parameters in a fixed order from a seeded generator.
pub(crate) struct ParamBuilder<'r, R: Rng> {
    pub set: ParamSet,
    pub rng: &'r mut R,
}

impl<'r, R: Rng> ParamBuilder<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        ParamBuilder {
            set: ParamSet::new(),
            rng,
        }
    }

    fn uniform(&mut self, shape: [usize; 4], fan_in: usize) -> GridTensor {
        GridTensor::uniform(shape, (1.0 / fan_in as f64).sqrt(), self.rng)
    }

    /// `name.w` as `[c_out, c_in, k, k]` and `name.b`.
    pub fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize) {
        let fan_in = c_in * k * k;
        let w = self.uniform([c_out, c_in, k, k], fan_in);
        let b = self.uniform([1, c_out, 1, 1], fan_in);
        self.set.insert(format!("{name}.w"), w);
        self.set.insert(format!("{name}.b"), b);
    }

    /// `name.w` as `[c_in, c_out, 2, 2]` and `name.b`.
    pub fn up(&mut self, name: &str, c_in: usize, c_out: usize) {
        let w = self.uniform([c_in, c_out, 2, 2], c_in);
        let b = self.uniform([1, c_out, 1, 1], c_in);
        self.set.insert(format!("{name}.w"), w);
        self.set.insert(format!("{name}.b"), b);
    }

    pub fn dense(&mut self, name: &str, n_in: usize, n_out: usize) {
        let w = self.uniform([n_out, n_in, 1, 1], n_in);
        let b = self.uniform([1, n_out, 1, 1], n_in);
        self.set.insert(format!("{name}.w"), w);
        self.set.insert(format!("{name}.b"), b);
    }

    pub fn extend(&mut self, named: Vec<(String, GridTensor)>) {
        for (n, t) in named {
            self.set.insert(n, t);
        }
    }
}
