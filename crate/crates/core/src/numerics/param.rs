use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Rows at or beyond this index never change (the embedding padding row).
    pub frozen_from_row: Option<usize>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let (r, c) = value.shape();
        Parameter { name: name.into(), value, grad: Tensor::zeros(r, c), frozen_from_row: None }
    }

    pub fn is_frozen(&self, flat_index: usize) -> bool {
        self.frozen_from_row
            .is_some_and(|row| flat_index / self.value.cols() >= row)
    }
}

/// Ordered collection of parameters. The order is the serialization order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, param: Parameter) -> ParamId {
        self.params.push(param);
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Adds `scale * grads` into every parameter's accumulator.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) -> Result<()> {
        for (id, g) in grads.dense.iter() {
            let p = &mut self.params[id.0];
            if p.grad.shape() != g.shape() {
                return Err(Error::Shape { op: "accumulate", left: p.grad.shape(), right: g.shape() });
            }
            for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *a += scale * b;
            }
        }
        for (&(id, row), g) in &grads.rows {
            let p = &mut self.params[id.0];
            for (a, b) in p.grad.row_mut(row).iter_mut().zip(g) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    /// All gradient accumulators flattened in parameter order.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.data().iter().copied()).collect()
    }

    /// Euclidean norm of all accumulated gradients.
    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad.sum_squares()).sum::<f64>().sqrt()
    }

    pub fn scale_grads(&mut self, s: f64) {
        for p in &mut self.params {
            p.grad.scale_in_place(s);
        }
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }
}

/// Gradients produced by one backward pass. Dense tensors for parameters
/// used whole; row-sparse entries for gathered embedding rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub dense: BTreeMap<ParamId, Tensor>,
    pub rows: BTreeMap<(ParamId, usize), Vec<f64>>,
}

impl Gradients {
    pub fn add_dense(&mut self, id: ParamId, g: &Tensor) {
        match self.dense.get_mut(&id) {
            Some(acc) => acc.add_assign(g).expect("gradient shape is fixed per parameter"),
            None => {
                self.dense.insert(id, g.clone());
            }
        }
    }

    pub fn add_row(&mut self, id: ParamId, row: usize, g: &[f64]) {
        let acc = self.rows.entry((id, row)).or_insert_with(|| vec![0.0; g.len()]);
        for (a, b) in acc.iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Adds another gradient set into this one.
    pub fn merge(&mut self, other: &Gradients) {
        for (id, g) in &other.dense {
            self.add_dense(*id, g);
        }
        for (&(id, row), g) in &other.rows {
            self.add_row(id, row, g);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.dense.values_mut() {
            g.scale_in_place(s);
        }
        for g in self.rows.values_mut() {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Dense flattening in parameter order, for comparisons.
    pub fn flatten(&self, store: &ParamStore) -> Vec<f64> {
        let mut scratch = store.clone();
        scratch.zero_grads();
        scratch.accumulate(self, 1.0).expect("gradients match the store");
        scratch.flat_grads()
    }
}
