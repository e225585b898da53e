//! Reverse-mode differentiation over a recorded sequence of dense ops.
//!
//! A [`Tape`] borrows the parameter store read-only, records every op with
//! its forward value, and [`Tape::backward`] walks the record in reverse to
//! produce [`Gradients`]. One tape belongs to one worker; parallel workers
//! each build their own tape over the shared store.

use super::{Gradients, ParamId, ParamStore, PoolKind, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    /// Columns of the output are rows of a parameter matrix; `None` is a zero column.
    Gather { param: ParamId, rows: Vec<Option<usize>> },
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Affine { input: NodeId, scale: f64 },
    ConcatCols(Vec<NodeId>),
    Column { input: NodeId, index: usize },
    MaskedSoftmax { input: NodeId, mask: Vec<bool> },
    RowPool { input: NodeId, route: Route },
    ColPool { input: NodeId, route: Route },
    SumSquares(NodeId),
    Sum(Vec<NodeId>),
}

/// How pooled gradient flows back: to one argmax per output, or evenly
/// across the valid positions.
#[derive(Debug)]
enum Route {
    Max(Vec<Option<usize>>),
    Mean { valid_out: Vec<bool>, valid_in: Vec<bool> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::with_capacity(256) }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(value, Op::Constant, "constant")
    }

    pub fn param(&mut self, id: ParamId) -> Result<NodeId> {
        let value = self.params.value(id).clone();
        self.push(value, Op::Param(id), "param")
    }

    /// Gathers parameter rows into the columns of a `cols x rows.len()` matrix.
    pub fn gather(&mut self, id: ParamId, rows: Vec<Option<usize>>) -> Result<NodeId> {
        let table = self.params.value(id);
        let d = table.cols();
        let mut out = Tensor::zeros(d, rows.len());
        for (j, row) in rows.iter().enumerate() {
            if let Some(r) = *row {
                if r >= table.rows() {
                    return Err(Error::OutOfRange(format!("row {r} of a {}-row table", table.rows())));
                }
                for (c, &v) in table.row(r).iter().enumerate() {
                    out.set(c, j, v);
                }
            }
        }
        self.push(out, Op::Gather { param: id, rows }, "gather")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), "transpose")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        self.push(v, Op::Add(a, b), "add")
    }

    /// Left-to-right sum of several same-shaped nodes.
    pub fn add_all(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let mut acc = *terms.first().ok_or(Error::Empty("add_all"))?;
        for &t in &terms[1..] {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(v, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        self.push(v, Op::Mul(a, b), "mul")
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).sigmoid();
        self.push(v, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).tanh();
        self.push(v, Op::Tanh(a), "tanh")
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        let v = self.value(a).affine(scale, shift);
        self.push(v, Op::Affine { input: a, scale }, "affine")
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat_cols(&values)?;
        self.push(v, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn column(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        let src = self.value(a);
        if index >= src.cols() {
            return Err(Error::OutOfRange(format!("column {index} of {:?}", src.shape())));
        }
        let v = src.column(index);
        self.push(v, Op::Column { input: a, index }, "column")
    }

    pub fn masked_softmax(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        let v = self.value(a).masked_softmax(mask)?;
        self.push(v, Op::MaskedSoftmax { input: a, mask: mask.to_vec() }, "masked_softmax")
    }

    /// Pools each valid row of `a` over its valid columns (a `rows x 1` result).
    pub fn row_pool(&mut self, a: NodeId, row_mask: &[bool], col_mask: &[bool], kind: PoolKind) -> Result<NodeId> {
        let (v, arg) = self.value(a).row_pool(row_mask, col_mask, kind)?;
        let route = match kind {
            PoolKind::Max => Route::Max(arg),
            PoolKind::Mean => Route::Mean { valid_out: row_mask.to_vec(), valid_in: col_mask.to_vec() },
        };
        self.push(v, Op::RowPool { input: a, route }, "row_pool")
    }

    /// Pools each valid column of `a` over its valid rows (a `cols x 1` result).
    pub fn col_pool(&mut self, a: NodeId, row_mask: &[bool], col_mask: &[bool], kind: PoolKind) -> Result<NodeId> {
        let (v, arg) = self.value(a).col_pool(row_mask, col_mask, kind)?;
        let route = match kind {
            PoolKind::Max => Route::Max(arg),
            PoolKind::Mean => Route::Mean { valid_out: col_mask.to_vec(), valid_in: row_mask.to_vec() },
        };
        self.push(v, Op::ColPool { input: a, route }, "col_pool")
    }

    /// Squared Frobenius norm, as a 1x1 node.
    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).sum_squares());
        self.push(v, Op::SumSquares(a), "sum_squares")
    }

    /// Sum of 1x1 nodes in the given order.
    pub fn sum(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        if terms.is_empty() {
            return Err(Error::Empty("sum"));
        }
        let mut total = 0.0;
        for &t in terms {
            let v = self.value(t);
            if v.shape() != (1, 1) {
                return Err(Error::Shape { op: "sum", left: v.shape(), right: (1, 1) });
            }
            total += v.scalar_value();
        }
        self.push(Tensor::scalar(total), Op::Sum(terms.to_vec()), "sum")
    }

    /// Backpropagates from the scalar node `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Shape { op: "backward", left: shape, right: (1, 1) });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.add_dense(*id, &g),
                Op::Gather { param, rows } => {
                    for (j, row) in rows.iter().enumerate() {
                        if let Some(r) = *row {
                            out.add_row(*param, r, g.column(j).data());
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.affine(-1.0, 0.0));
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(self.value(*b))?;
                    let gb = g.mul(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let local = y.map(|s| s * (1.0 - s));
                    accumulate(&mut grads, *a, g.mul(&local)?);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let local = y.map(|t| 1.0 - t * t);
                    accumulate(&mut grads, *a, g.mul(&local)?);
                }
                Op::Affine { input, scale } => accumulate(&mut grads, *input, g.affine(*scale, 0.0)),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let mut gp = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                gp.set(r, c, g.get(r, offset + c));
                            }
                        }
                        offset += cols;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::Column { input, index } => {
                    let (rows, cols) = self.value(*input).shape();
                    let mut gi = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        gi.set(r, *index, g.get(r, 0));
                    }
                    accumulate(&mut grads, *input, gi);
                }
                Op::MaskedSoftmax { input, mask } => {
                    let y = node.value.data();
                    let dot: f64 = y.iter().zip(g.data()).map(|(a, b)| a * b).sum();
                    let gi: Vec<f64> = y
                        .iter()
                        .zip(g.data())
                        .zip(mask)
                        .map(|((&yi, &gi), &m)| if m { yi * (gi - dot) } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *input, Tensor::vector(gi));
                }
                Op::RowPool { input, route } => {
                    let gi = route_pool(self.value(*input).shape(), &g, route, false);
                    accumulate(&mut grads, *input, gi);
                }
                Op::ColPool { input, route } => {
                    let gi = route_pool(self.value(*input).shape(), &g, route, true);
                    accumulate(&mut grads, *input, gi);
                }
                Op::SumSquares(a) => {
                    let s = 2.0 * g.scalar_value();
                    accumulate(&mut grads, *a, self.value(*a).affine(s, 0.0));
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        accumulate(&mut grads, t, g.clone());
                    }
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g).expect("gradient shape matches node"),
        slot @ None => *slot = Some(g),
    }
}

/// Maps a pooled gradient back onto the input grid. `by_column` selects
/// column pooling (output index is the column).
fn route_pool(shape: (usize, usize), g: &Tensor, route: &Route, by_column: bool) -> Tensor {
    let mut gi = Tensor::zeros(shape.0, shape.1);
    let put = |gi: &mut Tensor, out: usize, other: usize, v: f64| {
        let (r, c) = if by_column { (other, out) } else { (out, other) };
        gi.set(r, c, gi.get(r, c) + v);
    };
    match route {
        Route::Max(arg) => {
            for (out, a) in arg.iter().enumerate() {
                if let Some(other) = *a {
                    put(&mut gi, out, other, g.get(out, 0));
                }
            }
        }
        Route::Mean { valid_out, valid_in } => {
            let n = valid_in.iter().filter(|&&m| m).count() as f64;
            for (out, _) in valid_out.iter().enumerate().filter(|(_, &m)| m) {
                let share = g.get(out, 0) / n;
                for (other, _) in valid_in.iter().enumerate().filter(|(_, &m)| m) {
                    put(&mut gi, out, other, share);
                }
            }
        }
    }
    gi
}
