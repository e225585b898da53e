//! The encoder, alignment, attention pooling and projection that turn a
//! user history and an item history into a pair of short-term embeddings.
//!
//! Long-term embeddings of users and items share one table: user `u` is row
//! `u`, item `i` is row `U + i`, and row `U + I` is an all-zero padding row
//! that never receives gradient. A user history is a list of item rows, an
//! item history a list of user rows.
//!
//! Both sides go through the same recurrent encoder. Its gate equations are
//! the non-standard variant this model is defined with: `z` gates the
//! candidate's recurrent term and `r` interpolates between the candidate and
//! the previous state,
//!
//! ```text
//! z = sigmoid(W1z e + b1z + W2z d + b2z + W3z h + b3z)
//! r = sigmoid(W1r e + b1r + W2r d + b2r + W3r h + b3r)
//! n = tanh(W1n e + b1n + W2n d + b2n + z * (W3n h + b3n))
//! h' = (1 - r) * n + r * h
//! ```
//!
//! Padded (leading) steps leave the state untouched and emit a zero column.

mod checkpoint;
mod config;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, MODEL_MAGIC, OPTIMIZER_MAGIC};
pub use config::{DeltaTransform, EncoderMode, ModelConfig, PoolKind};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eventlog::{Entity, History};
use crate::numerics::{NodeId, ParamId, ParamStore, Parameter, Tape, Tensor};
use crate::rng;

/// Parameter ids of one gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateParams {
    pub w_input: ParamId,
    pub w_delta: ParamId,
    pub w_state: ParamId,
    pub b_input: ParamId,
    pub b_delta: ParamId,
    pub b_state: ParamId,
}

impl GateParams {
    pub fn ids(&self) -> [ParamId; 6] {
        [self.w_input, self.w_delta, self.w_state, self.b_input, self.b_delta, self.b_state]
    }
}

/// The single recurrent weight set shared by the user and item encoders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub z: GateParams,
    pub r: GateParams,
    pub n: GateParams,
}

/// Which kind of entity a history belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    User,
    Item,
}

/// Encoder input: gathered long-term embeddings (`d x k`), transformed deltas and validity.
#[derive(Clone, Debug)]
pub struct Signature {
    pub embeddings: NodeId,
    pub deltas: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Encoder output: a feature matrix (`hidden x k`) and its column mask.
#[derive(Clone, Debug)]
pub struct Features {
    pub matrix: NodeId,
    pub mask: Vec<bool>,
}

/// Nodes produced by one user/item pass.
#[derive(Clone, Debug)]
pub struct PairOutput {
    pub user: NodeId,
    pub item: NodeId,
    pub user_weights: NodeId,
    pub item_weights: NodeId,
    pub alignment: NodeId,
    pub user_features: NodeId,
    pub item_features: NodeId,
}

/// A short-term embedding with its owner and the time it was computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortTermEmbedding {
    pub owner: Entity,
    pub time: f64,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    cfg: ModelConfig,
    num_users: usize,
    num_items: usize,
    params: ParamStore,
    table: ParamId,
    gru: Option<GruParams>,
    theta: Option<ParamId>,
}

impl Model {
    /// Fresh model: embeddings ~ N(0, 1/sqrt(d)), recurrent weights
    /// ~ U(-1/sqrt(hidden), 1/sqrt(hidden)), biases 0, alignment matrix = I.
    pub fn new(cfg: ModelConfig, num_users: usize, num_items: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::rng_for(seed, "model-init");
        let rows = num_users + num_items + 1;
        let normal = Normal::new(0.0, 1.0 / (cfg.d as f64).sqrt()).expect("valid std");
        let mut table = Tensor::zeros(rows, cfg.d);
        for row in 0..rows - 1 {
            for v in table.row_mut(row) {
                *v = normal.sample(&mut r);
            }
        }
        let mut model = Self::with_values(cfg, num_users, num_items, table);
        if model.gru.is_some() {
            let bound = 1.0 / (model.cfg.hidden as f64).sqrt();
            for gate in model.gates() {
                for id in [gate.w_input, gate.w_delta, gate.w_state] {
                    for v in model.params.get_mut(id).value.data_mut() {
                        *v = r.random_range(-bound..bound);
                    }
                }
            }
        }
        Ok(model)
    }

    /// Model with the given table, zero recurrent weights and identity alignment.
    fn with_values(cfg: ModelConfig, num_users: usize, num_items: usize, table: Tensor) -> Self {
        let (d, h) = (cfg.d, cfg.hidden);
        let mut params = ParamStore::new();
        let mut table_param = Parameter::new("embeddings", table);
        table_param.frozen_from_row = Some(num_users + num_items);
        let table = params.add(table_param);
        let gru = (cfg.mode == EncoderMode::Temporal).then(|| {
            let mut gate = |q: &str| GateParams {
                w_input: params.add(Parameter::new(format!("w_input_{q}"), Tensor::zeros(h, d))),
                w_delta: params.add(Parameter::new(format!("w_delta_{q}"), Tensor::zeros(h, 1))),
                w_state: params.add(Parameter::new(format!("w_state_{q}"), Tensor::zeros(h, h))),
                b_input: params.add(Parameter::new(format!("b_input_{q}"), Tensor::zeros(h, 1))),
                b_delta: params.add(Parameter::new(format!("b_delta_{q}"), Tensor::zeros(h, 1))),
                b_state: params.add(Parameter::new(format!("b_state_{q}"), Tensor::zeros(h, 1))),
            };
            GruParams { z: gate("z"), r: gate("r"), n: gate("n") }
        });
        let theta = cfg
            .use_theta
            .then(|| params.add(Parameter::new("theta", Tensor::identity(h))));
        Model { cfg, num_users, num_items, params, table, gru, theta }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn table_id(&self) -> ParamId {
        self.table
    }

    pub fn gru(&self) -> Option<GruParams> {
        self.gru
    }

    pub fn theta_id(&self) -> Option<ParamId> {
        self.theta
    }

    fn gates(&self) -> Vec<GateParams> {
        self.gru.map(|g| vec![g.z, g.r, g.n]).unwrap_or_default()
    }

    pub fn padding_row(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Table row of an entity.
    pub fn row_of(&self, entity: Entity) -> usize {
        match entity {
            Entity::User(u) => u,
            Entity::Item(i) => self.num_users + i,
        }
    }

    /// The long-term embedding of an entity.
    pub fn long_term(&self, entity: Entity) -> &[f64] {
        self.params.value(self.table).row(self.row_of(entity))
    }

    /// Gathers the long-term embeddings of a history's counterparts.
    pub fn build_signature(&self, tape: &mut Tape, history: &History, owner: Side) -> Result<Signature> {
        if history.k() != self.cfg.k {
            return Err(Error::Shape { op: "build_signature", left: (history.k(), 1), right: (self.cfg.k, 1) });
        }
        let mask = history.mask();
        let (limit, offset) = match owner {
            Side::User => (self.num_items, self.num_users),
            Side::Item => (self.num_users, 0),
        };
        let mut rows = Vec::with_capacity(history.k());
        let mut deltas = Vec::with_capacity(history.k());
        for (entry, &valid) in history.entries.iter().zip(&mask) {
            if !valid {
                rows.push(None);
                deltas.push(0.0);
                continue;
            }
            if entry.counterpart >= limit {
                return Err(Error::OutOfRange(format!(
                    "counterpart {} with only {limit} candidates",
                    entry.counterpart
                )));
            }
            rows.push(Some(offset + entry.counterpart));
            deltas.push(self.cfg.transform_delta(entry.delta));
        }
        let embeddings = tape.gather(self.table, rows)?;
        Ok(Signature { embeddings, deltas, mask })
    }

    /// Stand-in signature for an entity with no history: its own long-term
    /// embedding as the single valid (newest) slot, with zero delta.
    pub fn surrogate_signature(&self, tape: &mut Tape, entity: Entity) -> Result<Signature> {
        let k = self.cfg.k;
        let mut rows = vec![None; k];
        rows[k - 1] = Some(self.row_of(entity));
        let mut deltas = vec![0.0; k];
        deltas[k - 1] = self.cfg.transform_delta(0.0);
        let mut mask = vec![false; k];
        mask[k - 1] = true;
        let embeddings = tape.gather(self.table, rows)?;
        Ok(Signature { embeddings, deltas, mask })
    }

    /// Runs the shared recurrent encoder over a signature.
    pub fn gru_encode(&self, tape: &mut Tape, sig: &Signature) -> Result<Features> {
        let gru = self
            .gru
            .ok_or_else(|| Error::Config("static model has no recurrent encoder".into()))?;
        let k = sig.mask.len();
        let hidden = self.cfg.hidden;
        if !sig.mask.iter().any(|&m| m) {
            let zero = tape.constant(Tensor::zeros(hidden, k))?;
            return Ok(Features { matrix: zero, mask: sig.mask.clone() });
        }

        let deltas_row = tape.constant(Tensor::from_vec(1, k, sig.deltas.clone())?)?;
        // Input and delta terms for every step at once: W1 E + W2 d^T, plus b1 + b2.
        let mut inputs = Vec::with_capacity(3);
        for gate in [gru.z, gru.r, gru.n] {
            let w1 = tape.param(gate.w_input)?;
            let w2 = tape.param(gate.w_delta)?;
            let from_e = tape.matmul(w1, sig.embeddings)?;
            let from_d = tape.matmul(w2, deltas_row)?;
            let all = tape.add(from_e, from_d)?;
            let b1 = tape.param(gate.b_input)?;
            let b2 = tape.param(gate.b_delta)?;
            let bias = tape.add(b1, b2)?;
            let w3 = tape.param(gate.w_state)?;
            let b3 = tape.param(gate.b_state)?;
            inputs.push((all, bias, w3, b3));
        }

        let mut state = tape.constant(Tensor::zeros(hidden, 1))?;
        let zero_col = tape.constant(Tensor::zeros(hidden, 1))?;
        let mut columns = Vec::with_capacity(k);
        for (j, &valid) in sig.mask.iter().enumerate() {
            if !valid {
                columns.push(zero_col);
                continue;
            }
            let mut pre = [state; 3];
            for (q, &(all, bias, _, _)) in inputs.iter().enumerate() {
                let col = tape.column(all, j)?;
                pre[q] = tape.add(col, bias)?;
            }
            let recurrent = |tape: &mut Tape, q: usize| -> Result<NodeId> {
                let (_, _, w3, b3) = inputs[q];
                let wh = tape.matmul(w3, state)?;
                tape.add(wh, b3)
            };
            let rz = recurrent(tape, 0)?;
            let zsum = tape.add(pre[0], rz)?;
            let z = tape.sigmoid(zsum)?;
            let rr = recurrent(tape, 1)?;
            let rsum = tape.add(pre[1], rr)?;
            let r = tape.sigmoid(rsum)?;
            let rn = recurrent(tape, 2)?;
            let gated = tape.mul(z, rn)?;
            let nsum = tape.add(pre[2], gated)?;
            let n = tape.tanh(nsum)?;
            let keep = tape.affine(r, -1.0, 1.0)?;
            let fresh = tape.mul(keep, n)?;
            let carried = tape.mul(r, state)?;
            state = tape.add(fresh, carried)?;
            columns.push(state);
        }
        let matrix = tape.concat_cols(&columns)?;
        Ok(Features { matrix, mask: sig.mask.clone() })
    }

    /// Static-mode encoder: the gathered embeddings are the features.
    pub fn static_encode(&self, sig: &Signature) -> Features {
        Features { matrix: sig.embeddings, mask: sig.mask.clone() }
    }

    fn encode_signature(&self, tape: &mut Tape, sig: &Signature) -> Result<Features> {
        match self.cfg.mode {
            EncoderMode::Temporal => self.gru_encode(tape, sig),
            EncoderMode::Static => Ok(self.static_encode(sig)),
        }
    }

    /// Signature plus encoder for one history.
    pub fn encode(&self, tape: &mut Tape, history: &History, owner: Side) -> Result<Features> {
        let sig = self.build_signature(tape, history, owner)?;
        self.encode_signature(tape, &sig)
    }

    /// Encodes `history`, or the entity's surrogate when the history is empty.
    pub fn encode_or_surrogate(&self, tape: &mut Tape, history: &History, owner: Entity) -> Result<Features> {
        if history.is_empty() {
            let sig = self.surrogate_signature(tape, owner)?;
            self.encode_signature(tape, &sig)
        } else {
            let side = match owner {
                Entity::User(_) => Side::User,
                Entity::Item(_) => Side::Item,
            };
            self.encode(tape, history, side)
        }
    }

    /// `tanh(Fu^T Fi)`, or `tanh(Fu^T Theta Fi)` with a learned alignment matrix.
    pub fn align(&self, tape: &mut Tape, user: &Features, item: &Features) -> Result<NodeId> {
        let ut = tape.transpose(user.matrix)?;
        let left = match self.theta {
            Some(theta) => {
                let t = tape.param(theta)?;
                tape.matmul(ut, t)?
            }
            None => ut,
        };
        let raw = tape.matmul(left, item.matrix)?;
        tape.tanh(raw)
    }

    /// Pools the alignment grid: per user slot over item slots (rows), and
    /// per item slot over user slots (columns).
    pub fn attend(&self, tape: &mut Tape, alignment: NodeId, user_mask: &[bool], item_mask: &[bool]) -> Result<(NodeId, NodeId)> {
        let u = tape.row_pool(alignment, user_mask, item_mask, self.cfg.pooling)?;
        let i = tape.col_pool(alignment, user_mask, item_mask, self.cfg.pooling)?;
        Ok((u, i))
    }

    /// Weighted sum of feature columns under masked-softmax attention.
    /// Returns `(embedding, weights)`.
    pub fn project(&self, tape: &mut Tape, features: &Features, attention: NodeId) -> Result<(NodeId, NodeId)> {
        let w = tape.masked_softmax(attention, &features.mask)?;
        let out = tape.matmul(features.matrix, w)?;
        Ok((out, w))
    }

    /// Alignment, attention and projection for already-encoded histories.
    pub fn pair(&self, tape: &mut Tape, user: &Features, item: &Features) -> Result<PairOutput> {
        let alignment = self.align(tape, user, item)?;
        let (ua, ia) = self.attend(tape, alignment, &user.mask, &item.mask)?;
        let (u, uw) = self.project(tape, user, ua)?;
        let (i, iw) = self.project(tape, item, ia)?;
        Ok(PairOutput {
            user: u,
            item: i,
            user_weights: uw,
            item_weights: iw,
            alignment,
            user_features: user.matrix,
            item_features: item.matrix,
        })
    }

    /// Full pass: both histories through the shared encoder, then [`Model::pair`].
    pub fn forward(&self, tape: &mut Tape, user_history: &History, item_history: &History) -> Result<PairOutput> {
        let fu = self.encode(tape, user_history, Side::User)?;
        let fi = self.encode(tape, item_history, Side::Item)?;
        self.pair(tape, &fu, &fi)
    }

    /// Forward pass on a private tape, returning `(user, item)` embeddings.
    pub fn embed_pair(&self, user_history: &History, item_history: &History) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, user_history, item_history)?;
        Ok((tape.value(out.user).data().to_vec(), tape.value(out.item).data().to_vec()))
    }

    /// A candidate-independent projection of one side's features, attending
    /// with the side's alignment against itself.
    pub fn self_projection(&self, tape: &mut Tape, features: &Features) -> Result<NodeId> {
        let ft = tape.transpose(features.matrix)?;
        let raw = tape.matmul(ft, features.matrix)?;
        let a = tape.tanh(raw)?;
        let pooled = tape.row_pool(a, &features.mask, &features.mask, self.cfg.pooling)?;
        Ok(self.project(tape, features, pooled)?.0)
    }

    pub(crate) fn from_parts(
        cfg: ModelConfig,
        num_users: usize,
        num_items: usize,
        values: Vec<Tensor>,
    ) -> Result<Self> {
        cfg.validate()?;
        let rows = num_users + num_items + 1;
        let mut model = Self::with_values(cfg, num_users, num_items, Tensor::zeros(rows, 0));
        if values.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                values.len()
            )));
        }
        let d = model.cfg.d;
        for (p, v) in model.params.iter_mut().zip(values) {
            let shape = if p.name == "embeddings" { (rows, d) } else { p.value.shape() };
            if v.shape() != shape {
                return Err(Error::Checkpoint(format!("{} has shape {:?}, expected {shape:?}", p.name, v.shape())));
            }
            p.grad = Tensor::zeros(shape.0, shape.1);
            p.value = v;
        }
        Ok(model)
    }
}
