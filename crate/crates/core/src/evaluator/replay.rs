use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{Entity, Event, EventLog, HistoryIndex};
use crate::model::{Features, Model, ShortTermEmbedding};
use crate::numerics::{Tape, Tensor};

use super::metrics::{mrr, recall_at_k};

/// How candidate items are represented when ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    /// Each candidate's item embedding is recomputed against the querying
    /// user from the candidate's current history.
    Exact,
    /// Each candidate is represented by its latest stored short-term embedding.
    Cached,
}

impl std::str::FromStr for RankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(RankMode::Exact),
            "cached" => Ok(RankMode::Cached),
            _ => Err(Error::Config(format!("unknown rank mode {s:?} (expected exact or cached)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplayOptions {
    pub mode: RankMode,
    /// Refresh both participants' stored embeddings after each revealed
    /// event. When off, the store keeps the values it had before replay.
    pub refresh: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions { mode: RankMode::Exact, refresh: true }
    }
}

/// Latest short-term embedding per user and per item.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShortTermStore {
    users: Vec<Option<ShortTermEmbedding>>,
    items: Vec<Option<ShortTermEmbedding>>,
}

impl ShortTermStore {
    pub fn new(num_users: usize, num_items: usize) -> Self {
        ShortTermStore { users: vec![None; num_users], items: vec![None; num_items] }
    }

    pub fn get(&self, entity: Entity) -> Option<&ShortTermEmbedding> {
        match entity {
            Entity::User(u) => self.users[u].as_ref(),
            Entity::Item(i) => self.items[i].as_ref(),
        }
    }

    pub fn set(&mut self, value: ShortTermEmbedding) {
        let slot = match value.owner {
            Entity::User(u) => &mut self.users[u],
            Entity::Item(i) => &mut self.items[i],
        };
        *slot = Some(value);
    }
}

/// Replay state: the history index and embedding store after some prefix of
/// the log has been revealed.
pub struct Replay<'m> {
    model: &'m Model,
    index: HistoryIndex,
    store: ShortTermStore,
    /// Cold-start representatives: each item's own embedding through one encoder step.
    cold: Vec<Vec<f64>>,
    options: ReplayOptions,
}

impl<'m> Replay<'m> {
    /// Reveals `log.events()[..prefix_end]` and seeds the store with every
    /// entity's embedding as of its last revealed event.
    pub fn new(model: &'m Model, log: &EventLog, prefix_end: usize, options: ReplayOptions) -> Result<Self> {
        if log.num_users() != model.num_users() || log.num_items() != model.num_items() {
            return Err(Error::Config(format!(
                "model has {} users and {} items, log has {} and {}",
                model.num_users(),
                model.num_items(),
                log.num_users(),
                log.num_items()
            )));
        }
        let prefix = &log.events()[..prefix_end];
        let index = HistoryIndex::from_events(log.num_users(), log.num_items(), prefix);
        let cold = (0..model.num_items())
            .into_par_iter()
            .map(|i| cold_item(model, i))
            .collect::<Result<Vec<_>>>()?;
        let mut replay = Replay { model, index, store: ShortTermStore::new(log.num_users(), log.num_items()), cold, options };

        let mut last_user = vec![None; log.num_users()];
        let mut last_item = vec![None; log.num_items()];
        for (j, e) in prefix.iter().enumerate() {
            last_user[e.user] = Some(j);
            last_item[e.item] = Some(j);
        }
        let mut seeds: Vec<usize> = last_user.iter().chain(&last_item).flatten().copied().collect();
        seeds.sort_unstable();
        seeds.dedup();
        let computed = seeds
            .par_iter()
            .map(|&j| replay.fresh_pair(prefix[j]).map(|p| (j, p)))
            .collect::<Result<Vec<_>>>()?;
        for (j, (u, i)) in computed {
            let e = prefix[j];
            if last_user[e.user] == Some(j) {
                replay.store.set(u);
            }
            if last_item[e.item] == Some(j) {
                replay.store.set(i);
            }
        }
        Ok(replay)
    }

    pub fn store(&self) -> &ShortTermStore {
        &self.store
    }

    pub fn index(&self) -> &HistoryIndex {
        &self.index
    }

    pub fn options(&self) -> ReplayOptions {
        self.options
    }

    /// Short-term embeddings of both participants right after `event`, from
    /// histories that include it.
    fn fresh_pair(&self, event: Event) -> Result<(ShortTermEmbedding, ShortTermEmbedding)> {
        let k = self.model.config().k;
        let (ue, ie) = (Entity::User(event.user), Entity::Item(event.item));
        let uh = self.index.up_to(ue, event.time, k);
        let ih = self.index.up_to(ie, event.time, k);
        let mut tape = Tape::new(self.model.params());
        let fu = self.model.encode_or_surrogate(&mut tape, &uh, ue)?;
        let fi = self.model.encode_or_surrogate(&mut tape, &ih, ie)?;
        let out = self.model.pair(&mut tape, &fu, &fi)?;
        let vec = |n| tape.value(n).data().to_vec();
        Ok((
            ShortTermEmbedding { owner: ue, time: event.time, vector: vec(out.user) },
            ShortTermEmbedding { owner: ie, time: event.time, vector: vec(out.item) },
        ))
    }

    /// The user's encoded features for a query at `t`.
    fn user_features(&self, user: usize, t: f64) -> Result<(Tensor, Vec<bool>)> {
        if user >= self.model.num_users() {
            return Err(Error::OutOfRange(format!("unknown user {user}")));
        }
        let ue = Entity::User(user);
        let history = self.index.before(ue, t, self.model.config().k);
        let mut tape = Tape::new(self.model.params());
        let f = self.model.encode_or_surrogate(&mut tape, &history, ue)?;
        Ok((tape.value(f.matrix).clone(), f.mask))
    }

    /// Squared distance from the user's embedding at `t` to every candidate item.
    pub fn scores(&self, user: usize, t: f64) -> Result<Vec<f64>> {
        let (fu_value, fu_mask) = self.user_features(user, t)?;
        let model = self.model;
        match self.options.mode {
            RankMode::Exact => (0..model.num_items())
                .into_par_iter()
                .map(|c| {
                    let ie = Entity::Item(c);
                    let history = self.index.before(ie, t, model.config().k);
                    let mut tape = Tape::new(model.params());
                    let fu = Features { matrix: tape.constant(fu_value.clone())?, mask: fu_mask.clone() };
                    let fi = model.encode_or_surrogate(&mut tape, &history, ie)?;
                    let out = model.pair(&mut tape, &fu, &fi)?;
                    Ok(squared_distance(tape.value(out.user).data(), tape.value(out.item).data()))
                })
                .collect(),
            RankMode::Cached => {
                let mut tape = Tape::new(model.params());
                let fu = Features { matrix: tape.constant(fu_value)?, mask: fu_mask };
                let q = self_projection_value(&mut tape, model, &fu)?;
                Ok((0..model.num_items())
                    .map(|c| {
                        let rep = self.store.get(Entity::Item(c)).map_or(&self.cold[c][..], |s| &s.vector[..]);
                        squared_distance(&q, rep)
                    })
                    .collect())
            }
        }
    }

    /// 1-based rank of `item` among all items under `scores`, ties broken by
    /// item index.
    pub fn rank_of(scores: &[f64], item: usize) -> usize {
        let s = scores[item];
        1 + scores
            .iter()
            .enumerate()
            .filter(|&(c, &v)| v < s || (v == s && c < item))
            .count()
    }

    /// The `k` closest items to `user` at `t`, nearest first.
    pub fn top_k(&self, user: usize, t: f64, k: usize) -> Result<Vec<(usize, f64)>> {
        let scores = self.scores(user, t)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        Ok(order.into_iter().take(k).map(|c| (c, scores[c])).collect())
    }

    /// Adds `event` to the histories and, when refreshing, recomputes both
    /// participants' stored embeddings.
    pub fn reveal(&mut self, event: Event) -> Result<()> {
        if event.user >= self.model.num_users() || event.item >= self.model.num_items() {
            return Err(Error::OutOfRange(format!("event ({}, {})", event.user, event.item)));
        }
        self.index.append(event);
        if self.options.refresh {
            let (u, i) = self.fresh_pair(event)?;
            self.store.set(u);
            self.store.set(i);
        }
        Ok(())
    }
}

fn self_projection_value(tape: &mut Tape, model: &Model, features: &Features) -> Result<Vec<f64>> {
    let node = model.self_projection(tape, features)?;
    Ok(tape.value(node).data().to_vec())
}

fn cold_item(model: &Model, item: usize) -> Result<Vec<f64>> {
    let mut tape = Tape::new(model.params());
    let entity = Entity::Item(item);
    let sig = model.surrogate_signature(&mut tape, entity)?;
    let features = match model.gru() {
        Some(_) => model.gru_encode(&mut tape, &sig)?,
        None => model.static_encode(&sig),
    };
    self_projection_value(&mut tape, model, &features)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ranks of the ground-truth items of an evaluation range, with summary metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingOutcome {
    /// Log index of the first evaluated event; `ranks[j]` belongs to event `first_event + j`.
    pub first_event: usize,
    pub ranks: Vec<usize>,
    pub mrr: f64,
    pub recall_at_1: f64,
    pub recall_at_10: f64,
    pub wall_seconds: f64,
}

impl RankingOutcome {
    pub fn num_events(&self) -> usize {
        self.ranks.len()
    }
}

/// Replays `log.events()[range]` in order: score, record the ground truth's
/// rank, then reveal the event.
pub fn replay_evaluate(model: &Model, log: &EventLog, range: Range<usize>, options: ReplayOptions) -> Result<RankingOutcome> {
    if range.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    if range.end > log.len() {
        return Err(Error::OutOfRange(format!("evaluation range ends at {} beyond {} events", range.end, log.len())));
    }
    let start = Instant::now();
    let mut replay = Replay::new(model, log, range.start, options)?;
    let mut ranks = Vec::with_capacity(range.len());
    for &event in &log.events()[range.clone()] {
        let scores = replay.scores(event.user, event.time)?;
        ranks.push(Replay::rank_of(&scores, event.item));
        replay.reveal(event)?;
    }
    Ok(RankingOutcome {
        first_event: range.start,
        mrr: mrr(&ranks)?,
        recall_at_1: recall_at_k(&ranks, 1)?,
        recall_at_10: recall_at_k(&ranks, 10)?,
        ranks,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// The `k` best items for `user` at time `t`, given everything before
/// `prefix_end` in `log` has been revealed.
pub fn predict_topk(
    model: &Model,
    log: &EventLog,
    prefix_end: usize,
    user: usize,
    t: f64,
    k: usize,
    options: ReplayOptions,
) -> Result<Vec<(usize, f64)>> {
    if user >= model.num_users() {
        return Err(Error::OutOfRange(format!("unknown user {user}")));
    }
    Replay::new(model, log, prefix_end, options)?.top_k(user, t, k)
}
