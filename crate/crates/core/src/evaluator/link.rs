use std::collections::HashSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eventlog::{EdgeSplit, Entity, StaticAdjacency};
use crate::model::{EncoderMode, Model};
use crate::numerics::Tape;
use crate::rng;

use super::metrics::average_precision;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkPrediction {
    pub average_precision: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// `needed` distinct pairs absent from the full log, drawn uniformly.
pub fn sample_negatives(split: &EdgeSplit, needed: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let mut r = rng::rng_for(seed, "negative-pairs");
    let attempts_allowed = needed.saturating_mul(100);
    let mut chosen = HashSet::with_capacity(needed);
    let mut out = Vec::with_capacity(needed);
    let mut attempts = 0;
    while out.len() < needed {
        if attempts == attempts_allowed {
            return Err(Error::NegativeSampling { found: out.len(), needed, attempts });
        }
        attempts += 1;
        let pair = (r.random_range(0..split.num_users), r.random_range(0..split.num_items));
        if !split.all.contains(&pair) && chosen.insert(pair) {
            out.push(pair);
        }
    }
    Ok(out)
}

/// `-|u - i|` for each pair, with both sides' histories freshly sampled from
/// `adjacency`. Entities without neighbors use their surrogate history.
pub fn score_pairs(model: &Model, adjacency: &StaticAdjacency, pairs: &[(usize, usize)], seed: u64) -> Result<Vec<f64>> {
    let k = model.config().k;
    pairs
        .par_iter()
        .enumerate()
        .map(|(j, &(u, i))| {
            let mut r = rng::rng_indexed(seed, "link-history", j as u64);
            let (ue, ie) = (Entity::User(u), Entity::Item(i));
            let uh = adjacency.sample(ue, k, &mut r, None);
            let ih = adjacency.sample(ie, k, &mut r, None);
            let mut tape = Tape::new(model.params());
            let fu = model.encode_or_surrogate(&mut tape, &uh, ue)?;
            let fi = model.encode_or_surrogate(&mut tape, &ih, ie)?;
            let out = model.pair(&mut tape, &fu, &fi)?;
            let (a, b) = (tape.value(out.user).data(), tape.value(out.item).data());
            Ok(-a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        })
        .collect()
}

/// Average precision of `positives` against as many sampled absent pairs,
/// using histories from the training edges only.
pub fn static_link_prediction(model: &Model, split: &EdgeSplit, positives: &[(usize, usize)], seed: u64) -> Result<LinkPrediction> {
    if model.config().mode != EncoderMode::Static {
        return Err(Error::Config("link prediction needs a static-mode model".into()));
    }
    if positives.is_empty() {
        return Err(Error::Empty("positive pairs"));
    }
    let negatives = sample_negatives(split, positives.len(), seed)?;
    let adjacency = split.train_adjacency();
    let pairs: Vec<(usize, usize)> = positives.iter().chain(&negatives).copied().collect();
    let scores = score_pairs(model, &adjacency, &pairs, seed)?;
    let scored: Vec<(f64, bool)> = scores.into_iter().enumerate().map(|(j, s)| (s, j < positives.len())).collect();
    Ok(LinkPrediction {
        average_precision: average_precision(&scored)?,
        positives: positives.len(),
        negatives: negatives.len(),
    })
}
