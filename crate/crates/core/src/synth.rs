//! Synthetic logs with planted structure, for learning checks and benchmarks.

use rand::Rng as _;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{Event, EventLog};
use crate::rng;

/// Users and items are split evenly into contexts; each event picks a user
/// uniformly, then an item from the user's context with probability
/// `in_context` and from another context otherwise. Inside the chosen
/// context items follow a Zipf law with `popularity_exponent` (0 = uniform).
/// Timestamps advance by i.i.d. exponential gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedContext {
    pub users: usize,
    pub items: usize,
    pub contexts: usize,
    pub events: usize,
    pub in_context: f64,
    pub popularity_exponent: f64,
    pub mean_gap: f64,
}

impl Default for PlantedContext {
    fn default() -> Self {
        PlantedContext {
            users: 200,
            items: 100,
            contexts: 2,
            events: 20_000,
            in_context: 0.9,
            popularity_exponent: 1.0,
            mean_gap: 1.0,
        }
    }
}

impl PlantedContext {
    fn validate(&self) -> Result<()> {
        if self.contexts < 1 || self.users < self.contexts || self.items < self.contexts || self.events == 0 {
            return Err(Error::Config("planted-context sizes are inconsistent".into()));
        }
        if !(0.0..=1.0).contains(&self.in_context) || self.mean_gap.is_nan() || self.mean_gap <= 0.0 || self.popularity_exponent.is_nan() || self.popularity_exponent < 0.0 {
            return Err(Error::Config("planted-context probabilities out of range".into()));
        }
        Ok(())
    }

    pub fn user_context(&self, user: usize) -> usize {
        user % self.contexts
    }

    pub fn item_context(&self, item: usize) -> usize {
        item % self.contexts
    }

    /// Items of one context, most popular first.
    fn context_items(&self, context: usize) -> Vec<usize> {
        (0..self.items).filter(|&i| self.item_context(i) == context).collect()
    }

    /// Probability of each item given a user of `context`.
    pub fn item_distribution(&self, context: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.items];
        let others = self.contexts - 1;
        for c in 0..self.contexts {
            let mass = if c == context {
                if others == 0 { 1.0 } else { self.in_context }
            } else {
                (1.0 - self.in_context) / others as f64
            };
            let items = self.context_items(c);
            let weights: Vec<f64> = (1..=items.len()).map(|r| (r as f64).powf(-self.popularity_exponent)).collect();
            let total: f64 = weights.iter().sum();
            for (&i, w) in items.iter().zip(weights) {
                p[i] += mass * w / total;
            }
        }
        p
    }

    /// Expected MRR of a predictor that knows each user's context and the
    /// exact item distribution: items ranked by probability.
    pub fn bayes_mrr(&self) -> f64 {
        (0..self.contexts)
            .map(|c| {
                let mut p = self.item_distribution(c);
                p.sort_by(|a, b| b.total_cmp(a));
                p.iter().enumerate().map(|(r, q)| q / (r + 1) as f64).sum::<f64>()
            })
            .sum::<f64>()
            / self.contexts as f64
    }

    pub fn generate(&self, seed: u64) -> Result<EventLog> {
        self.validate()?;
        let mut r = rng::rng_for(seed, "planted-context");
        let gap = Exp::new(1.0 / self.mean_gap).expect("positive rate");
        let cumulative: Vec<Vec<f64>> = (0..self.contexts)
            .map(|c| {
                let mut acc = 0.0;
                self.item_distribution(c)
                    .into_iter()
                    .map(|q| {
                        acc += q;
                        acc
                    })
                    .collect()
            })
            .collect();
        let mut time = 0.0;
        let mut events = Vec::with_capacity(self.events);
        for _ in 0..self.events {
            time += gap.sample(&mut r);
            let user = r.random_range(0..self.users);
            let cdf = &cumulative[self.user_context(user)];
            let x = r.random::<f64>() * cdf[cdf.len() - 1];
            let item = cdf.partition_point(|&c| c <= x).min(self.items - 1);
            events.push(Event { user, item, time });
        }
        EventLog::from_events(self.users, self.items, events)
    }
}

/// Two-block bipartite graph: users and items each split in half, every
/// pair linked independently with `p_in` inside a block and `p_out` across.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoBlock {
    pub users: usize,
    pub items: usize,
    pub p_in: f64,
    pub p_out: f64,
}

impl Default for TwoBlock {
    fn default() -> Self {
        TwoBlock { users: 100, items: 100, p_in: 0.3, p_out: 0.01 }
    }
}

impl TwoBlock {
    pub fn user_block(&self, user: usize) -> usize {
        usize::from(user >= self.users / 2)
    }

    pub fn item_block(&self, item: usize) -> usize {
        usize::from(item >= self.items / 2)
    }

    /// One event per edge, timestamped by edge order.
    pub fn generate(&self, seed: u64) -> Result<EventLog> {
        if self.users < 2 || self.items < 2 {
            return Err(Error::Config("two-block graph needs at least two users and two items".into()));
        }
        let mut r = rng::rng_for(seed, "two-block");
        let mut events = Vec::new();
        for u in 0..self.users {
            for i in 0..self.items {
                let p = if self.user_block(u) == self.item_block(i) { self.p_in } else { self.p_out };
                if r.random::<f64>() < p {
                    events.push(Event { user: u, item: i, time: events.len() as f64 });
                }
            }
        }
        EventLog::from_events(self.users, self.items, events)
    }
}
