//! Static-network views of a log: deduplicated edges, random edge splits and
//! sampled (unordered) neighbor histories.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};

use super::history::{Entity, History, HistoryEntry};
use super::EventLog;
use crate::error::{Error, Result};
use crate::rng;

/// Adjacency lists of a bipartite edge set.
#[derive(Debug, Clone, Default)]
pub struct StaticAdjacency {
    users: Vec<Vec<usize>>,
    items: Vec<Vec<usize>>,
}

impl StaticAdjacency {
    pub fn from_edges(num_users: usize, num_items: usize, edges: &[(usize, usize)]) -> Self {
        let mut users = vec![Vec::new(); num_users];
        let mut items = vec![Vec::new(); num_items];
        for &(u, i) in edges {
            users[u].push(i);
            items[i].push(u);
        }
        StaticAdjacency { users, items }
    }

    pub fn neighbors(&self, entity: Entity) -> &[usize] {
        match entity {
            Entity::User(u) => &self.users[u],
            Entity::Item(i) => &self.items[i],
        }
    }

    /// Samples `k` neighbors of `entity`: without replacement when at least
    /// `k` exist, with replacement when fewer (but at least one) exist.
    /// `exclude` drops one counterpart from the pool, which keeps a training
    /// edge from appearing in its own conditioning histories.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        entity: Entity,
        k: usize,
        rng: &mut R,
        exclude: Option<usize>,
    ) -> History {
        assert!(k >= 1, "history length must be at least 1");
        let all = self.neighbors(entity);
        let filtered: Vec<usize>;
        let pool: &[usize] = match exclude {
            Some(x) if all.contains(&x) => {
                filtered = all.iter().copied().filter(|&c| c != x).collect();
                &filtered
            }
            _ => all,
        };
        if pool.is_empty() {
            return History::empty(k, 0.0);
        }
        let picked: Vec<HistoryEntry> = if pool.len() >= k {
            index::sample(rng, pool.len(), k)
                .into_iter()
                .map(|j| HistoryEntry { counterpart: pool[j], delta: 0.0 })
                .collect()
        } else {
            (0..k)
                .map(|_| HistoryEntry {
                    counterpart: pool[rng.random_range(0..pool.len())],
                    delta: 0.0,
                })
                .collect()
        };
        History::from_recent(k, 0.0, &picked)
    }
}

/// Samples a static history for `entity` deterministically from `seed`.
pub fn sample_history_static(adj: &StaticAdjacency, entity: Entity, k: usize, seed: u64) -> History {
    let mut r = rng::Rng::seed_from_u64(seed);
    adj.sample(entity, k, &mut r, None)
}

/// A random partition of the deduplicated edge set.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    /// Every distinct pair in the full log.
    pub all: HashSet<(usize, usize)>,
}

impl EdgeSplit {
    pub fn train_adjacency(&self) -> StaticAdjacency {
        StaticAdjacency::from_edges(self.num_users, self.num_items, &self.train)
    }
}

/// Deduplicates the log's `(user, item)` pairs, shuffles them under `seed`
/// and partitions them by count (`floor` for train and validation, remainder to test).
pub fn random_edge_split(log: &EventLog, fractions: (f64, f64, f64), seed: u64) -> Result<EdgeSplit> {
    let all: HashSet<(usize, usize)> = log.events().iter().map(|e| (e.user, e.item)).collect();
    let mut edges: Vec<(usize, usize)> = all.iter().copied().collect();
    edges.sort_unstable();
    let bounds = super::temporal_split(edges.len(), fractions)?;
    let mut r = rng::rng_for(seed, "edge-split");
    edges.shuffle(&mut r);
    let test = edges.split_off(bounds.test.start);
    let val = edges.split_off(bounds.val.start);
    if edges.is_empty() {
        return Err(Error::Split("empty training partition".into()));
    }
    Ok(EdgeSplit {
        num_users: log.num_users(),
        num_items: log.num_items(),
        train: edges,
        val,
        test,
        all,
    })
}
