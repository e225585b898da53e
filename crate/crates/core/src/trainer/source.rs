use crate::eventlog::{Entity, Event, EventLog, HistoryIndex, StaticAdjacency};
use crate::rng;

use super::TrainSample;

/// Indexed training samples. `sample` returns `None` when either participant
/// has no usable history; such samples are skipped.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample `index` as seen in 1-based `epoch`.
    fn sample(&self, epoch: usize, index: usize) -> Option<TrainSample>;
}

/// Training events with histories from every event before them.
#[derive(Debug, Clone)]
pub struct TemporalSamples {
    events: Vec<Event>,
    index: HistoryIndex,
    k: usize,
}

impl TemporalSamples {
    /// Samples for `log.events()[train]`. Histories are drawn from the log
    /// prefix ending at the last training event.
    pub fn new(log: &EventLog, train: std::ops::Range<usize>, k: usize) -> Self {
        let prefix = &log.events()[..train.end];
        TemporalSamples {
            events: log.events()[train].to_vec(),
            index: HistoryIndex::from_events(log.num_users(), log.num_items(), prefix),
            k,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

impl SampleSource for TemporalSamples {
    fn len(&self) -> usize {
        self.events.len()
    }

    fn sample(&self, _epoch: usize, index: usize) -> Option<TrainSample> {
        let event = self.events[index];
        let user_history = self.index.before(Entity::User(event.user), event.time, self.k);
        let item_history = self.index.before(Entity::Item(event.item), event.time, self.k);
        if user_history.is_empty() || item_history.is_empty() {
            return None;
        }
        Some(TrainSample { user_history, item_history, event })
    }
}

/// Training edges with neighbor histories resampled every epoch from the
/// training adjacency, leaving out the edge being trained on.
#[derive(Debug, Clone)]
pub struct StaticSamples {
    edges: Vec<(usize, usize)>,
    adjacency: StaticAdjacency,
    k: usize,
    seed: u64,
}

impl StaticSamples {
    pub fn new(num_users: usize, num_items: usize, edges: &[(usize, usize)], k: usize, seed: u64) -> Self {
        StaticSamples {
            edges: edges.to_vec(),
            adjacency: StaticAdjacency::from_edges(num_users, num_items, edges),
            k,
            seed,
        }
    }
}

impl SampleSource for StaticSamples {
    fn len(&self) -> usize {
        self.edges.len()
    }

    fn sample(&self, epoch: usize, index: usize) -> Option<TrainSample> {
        let (u, i) = self.edges[index];
        let stream = (epoch as u64) << 32 | index as u64;
        let mut r = rng::rng_indexed(self.seed, "static-train-history", stream);
        let user_history = self.adjacency.sample(Entity::User(u), self.k, &mut r, Some(i));
        let item_history = self.adjacency.sample(Entity::Item(i), self.k, &mut r, Some(u));
        if user_history.is_empty() || item_history.is_empty() {
            return None;
        }
        let event = Event { user: u, item: i, time: 0.0 };
        Some(TrainSample { user_history, item_history, event })
    }
}

/// Mean gap between consecutive events of the same entity, over users and
/// items. Returns 1 when there are no positive gaps.
pub fn mean_entity_gap(num_users: usize, num_items: usize, events: &[Event]) -> f64 {
    let mut last_user = vec![None; num_users];
    let mut last_item = vec![None; num_items];
    let (mut sum, mut count) = (0.0, 0usize);
    for e in events {
        for last in [&mut last_user[e.user], &mut last_item[e.item]] {
            if let Some(prev) = last.replace(e.time) {
                sum += e.time - prev;
                count += 1;
            }
        }
    }
    if count == 0 || sum.is_nan() || sum <= 0.0 {
        1.0
    } else {
        sum / count as f64
    }
}
