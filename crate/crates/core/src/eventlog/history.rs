use super::{Event, EventLog};

/// Counterpart index used by padded history slots.
pub const PADDING: usize = usize::MAX;

/// A user or an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entity {
    User(usize),
    Item(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    /// Item index for a user history, user index for an item history.
    pub counterpart: usize,
    /// Elapsed time between the history event and the query time.
    pub delta: f64,
}

impl HistoryEntry {
    pub const PAD: HistoryEntry = HistoryEntry {
        counterpart: PADDING,
        delta: 0.0,
    };

    pub fn is_padding(&self) -> bool {
        self.counterpart == PADDING
    }
}

/// The `k` most recent counterpart interactions of one entity, oldest first,
/// left-padded so the newest event always sits in the last slot.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub entries: Vec<HistoryEntry>,
    pub valid_len: usize,
    pub query_time: f64,
}

impl History {
    /// An all-padding history of length `k`.
    pub fn empty(k: usize, query_time: f64) -> Self {
        History {
            entries: vec![HistoryEntry::PAD; k],
            valid_len: 0,
            query_time,
        }
    }

    /// Left-pads `recent` (oldest first, at most `k` long) to length `k`.
    pub fn from_recent(k: usize, query_time: f64, recent: &[HistoryEntry]) -> Self {
        assert!(recent.len() <= k, "history longer than k");
        let mut entries = vec![HistoryEntry::PAD; k - recent.len()];
        entries.extend_from_slice(recent);
        History {
            entries,
            valid_len: recent.len(),
            query_time,
        }
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid_len == 0
    }

    /// Validity flag per slot.
    pub fn mask(&self) -> Vec<bool> {
        let pad = self.k() - self.valid_len;
        (0..self.k()).map(|j| j >= pad).collect()
    }

    pub fn valid(&self) -> &[HistoryEntry] {
        &self.entries[self.k() - self.valid_len..]
    }
}

/// Per-entity event lists in time order, supporting history queries at any time.
///
/// Each entity keeps every appended `(counterpart, time)` pair so queries at
/// arbitrary past times stay exact; lookups are a binary search plus a copy
/// of at most `k` entries.
#[derive(Debug, Clone, Default)]
pub struct HistoryIndex {
    users: Vec<Vec<(usize, f64)>>,
    items: Vec<Vec<(usize, f64)>>,
}

impl HistoryIndex {
    pub fn new(num_users: usize, num_items: usize) -> Self {
        HistoryIndex {
            users: vec![Vec::new(); num_users],
            items: vec![Vec::new(); num_items],
        }
    }

    /// Index over every event of `log`.
    pub fn from_log(log: &EventLog) -> Self {
        Self::from_events(log.num_users(), log.num_items(), log.events())
    }

    pub fn from_events(num_users: usize, num_items: usize, events: &[Event]) -> Self {
        let mut index = Self::new(num_users, num_items);
        for e in events {
            index.append(*e);
        }
        index
    }

    /// Reveals one event. Events normally arrive in time order; a late event
    /// is inserted after any entries with an equal or smaller timestamp.
    pub fn append(&mut self, event: Event) {
        insert_sorted(&mut self.users[event.user], event.item, event.time);
        insert_sorted(&mut self.items[event.item], event.user, event.time);
    }

    fn list(&self, entity: Entity) -> &[(usize, f64)] {
        match entity {
            Entity::User(u) => &self.users[u],
            Entity::Item(i) => &self.items[i],
        }
    }

    /// Number of revealed events of `entity`.
    pub fn count(&self, entity: Entity) -> usize {
        self.list(entity).len()
    }

    /// Time of the entity's latest revealed event.
    pub fn last_time(&self, entity: Entity) -> Option<f64> {
        self.list(entity).last().map(|&(_, t)| t)
    }

    /// The last `k` events of `entity` strictly before `t`.
    pub fn before(&self, entity: Entity, t: f64, k: usize) -> History {
        let list = self.list(entity);
        let end = list.partition_point(|&(_, tj)| tj < t);
        collect(list, end, t, k)
    }

    /// The last `k` events of `entity` at or before `t`; deltas may be zero.
    pub fn up_to(&self, entity: Entity, t: f64, k: usize) -> History {
        let list = self.list(entity);
        let end = list.partition_point(|&(_, tj)| tj <= t);
        collect(list, end, t, k)
    }
}

fn insert_sorted(list: &mut Vec<(usize, f64)>, counterpart: usize, time: f64) {
    if list.last().is_none_or(|&(_, t)| t <= time) {
        list.push((counterpart, time));
    } else {
        let pos = list.partition_point(|&(_, t)| t <= time);
        list.insert(pos, (counterpart, time));
    }
}

fn collect(list: &[(usize, f64)], end: usize, t: f64, k: usize) -> History {
    assert!(k >= 1, "history length must be at least 1");
    let start = end.saturating_sub(k);
    let recent: Vec<HistoryEntry> = list[start..end]
        .iter()
        .map(|&(counterpart, tj)| HistoryEntry {
            counterpart,
            delta: t - tj,
        })
        .collect();
    History::from_recent(k, t, &recent)
}
