//! Interaction log ingestion, splitting and history queries.
//!
//! An [`EventLog`] is the time-ordered corpus of `(user, item, time)`
//! interactions with users and items remapped to contiguous indices.
//! Splits are contiguous count-based ranges over that ordering, and
//! histories are answered against the full observed log.

mod cache;
mod history;
mod sampling;

pub use cache::{read_cache, write_cache, CACHE_MAGIC};
pub use history::{Entity, History, HistoryEntry, HistoryIndex, PADDING};
pub use sampling::{random_edge_split, sample_history_static, EdgeSplit, StaticAdjacency};

use std::collections::HashMap;
use std::io::Read;
use std::ops::Range;

use crate::error::{Error, Result};

/// One timestamped interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub user: usize,
    pub item: usize,
    pub time: f64,
}

/// Which CSV column holds a field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

/// Column layout of an input CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatDescriptor {
    pub user: ColumnRef,
    pub item: ColumnRef,
    pub time: ColumnRef,
    pub has_header: bool,
}

impl Default for FormatDescriptor {
    fn default() -> Self {
        Self {
            user: ColumnRef::Index(0),
            item: ColumnRef::Index(1),
            time: ColumnRef::Index(2),
            has_header: true,
        }
    }
}

/// The time-ordered interaction corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    user_names: Vec<String>,
    item_names: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    /// Input rows whose timestamp was smaller than the previous row's.
    pub out_of_order_rows: usize,
}

impl EventLog {
    /// Builds a log from raw `(user name, item name, time)` triples.
    ///
    /// Rows are stably sorted by time; indices are assigned by first
    /// appearance in that sorted order.
    pub fn from_records<I, S>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: Into<String>,
    {
        let mut rows: Vec<(String, String, f64)> = Vec::new();
        let mut out_of_order = 0;
        let mut last = f64::NEG_INFINITY;
        for (n, (u, i, t)) in records.into_iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Parse {
                    line: n as u64 + 1,
                    message: format!("timestamp {t} must be finite and non-negative"),
                });
            }
            if t < last {
                out_of_order += 1;
            }
            last = t;
            rows.push((u.into(), i.into(), t));
        }
        Self::assemble(rows, out_of_order)
    }

    fn assemble(mut rows: Vec<(String, String, f64)>, out_of_order: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyLog);
        }
        rows.sort_by(|a, b| a.2.total_cmp(&b.2));
        let mut log = EventLog {
            events: Vec::with_capacity(rows.len()),
            user_names: Vec::new(),
            item_names: Vec::new(),
            user_lookup: HashMap::new(),
            item_lookup: HashMap::new(),
            out_of_order_rows: out_of_order,
        };
        for (u, i, time) in rows {
            let user = intern(&mut log.user_lookup, &mut log.user_names, u);
            let item = intern(&mut log.item_lookup, &mut log.item_names, i);
            log.events.push(Event { user, item, time });
        }
        Ok(log)
    }

    /// Builds a log directly from indexed events. Names are the decimal indices.
    pub fn from_events(num_users: usize, num_items: usize, mut events: Vec<Event>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyLog);
        }
        for e in &events {
            if e.user >= num_users || e.item >= num_items {
                return Err(Error::OutOfRange(format!(
                    "event ({}, {}) outside {num_users}x{num_items}",
                    e.user, e.item
                )));
            }
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(Error::OutOfRange(format!("timestamp {}", e.time)));
            }
        }
        let out_of_order = events.windows(2).filter(|w| w[1].time < w[0].time).count();
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let user_names: Vec<String> = (0..num_users).map(|u| u.to_string()).collect();
        let item_names: Vec<String> = (0..num_items).map(|i| i.to_string()).collect();
        Ok(Self::from_parts(events, user_names, item_names, out_of_order))
    }

    pub(crate) fn from_parts(
        events: Vec<Event>,
        user_names: Vec<String>,
        item_names: Vec<String>,
        out_of_order_rows: usize,
    ) -> Self {
        let user_lookup = user_names.iter().cloned().zip(0..).collect();
        let item_lookup = item_names.iter().cloned().zip(0..).collect();
        EventLog {
            events,
            user_names,
            item_names,
            user_lookup,
            item_lookup,
            out_of_order_rows,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.user_names.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_names.len()
    }

    pub fn user_name(&self, user: usize) -> Option<&str> {
        self.user_names.get(user).map(String::as_str)
    }

    pub fn item_name(&self, item: usize) -> Option<&str> {
        self.item_names.get(item).map(String::as_str)
    }

    pub fn user_names(&self) -> &[String] {
        &self.user_names
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn user_index(&self, name: &str) -> Option<usize> {
        self.user_lookup.get(name).copied()
    }

    pub fn item_index(&self, name: &str) -> Option<usize> {
        self.item_lookup.get(name).copied()
    }

    /// Fraction of events whose `(user, item)` pair already occurred earlier in the log.
    pub fn repeat_rate(&self) -> f64 {
        let mut seen = std::collections::HashSet::with_capacity(self.events.len());
        let repeats = self
            .events
            .iter()
            .filter(|e| !seen.insert((e.user, e.item)))
            .count();
        repeats as f64 / self.events.len() as f64
    }

    pub fn summary(&self) -> LogSummary {
        LogSummary {
            users: self.num_users(),
            items: self.num_items(),
            events: self.len(),
            first_time: self.events.first().map_or(0.0, |e| e.time),
            last_time: self.events.last().map_or(0.0, |e| e.time),
            repeat_rate: self.repeat_rate(),
            out_of_order_rows: self.out_of_order_rows,
        }
    }

    /// A copy of the log with `offset` added to every timestamp.
    pub fn shifted(&self, offset: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.events {
            e.time += offset;
        }
        out
    }
}

fn intern(lookup: &mut HashMap<String, usize>, names: &mut Vec<String>, name: String) -> usize {
    if let Some(&idx) = lookup.get(&name) {
        return idx;
    }
    let idx = names.len();
    names.push(name.clone());
    lookup.insert(name, idx);
    idx
}

/// Corpus statistics printed by ingestion.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LogSummary {
    pub users: usize,
    pub items: usize,
    pub events: usize,
    pub first_time: f64,
    pub last_time: f64,
    pub repeat_rate: f64,
    pub out_of_order_rows: usize,
}

/// Parses a CSV interaction log.
///
/// Extra columns (state labels, feature lists) are ignored. Rows with too
/// few columns or an unparsable timestamp fail with the 1-based line number.
pub fn parse_event_log<R: Read>(input: R, format: &FormatDescriptor) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(format.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header = if format.has_header {
        Some(reader.headers()?.clone())
    } else {
        None
    };
    let resolve = |col: &ColumnRef| -> Result<usize> {
        match col {
            ColumnRef::Index(i) => Ok(*i),
            ColumnRef::Name(name) => header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("column {name:?} not found in header"),
                }),
        }
    };
    let (uc, ic, tc) = (resolve(&format.user)?, resolve(&format.item)?, resolve(&format.time)?);
    let needed = uc.max(ic).max(tc) + 1;

    let mut rows = Vec::new();
    let mut out_of_order = 0;
    let mut last = f64::NEG_INFINITY;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() < needed {
            return Err(Error::Parse {
                line,
                message: format!("expected at least {needed} columns, found {}", record.len()),
            });
        }
        let raw_time = &record[tc];
        let time: f64 = raw_time.parse().map_err(|_| Error::Parse {
            line,
            message: format!("unparsable timestamp {raw_time:?}"),
        })?;
        if !time.is_finite() || time < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("timestamp {raw_time:?} must be finite and non-negative"),
            });
        }
        if time < last {
            out_of_order += 1;
        }
        last = time;
        rows.push((record[uc].to_string(), record[ic].to_string(), time));
    }
    if out_of_order > 0 {
        log::warn!("{out_of_order} rows were out of timestamp order and have been sorted");
    }
    EventLog::assemble(rows, out_of_order)
}

/// Count-based partition of a time-ordered log into train, validation and test ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalSplit {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits `len` time-ordered events by count. The train and validation sizes
/// are `floor(fraction * len)`; the test partition takes the remainder.
pub fn temporal_split(len: usize, fractions: (f64, f64, f64)) -> Result<TemporalSplit> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::Split(format!("fractions must be positive, got {fractions:?}")));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions must sum to 1, got {}", a + b + c)));
    }
    let count = |f: f64| (f * len as f64 + 1e-9).floor() as usize;
    let n_train = count(a);
    let n_val = count(b);
    if n_train == 0 || n_val == 0 || n_train + n_val >= len {
        return Err(Error::Split(format!(
            "{len} events cannot fill all three partitions with {fractions:?}"
        )));
    }
    Ok(TemporalSplit {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<EventLog> {
        parse_event_log(text.as_bytes(), &FormatDescriptor::default())
    }

    #[test]
    fn sorts_and_remaps() {
        let log = parse("user_id,item_id,timestamp\nu1,i1,0\nu2,i1,5\nu1,i2,3\n").unwrap();
        assert_eq!(log.num_users(), 2);
        assert_eq!(log.num_items(), 2);
        let named: Vec<_> = log
            .events()
            .iter()
            .map(|e| (log.user_name(e.user).unwrap(), log.item_name(e.item).unwrap(), e.time))
            .collect();
        assert_eq!(named, vec![("u1", "i1", 0.0), ("u1", "i2", 3.0), ("u2", "i1", 5.0)]);
        assert_eq!(log.out_of_order_rows, 1);
    }

    #[test]
    fn bad_timestamp_names_line() {
        let err = parse("user_id,item_id,timestamp\nu1,i1,abc\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_row_names_line() {
        let err = parse("user_id,item_id,timestamp\nu1,i1,1\nu2,i2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn empty_log_rejected() {
        assert!(matches!(parse("user_id,item_id,timestamp\n"), Err(Error::EmptyLog)));
    }

    #[test]
    fn extra_feature_columns_ignored() {
        let log = parse("user_id,item_id,timestamp,state_label,features\n0,0,1.5,0,0.1,0.2,0.3\n1,3,2.0,1,0.5\n")
            .unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.events()[1].time, 2.0);
    }

    #[test]
    fn named_columns() {
        let fmt = FormatDescriptor {
            user: ColumnRef::Name("who".into()),
            item: ColumnRef::Name("what".into()),
            time: ColumnRef::Name("when".into()),
            has_header: true,
        };
        let log = parse_event_log("when,what,who\n4,a,x\n1,b,y\n".as_bytes(), &fmt).unwrap();
        assert_eq!(log.user_name(log.events()[0].user), Some("y"));
    }

    #[test]
    fn split_counts() {
        let s = temporal_split(10, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        let s = temporal_split(10, (0.6, 0.1, 0.3)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 1, 3));
        // Wikipedia-sized log: floor(0.8 * 157,474).
        let s = temporal_split(157_474, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!(s.train.len(), 125_979);
    }

    #[test]
    fn split_rejects_empty_partition() {
        assert!(temporal_split(5, (0.8, 0.1, 0.1)).is_err());
        assert!(temporal_split(10, (0.8, 0.1, 0.2)).is_err());
        assert!(temporal_split(10, (1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn repeat_rate_counts_prior_pairs() {
        let log = EventLog::from_records([("a", "x", 0.0), ("a", "x", 1.0), ("b", "x", 2.0), ("a", "x", 3.0)])
            .unwrap();
        assert_eq!(log.repeat_rate(), 0.5);
    }
}
