mod common;

use deepred_core::eventlog::{read_cache, write_cache, Entity, Event, EventLog, HistoryIndex};
use proptest::prelude::*;

#[test]
fn index_matches_brute_force_scan() {
    let log = common::random_log(50, 40, 3_000, 1);
    let index = HistoryIndex::from_log(&log);
    let last = log.events().last().unwrap().time;
    for q in 0..400usize {
        let entity = if q % 2 == 0 { Entity::User(q % 50) } else { Entity::Item(q % 40) };
        let t = (q as f64 * 7.3) % (last + 2.0);
        for k in [1, 3, 7] {
            assert_eq!(index.before(entity, t, k), common::brute_history(log.events(), entity, t, k));
        }
    }
}

#[test]
fn incremental_appends_match_bulk_build() {
    let log = common::random_log(20, 10, 500, 2);
    let mut index = HistoryIndex::new(20, 10);
    for (j, &e) in log.events().iter().enumerate() {
        let h = index.before(Entity::User(e.user), e.time, 3);
        assert_eq!(h, common::brute_history(&log.events()[..j], Entity::User(e.user), e.time, 3));
        index.append(e);
    }
}

fn arb_events() -> impl Strategy<Value = Vec<(usize, usize, u32)>> {
    prop::collection::vec((0usize..6, 0usize..5, 0u32..50), 1..60)
}

fn build(raw: &[(usize, usize, u32)]) -> EventLog {
    let events = raw.iter().map(|&(user, item, t)| Event { user, item, time: t as f64 }).collect();
    EventLog::from_events(6, 5, events).unwrap()
}

proptest! {
    #[test]
    fn history_is_strictly_before_and_newest_last(raw in arb_events(), user in 0usize..6, t in 0u32..60, k in 1usize..6) {
        let log = build(&raw);
        let h = HistoryIndex::from_log(&log).before(Entity::User(user), t as f64, k);
        prop_assert_eq!(h.k(), k);
        let valid = h.valid();
        prop_assert!(valid.iter().all(|e| e.delta > 0.0));
        prop_assert!(valid.windows(2).all(|w| w[0].delta >= w[1].delta));
        let prior = log.events().iter().filter(|e| e.user == user && e.time < t as f64).count();
        prop_assert_eq!(h.valid_len, prior.min(k));
    }

    #[test]
    fn cache_round_trip(raw in arb_events()) {
        let log = build(&raw);
        let mut bytes = Vec::new();
        write_cache(&log, &mut bytes).unwrap();
        let back = read_cache(&bytes[..]).unwrap();
        prop_assert_eq!(back.events(), log.events());
        prop_assert_eq!(back.user_names(), log.user_names());
        prop_assert_eq!(back.item_names(), log.item_names());
    }

    #[test]
    fn shifting_time_keeps_every_delta(raw in arb_events(), offset in 0u32..10_000, user in 0usize..6, t in 0u32..60) {
        let log = build(&raw);
        let shifted = log.shifted(offset as f64);
        let a = HistoryIndex::from_log(&log).before(Entity::User(user), t as f64, 4);
        let b = HistoryIndex::from_log(&shifted).before(Entity::User(user), (t + offset) as f64, 4);
        prop_assert_eq!(a.entries, b.entries);
    }
}
