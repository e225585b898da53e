//! Fixtures shared by the benchmarks.

use deepred_core::eventlog::{temporal_split, EventLog, TemporalSplit};
use deepred_core::model::{Model, ModelConfig};
use deepred_core::synth::PlantedContext;
use deepred_core::trainer::mean_entity_gap;

pub const SEED: u64 = 7;

/// A planted-context log of `events` events with its 80/10/10 split.
pub fn planted(events: usize) -> (EventLog, TemporalSplit) {
    let log = PlantedContext { events, ..Default::default() }.generate(SEED).expect("valid generator");
    let split = temporal_split(log.len(), (0.8, 0.1, 0.1)).expect("valid split");
    (log, split)
}

/// An untrained temporal model sized for `log`.
pub fn model(log: &EventLog, split: &TemporalSplit, d: usize, k: usize) -> Model {
    let delta_scale = mean_entity_gap(log.num_users(), log.num_items(), &log.events()[split.train.clone()]);
    let cfg = ModelConfig { d, hidden: d, k, delta_scale, ..Default::default() };
    Model::new(cfg, log.num_users(), log.num_items(), SEED).expect("valid model")
}
