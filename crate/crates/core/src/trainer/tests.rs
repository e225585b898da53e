use super::*;
use crate::model::{encode_checkpoint, ModelConfig};
use crate::synth::PlantedContext;

fn small_log() -> crate::eventlog::EventLog {
    PlantedContext { users: 20, items: 10, events: 600, ..Default::default() }
        .generate(4)
        .unwrap()
}

fn small_model(seed: u64) -> Model {
    let cfg = ModelConfig { d: 6, hidden: 6, k: 3, ..Default::default() };
    Model::new(cfg, 20, 10, seed).unwrap()
}

fn quick_cfg(epochs: usize) -> TrainConfig {
    TrainConfig { batch_size: 32, epochs, learning_rate: 5e-3, seed: 9, ..Default::default() }
}

fn no_validation(_: &Model) -> Result<Option<Validation>> {
    Ok(None)
}

#[test]
fn zero_epochs_returns_initial_model() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    let model = small_model(1);
    let out = train(model.clone(), &source, quick_cfg(0), no_validation, |_| Ok(())).unwrap();
    assert_eq!(out.model, model);
    assert_eq!(out.best, model);
    assert!(out.records.is_empty());
}

#[test]
fn padding_row_stays_zero() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    let out = train(small_model(1), &source, quick_cfg(2), no_validation, |_| Ok(())).unwrap();
    let pad = out.model.padding_row();
    assert!(out.model.params().value(out.model.table_id()).row(pad).iter().all(|&v| v == 0.0));
}

#[test]
fn same_seed_same_checkpoint() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    let run = || {
        let out = train(small_model(2), &source, quick_cfg(2), no_validation, |_| Ok(())).unwrap();
        encode_checkpoint(&out.model, Some(&out.optimizer))
    };
    assert_eq!(run(), run());
}

#[test]
fn loss_goes_down() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    let out = train(small_model(3), &source, quick_cfg(5), no_validation, |_| Ok(())).unwrap();
    let first = out.records[0].train_loss;
    let last = out.records[4].train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn best_epoch_follows_validation_score() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    let scores = [0.1, 0.5, 0.2];
    let mut calls = 0;
    let mut snapshots = Vec::new();
    let out = train(
        small_model(3),
        &source,
        quick_cfg(3),
        |_| {
            calls += 1;
            Ok(Some(Validation { score: scores[calls - 1], mrr: Some(scores[calls - 1]), ..Default::default() }))
        },
        |r| {
            snapshots.push(r.model.clone());
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(out.best_epoch, Some(2));
    assert_eq!(out.best, snapshots[1]);
    assert_eq!(out.records[1].val_mrr, Some(0.5));
}

#[test]
fn checkpoint_schedule() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    let cfg = TrainConfig { checkpoint_every: 2, ..quick_cfg(4) };
    let mut due = Vec::new();
    train(small_model(1), &source, cfg, no_validation, |r| {
        due.push(r.checkpoint_due);
        Ok(())
    })
    .unwrap();
    assert_eq!(due, vec![false, true, false, true]);
}

#[test]
fn samples_exclude_their_own_event() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    for j in 0..source.len() {
        if let Some(s) = source.sample(1, j) {
            let t = s.event.time;
            assert!(s.user_history.valid().iter().all(|e| e.delta > 0.0 && t - e.delta < t));
            assert!(s.item_history.valid().iter().all(|e| e.delta > 0.0));
        }
    }
}

#[test]
fn shuffled_order_is_a_permutation() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    let trainer = Trainer::new(small_model(1), &source, quick_cfg(1)).unwrap();
    let mut order = trainer.epoch_order(1);
    assert_ne!(order, (0..500).collect::<Vec<_>>());
    assert_ne!(order, trainer.epoch_order(2));
    order.sort_unstable();
    assert_eq!(order, (0..500).collect::<Vec<_>>());
    let plain = Trainer::new(small_model(1), &source, TrainConfig { shuffle: false, ..quick_cfg(1) }).unwrap();
    assert_eq!(plain.epoch_order(1), (0..500).collect::<Vec<_>>());
}

#[test]
fn invalid_config_rejected() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    for cfg in [
        TrainConfig { batch_size: 0, ..Default::default() },
        TrainConfig { learning_rate: 0.0, ..Default::default() },
        TrainConfig { gamma: -1.0, ..Default::default() },
    ] {
        assert!(Trainer::new(small_model(1), &source, cfg).is_err());
    }
}

#[test]
fn batch_loss_is_mean_of_pair_losses() {
    let log = small_log();
    let source = TemporalSamples::new(&log, 0..500, 3);
    let model = small_model(5);
    let samples: Vec<_> = (100..110).filter_map(|j| source.sample(1, j)).collect();
    assert!(batch_loss(&model, &[], 0.01).is_err());
    let one = batch_loss(&model, &samples[..1], 0.01).unwrap();
    let (u, i) = model.embed_pair(&samples[0].user_history, &samples[0].item_history).unwrap();
    assert!((one - pair_loss_value(&u, &i, 0.01).unwrap()).abs() < 1e-12);
    let losses = sample_losses(&model, &samples, 0.01).unwrap();
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    assert_eq!(batch_loss(&model, &samples, 0.01).unwrap(), mean);
}

#[test]
fn mean_gap_oracle() {
    use crate::eventlog::Event;
    let events = [
        Event { user: 0, item: 0, time: 0.0 },
        Event { user: 0, item: 1, time: 2.0 },
        Event { user: 1, item: 0, time: 6.0 },
    ];
    // user 0: gap 2; item 0: gap 6.
    assert_eq!(mean_entity_gap(2, 2, &events), 4.0);
    assert_eq!(mean_entity_gap(2, 2, &events[..1]), 1.0);
}

#[test]
fn static_samples_leave_out_the_edge() {
    let edges = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2)];
    let source = StaticSamples::new(3, 3, &edges, 2, 7);
    let s = source.sample(1, 0).unwrap();
    assert!(s.user_history.valid().iter().all(|e| e.counterpart == 1));
    assert!(s.item_history.valid().iter().all(|e| e.counterpart == 1));
    // (2, 2) has no other neighbors on either side.
    assert!(source.sample(1, 4).is_none());
}
