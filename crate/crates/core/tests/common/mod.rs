#![allow(dead_code)]

use deepred_core::eventlog::{Entity, Event, EventLog, History, HistoryEntry};
use deepred_core::model::{DeltaTransform, Model, ModelConfig, PoolKind};
use deepred_core::rng;
use rand::Rng as _;

/// A random log with integer timestamps (ties allowed), so shifted copies
/// reproduce every delta exactly.
pub fn random_log(users: usize, items: usize, events: usize, seed: u64) -> EventLog {
    let mut r = rng::rng_for(seed, "test-log");
    let mut t = 0.0;
    let events = (0..events)
        .map(|_| {
            t += r.random_range(0..3) as f64;
            Event { user: r.random_range(0..users), item: r.random_range(0..items), time: t }
        })
        .collect();
    EventLog::from_events(users, items, events).unwrap()
}

/// Oracle: scan the whole log for the entity's last `k` events strictly before `t`.
pub fn brute_history(events: &[Event], entity: Entity, t: f64, k: usize) -> History {
    let matches: Vec<HistoryEntry> = events
        .iter()
        .filter(|e| e.time < t)
        .filter_map(|e| match entity {
            Entity::User(u) if e.user == u => Some(HistoryEntry { counterpart: e.item, delta: t - e.time }),
            Entity::Item(i) if e.item == i => Some(HistoryEntry { counterpart: e.user, delta: t - e.time }),
            _ => None,
        })
        .collect();
    let start = matches.len().saturating_sub(k);
    History::from_recent(k, t, &matches[start..])
}

/// A history of `valid` random entries (oldest first) padded to `k`.
pub fn random_history(r: &mut impl rand::Rng, k: usize, valid: usize, counterparts: usize) -> History {
    let mut delta = 0.0;
    let mut entries: Vec<HistoryEntry> = (0..valid)
        .map(|_| {
            delta += r.random_range(0.1..3.0);
            HistoryEntry { counterpart: r.random_range(0..counterparts), delta }
        })
        .collect();
    entries.reverse();
    History::from_recent(k, 100.0, &entries)
}

/// Every delta transform x pooling x alignment-matrix combination.
pub fn all_variants(d: usize, k: usize) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for delta_transform in [DeltaTransform::Raw, DeltaTransform::LogDecay] {
        for pooling in [PoolKind::Max, PoolKind::Mean] {
            for use_theta in [false, true] {
                out.push(ModelConfig { d, hidden: d, k, delta_transform, pooling, use_theta, delta_scale: 2.0, ..Default::default() });
            }
        }
    }
    out
}

/// Perturbs every parameter (alignment matrix included) away from its
/// initial structure, keeping the padding row at zero.
pub fn jitter(model: &mut Model, seed: u64, scale: f64) {
    let mut r = rng::rng_for(seed, "jitter");
    let padding = model.padding_row();
    let table = model.table_id();
    let ids: Vec<_> = model.params().iter().map(|(id, _)| id).collect();
    for id in ids {
        let p = model.params_mut().get_mut(id);
        for v in p.value.data_mut() {
            *v += r.random_range(-scale..scale);
        }
        if id == table {
            p.value.row_mut(padding).fill(0.0);
        }
    }
}

/// Finite-difference check of the full per-sample loss for one configuration:
/// a partially padded user history and a full item history.
pub fn full_loss_gradcheck(cfg: ModelConfig, seed: u64) -> deepred_core::numerics::GradCheckReport {
    use deepred_core::numerics::gradient_check;
    use deepred_core::trainer::pair_loss;
    let (users, items) = (4, 5);
    let k = cfg.k;
    let mut model = Model::new(cfg, users, items, seed).unwrap();
    jitter(&mut model, seed, 0.3);
    let mut r = rng::rng_for(seed, "gradcheck-histories");
    let uh = random_history(&mut r, k, k - 1, items);
    let ih = random_history(&mut r, k, k, users);
    let probe = model.clone();
    gradient_check(model.params_mut(), 1e-5, |tape| {
        let out = probe.forward(tape, &uh, &ih)?;
        pair_loss(tape, out.user, out.item, 0.01)
    })
    .unwrap()
}

/// Largest per-coordinate relative gap between the joint batch gradient and
/// the mean of independent per-sample gradients.
pub fn batching_gap(model: &Model, samples: &[deepred_core::trainer::TrainSample], gamma: f64) -> f64 {
    use deepred_core::trainer::{batch_gradients_joint, sample_gradients};
    let (_, joint) = batch_gradients_joint(model, samples, gamma).unwrap();
    let joint = joint.flatten(model.params());
    let mut mean = vec![0.0; joint.len()];
    for s in samples {
        let (_, g) = sample_gradients(model, s, gamma).unwrap();
        for (m, v) in mean.iter_mut().zip(g.flatten(model.params())) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= samples.len() as f64);
    joint
        .iter()
        .zip(&mean)
        .map(|(a, b)| {
            let scale = a.abs().max(b.abs());
            if scale == 0.0 { 0.0 } else { (a - b).abs() / scale }
        })
        .fold(0.0, f64::max)
}
