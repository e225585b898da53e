mod common;

use deepred_core::model::{EncoderMode, Model, ModelConfig};
use deepred_core::trainer::{sample_losses, SampleSource, StaticSamples, TemporalSamples, TrainConfig, Trainer};

#[test]
fn full_loss_matches_finite_differences_in_every_variant() {
    for (j, cfg) in common::all_variants(8, 3).into_iter().enumerate() {
        let report = common::full_loss_gradcheck(cfg.clone(), 10 + j as u64);
        assert!(report.max_relative_error < 1e-4, "{cfg:?}: {report:?}");
    }
}

#[test]
fn static_loss_matches_finite_differences() {
    let cfg = ModelConfig { d: 8, hidden: 8, k: 3, mode: EncoderMode::Static, ..Default::default() };
    let report = common::full_loss_gradcheck(cfg, 3);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn joint_batch_gradient_equals_mean_of_per_sample_gradients() {
    let log = common::random_log(30, 20, 600, 4);
    let source = TemporalSamples::new(&log, 0..600, 4);
    let samples: Vec<_> = (0..source.len()).filter_map(|j| source.sample(1, j)).skip(100).take(32).collect();
    assert_eq!(samples.len(), 32);
    for cfg in common::all_variants(6, 4) {
        let mut model = Model::new(cfg, 30, 20, 8).unwrap();
        common::jitter(&mut model, 8, 0.2);
        let gap = common::batching_gap(&model, &samples, 0.01);
        assert!(gap < 1e-8, "{gap}");
    }
}

#[test]
fn per_sample_losses_do_not_depend_on_order() {
    let log = common::random_log(30, 20, 600, 5);
    let source = TemporalSamples::new(&log, 0..600, 4);
    let model = Model::new(ModelConfig { d: 6, hidden: 6, k: 4, ..Default::default() }, 30, 20, 1).unwrap();
    let trainer = Trainer::new(model.clone(), &source, TrainConfig::default()).unwrap();
    let in_order: Vec<_> = (0..source.len()).filter_map(|j| source.sample(1, j)).collect();
    let shuffled: Vec<_> = trainer.epoch_order(1).into_iter().filter_map(|j| source.sample(1, j)).collect();
    let mut a = sample_losses(&model, &in_order, 0.01).unwrap();
    let mut b = sample_losses(&model, &shuffled, 0.01).unwrap();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    assert_eq!(a, b);
}

#[test]
fn static_samples_are_reproducible_per_epoch() {
    let edges: Vec<_> = (0..20).flat_map(|u| (0..5).map(move |i| (u, (u + i) % 10))).collect();
    let source = StaticSamples::new(20, 10, &edges, 3, 2);
    assert_eq!(source.sample(1, 7), source.sample(1, 7));
    let differs = (0..edges.len()).any(|j| source.sample(1, j) != source.sample(2, j));
    assert!(differs);
}
