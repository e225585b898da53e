use deepred_core::eventlog::temporal_split;
use deepred_core::evaluator::{average_precision, replay_evaluate, RankMode, ReplayOptions};
use deepred_core::model::{Model, ModelConfig};
use deepred_core::rng;
use deepred_core::synth::PlantedContext;
use rand::Rng as _;

/// Expected MRR when the ground truth's rank is uniform on 1..=n.
fn harmonic_mrr(n: usize) -> f64 {
    (1..=n).map(|r| 1.0 / r as f64).sum::<f64>() / n as f64
}

#[test]
fn untrained_model_ranks_like_chance() {
    let generator = PlantedContext { popularity_exponent: 0.0, ..Default::default() };
    let log = generator.generate(11).unwrap();
    let split = temporal_split(log.len(), (0.8, 0.1, 0.1)).unwrap();
    assert!(split.test.len() >= 2_000);
    let model = Model::new(ModelConfig { d: 16, hidden: 16, k: 5, ..Default::default() }, 200, 100, 5).unwrap();
    let out = replay_evaluate(&model, &log, split.test, ReplayOptions { mode: RankMode::Exact, refresh: true }).unwrap();
    let oracle = harmonic_mrr(100);
    assert!((oracle - 0.0519).abs() < 1e-4);
    assert!((out.mrr - oracle).abs() < 0.01, "{} vs {oracle}", out.mrr);
}

#[test]
fn random_scores_give_half_average_precision() {
    let mut r = rng::rng_for(3, "random-ap");
    let scored: Vec<(f64, bool)> = (0..2_000).map(|j| (r.random::<f64>(), j % 2 == 0)).collect();
    let ap = average_precision(&scored).unwrap();
    assert!((ap - 0.5).abs() < 0.05, "{ap}");
}

#[test]
fn separated_scores_give_perfect_precision() {
    let scored: Vec<(f64, bool)> = (0..100).map(|j| (j as f64, j >= 50)).collect();
    assert_eq!(average_precision(&scored).unwrap(), 1.0);
}
