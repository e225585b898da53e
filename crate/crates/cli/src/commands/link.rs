use deepred_core::eventlog::{random_edge_split, EdgeSplit, EventLog};
use deepred_core::evaluator::static_link_prediction;
use deepred_core::model::{EncoderMode, Model};
use deepred_core::rng::derive_seed;
use deepred_core::trainer::{StaticSamples, TrainOutcome, Validation};
use serde::Serialize;

use super::{fit, load_checkpoint, load_log, write_json};
use crate::config::{RunConfig, SplitName};
use crate::error::{CliError, Result};

/// Contents of `static-results-<split>.json`.
#[derive(Debug, Clone, Serialize)]
pub struct StaticResult {
    pub split: &'static str,
    pub mode: &'static str,
    pub average_precision: f64,
    pub positives: usize,
    pub negatives: usize,
    pub wall_seconds: f64,
}

fn as_static(cfg: &RunConfig) -> Result<RunConfig> {
    let mut cfg = cfg.clone();
    cfg.mode = EncoderMode::Static;
    cfg.validate()?;
    Ok(cfg)
}

/// Negative-sampling seed for a split; validation during training and
/// `static-eval --split val` draw the same negatives.
fn negative_seed(cfg: &RunConfig, split: SplitName) -> u64 {
    derive_seed(cfg.seed, &format!("{}-negatives", split.as_str()))
}

fn edge_split(cfg: &RunConfig, log: &EventLog) -> Result<EdgeSplit> {
    Ok(random_edge_split(log, cfg.fractions(), cfg.seed)?)
}

/// Trains a static-mode model on a random edge split, validating by
/// average precision.
pub fn static_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let cfg = as_static(cfg)?;
    let log = load_log(&cfg)?;
    let split = edge_split(&cfg, &log)?;
    cfg.write_resolved("static-train")?;
    let model = Model::new(cfg.model_config(1.0), log.num_users(), log.num_items(), cfg.seed)?;
    let source = StaticSamples::new(log.num_users(), log.num_items(), &split.train, cfg.k, cfg.seed);
    let seed = negative_seed(&cfg, SplitName::Val);
    let outcome = fit(model, &source, &cfg, &cfg.output_dir(), true, |m| {
        let r = static_link_prediction(m, &split, &split.val, seed)?;
        Ok(Some(Validation { score: r.average_precision, ap: Some(r.average_precision), ..Default::default() }))
    })?;
    if let Some(epoch) = outcome.best_epoch {
        println!("best epoch {epoch}; checkpoint {}", cfg.output_dir().join("best.ckpt").display());
    }
    Ok(outcome)
}

/// Average precision of a static checkpoint on the chosen edge partition
/// against an equal number of sampled absent pairs.
pub fn static_eval(cfg: &RunConfig) -> Result<StaticResult> {
    let cfg = as_static(cfg)?;
    let (model, _) = load_checkpoint(&cfg.checkpoint_path())?;
    if model.config().mode != EncoderMode::Static {
        return Err(CliError::Config("static-eval needs a checkpoint written by static-train".into()));
    }
    let log = load_log(&cfg)?;
    let split = edge_split(&cfg, &log)?;
    let positives = match cfg.split {
        SplitName::Val => &split.val,
        SplitName::Test => &split.test,
    };
    let start = std::time::Instant::now();
    let r = static_link_prediction(&model, &split, positives, negative_seed(&cfg, cfg.split))?;
    let result = StaticResult {
        split: cfg.split.as_str(),
        mode: "static",
        average_precision: r.average_precision,
        positives: r.positives,
        negatives: r.negatives,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    cfg.write_resolved("static-eval")?;
    write_json(&cfg.output_dir().join(format!("static-results-{}.json", cfg.split.as_str())), &result)?;
    println!("{}", serde_json::to_string(&result).unwrap_or_default());
    Ok(result)
}
