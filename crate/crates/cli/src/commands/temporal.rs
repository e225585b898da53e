use std::path::Path;

use deepred_core::eventlog::{temporal_split, EventLog, TemporalSplit};
use deepred_core::evaluator::{predict_topk, replay_evaluate, RankMode, RankingOutcome};
use deepred_core::model::{EncoderMode, Model};
use deepred_core::trainer::{mean_entity_gap, TemporalSamples, TrainOutcome, Validation};
use serde::Serialize;

use super::{create, csv_error, fit, item_label, load_checkpoint, load_log, user_label, write_json};
use crate::config::{RunConfig, SplitName};
use crate::error::{CliError, Result};

/// Keys accepted by `sweep`.
pub const SWEEP_KEYS: &[&str] = &["k", "d", "train_fraction"];

/// Contents of `results-<split>.json`.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub split: &'static str,
    pub mode: RankMode,
    pub mrr: f64,
    pub recall_at_1: f64,
    pub recall_at_10: f64,
    pub num_events: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub mrr: f64,
    pub recall_at_10: f64,
}

fn require_temporal(mode: EncoderMode, what: &str) -> Result<()> {
    if mode == EncoderMode::Static {
        return Err(CliError::Config(format!("{what} works on temporal models; use the static-train/static-eval commands")));
    }
    Ok(())
}

fn fit_temporal(cfg: &RunConfig, log: &EventLog, dir: &Path, progress: bool) -> Result<(TrainOutcome, TemporalSplit)> {
    require_temporal(cfg.mode, "train")?;
    let split = temporal_split(log.len(), cfg.fractions())?;
    let delta_scale = if cfg.delta_scale > 0.0 {
        cfg.delta_scale
    } else {
        mean_entity_gap(log.num_users(), log.num_items(), &log.events()[split.train.clone()])
    };
    let model = Model::new(cfg.model_config(delta_scale), log.num_users(), log.num_items(), cfg.seed)?;
    let source = TemporalSamples::new(log, split.train.clone(), cfg.k);
    let options = cfg.replay_options();
    let val = split.val.clone();
    let outcome = fit(model, &source, cfg, dir, progress, |m| {
        let r = replay_evaluate(m, log, val.clone(), options)?;
        Ok(Some(Validation { score: r.mrr, mrr: Some(r.mrr), recall_at_10: Some(r.recall_at_10), ap: None }))
    })?;
    Ok((outcome, split))
}

/// Trains a temporal model and writes metrics and checkpoints to `output_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let log = load_log(cfg)?;
    cfg.write_resolved("train")?;
    let (outcome, _) = fit_temporal(cfg, &log, &cfg.output_dir(), true)?;
    if let Some(epoch) = outcome.best_epoch {
        println!("best epoch {epoch}; checkpoint {}", cfg.output_dir().join("best.ckpt").display());
    }
    Ok(outcome)
}

fn result_of(split: SplitName, mode: RankMode, outcome: &RankingOutcome) -> EvalResult {
    EvalResult {
        split: split.as_str(),
        mode,
        mrr: outcome.mrr,
        recall_at_1: outcome.recall_at_1,
        recall_at_10: outcome.recall_at_10,
        num_events: outcome.num_events(),
        wall_seconds: outcome.wall_seconds,
    }
}

fn write_ranks(path: &Path, log: &EventLog, outcome: &RankingOutcome) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(path)?);
    out.write_record(["event_index", "user", "item", "time", "rank"]).map_err(|e| csv_error(path, e))?;
    for (j, rank) in outcome.ranks.iter().enumerate() {
        let index = outcome.first_event + j;
        let e = log.events()[index];
        out.write_record([
            index.to_string(),
            user_label(log, e.user),
            item_label(log, e.item),
            e.time.to_string(),
            rank.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

/// Replays the chosen split with a trained checkpoint and writes
/// `results-<split>.json` (and `ranks-<split>.csv` when asked).
pub fn evaluate(cfg: &RunConfig) -> Result<EvalResult> {
    let (model, _) = load_checkpoint(&cfg.checkpoint_path())?;
    require_temporal(model.config().mode, "evaluate")?;
    let log = load_log(cfg)?;
    let split = temporal_split(log.len(), cfg.fractions())?;
    let range = match cfg.split {
        SplitName::Val => split.val,
        SplitName::Test => split.test,
    };
    let outcome = replay_evaluate(&model, &log, range, cfg.replay_options())?;
    let result = result_of(cfg.split, cfg.rank_mode, &outcome);
    let dir = cfg.output_dir();
    cfg.write_resolved("evaluate")?;
    write_json(&dir.join(format!("results-{}.json", cfg.split.as_str())), &result)?;
    if cfg.dump_ranks {
        write_ranks(&dir.join(format!("ranks-{}.csv", cfg.split.as_str())), &log, &outcome)?;
    }
    println!("{}", serde_json::to_string(&result).unwrap_or_default());
    Ok(result)
}

/// Prints the `top_k` nearest items for `user` at `time`, given every
/// logged event strictly before `time`.
pub fn predict(cfg: &RunConfig) -> Result<Vec<(String, f64)>> {
    if cfg.user.is_empty() {
        return Err(CliError::Config("predict needs `user`".into()));
    }
    let (model, _) = load_checkpoint(&cfg.checkpoint_path())?;
    require_temporal(model.config().mode, "predict")?;
    let log = load_log(cfg)?;
    let user = log
        .user_index(&cfg.user)
        .or_else(|| if log.user_names().is_empty() { cfg.user.parse().ok() } else { None })
        .filter(|&u| u < log.num_users())
        .ok_or_else(|| CliError::Config(format!("unknown user `{}`", cfg.user)))?;
    let t = if cfg.time >= 0.0 { cfg.time } else { log.events().last().map_or(0.0, |e| e.time) + 1.0 };
    let prefix_end = log.events().partition_point(|e| e.time < t);
    let ranked = predict_topk(&model, &log, prefix_end, user, t, cfg.top_k, cfg.replay_options())?;
    cfg.write_resolved("predict")?;
    println!("rank,item,distance");
    let labelled: Vec<(String, f64)> = ranked.into_iter().map(|(item, d)| (item_label(&log, item), d)).collect();
    for (rank, (item, distance)) in labelled.iter().enumerate() {
        println!("{},{item},{distance}", rank + 1);
    }
    Ok(labelled)
}

/// The configuration with `key` set to `raw`. Sweeping `d` also sets
/// `hidden`; sweeping `train_fraction` gives the remainder to the test split.
fn sweep_point(base: &RunConfig, key: &str, raw: &str) -> Result<RunConfig> {
    let bad = || CliError::Config(format!("invalid value `{raw}` for sweep key `{key}`"));
    let mut cfg = base.clone();
    match key {
        "k" => cfg.k = raw.parse().map_err(|_| bad())?,
        "d" => {
            cfg.d = raw.parse().map_err(|_| bad())?;
            cfg.hidden = cfg.d;
        }
        "train_fraction" => {
            cfg.train_fraction = raw.parse().map_err(|_| bad())?;
            cfg.test_fraction = 1.0 - cfg.train_fraction - cfg.val_fraction;
        }
        _ => {
            return Err(CliError::Config(format!(
                "`{key}` is not sweepable; valid keys: {}",
                SWEEP_KEYS.join(", ")
            )))
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One full train and test evaluation per value of `sweep_key`, collected
/// in `sweep-<key>.csv`.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let key = cfg.sweep_key.as_str();
    if !SWEEP_KEYS.contains(&key) {
        return Err(CliError::Config(format!(
            "`{key}` is not sweepable; valid keys: {}",
            SWEEP_KEYS.join(", ")
        )));
    }
    let mut points: Vec<(String, RunConfig)> = Vec::new();
    for raw in cfg.sweep_values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let point = sweep_point(cfg, key, raw)?;
        if let Some((first, _)) = points.iter().find(|(_, p)| *p == point) {
            log::warn!("sweep value `{raw}` duplicates `{first}`; skipped");
            continue;
        }
        points.push((raw.to_string(), point));
    }
    if points.is_empty() {
        return Err(CliError::Config("sweep needs at least one value in `sweep_values`".into()));
    }
    let log = load_log(cfg)?;
    cfg.write_resolved("sweep")?;
    let mut rows = Vec::with_capacity(points.len());
    for (value, mut point) in points {
        let dir = cfg.output_dir().join(format!("sweep-{key}-{value}"));
        point.output_dir = dir.to_string_lossy().into_owned();
        point.sweep_key.clear();
        point.sweep_values.clear();
        point.write_resolved("train")?;
        let (outcome, split) = fit_temporal(&point, &log, &dir, false)?;
        let test = replay_evaluate(&outcome.best, &log, split.test, point.replay_options())?;
        log::info!("{key} = {value}: test MRR {:.4}, Recall@10 {:.4}", test.mrr, test.recall_at_10);
        rows.push(SweepRow { value, mrr: test.mrr, recall_at_10: test.recall_at_10 });
    }

    let path = cfg.output_dir().join(format!("sweep-{key}.csv"));
    let mut out = csv::Writer::from_writer(create(&path)?);
    out.write_record(["value", "mrr", "recall_at_10"]).map_err(|e| csv_error(&path, e))?;
    println!("value,mrr,recall_at_10");
    for row in &rows {
        let fields = [row.value.clone(), row.mrr.to_string(), row.recall_at_10.to_string()];
        out.write_record(&fields).map_err(|e| csv_error(&path, e))?;
        println!("{}", fields.join(","));
    }
    out.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points_adjust_related_keys() {
        let base = RunConfig::default();
        let d = sweep_point(&base, "d", "16").unwrap();
        assert_eq!((d.d, d.hidden), (16, 16));
        let f = sweep_point(&base, "train_fraction", "0.5").unwrap();
        assert!((f.test_fraction - 0.4).abs() < 1e-12);
        assert!(sweep_point(&base, "train_fraction", "0.95").is_err());
        assert!(sweep_point(&base, "k", "zero").is_err());
        let err = sweep_point(&base, "gamma", "1").unwrap_err().to_string();
        assert!(err.contains("k, d, train_fraction"), "{err}");
    }
}
