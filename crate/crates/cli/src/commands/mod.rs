//! Command implementations. Each returns after writing its outputs; the
//! binary maps errors to a single-line report.

mod ingest;
mod link;
mod temporal;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use deepred_core::eventlog::{parse_event_log, read_cache, EventLog};
use deepred_core::model::{decode_checkpoint, encode_checkpoint, Model};
use deepred_core::synth::{PlantedContext, TwoBlock};
use deepred_core::trainer::{train as run_epochs, AdamState, SampleSource, TrainOutcome, Validation};

pub use ingest::ingest;
pub use link::{static_eval, static_train};
pub use temporal::{evaluate, predict, sweep, train, SweepRow};

use crate::config::{RunConfig, Synthetic};
use crate::error::{CliError, Result};

/// Loads the log named by the configuration: a generator, an existing
/// cache, or the CSV file, in that order.
pub fn load_log(cfg: &RunConfig) -> Result<EventLog> {
    match cfg.synthetic {
        Synthetic::Planted => {
            let generator = PlantedContext { events: cfg.synthetic_events, ..Default::default() };
            return Ok(generator.generate(cfg.seed)?);
        }
        Synthetic::TwoBlock => return Ok(TwoBlock::default().generate(cfg.seed)?),
        Synthetic::None => {}
    }
    if !cfg.cache.is_empty() && Path::new(&cfg.cache).exists() {
        let file = File::open(&cfg.cache).map_err(|e| CliError::io(&cfg.cache, e))?;
        return Ok(read_cache(BufReader::new(file))?);
    }
    if cfg.data.is_empty() {
        return Err(CliError::Config("no input: set `data`, an existing `cache`, or `synthetic`".into()));
    }
    parse_csv(cfg)
}

fn parse_csv(cfg: &RunConfig) -> Result<EventLog> {
    let file = File::open(&cfg.data).map_err(|e| CliError::io(&cfg.data, e))?;
    Ok(parse_event_log(BufReader::new(file), &cfg.format())?)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, Option<AdamState>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(decode_checkpoint(&bytes)?)
}

pub fn save_checkpoint(path: &Path, model: &Model, optimizer: Option<&AdamState>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, optimizer)).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(out).and_then(|()| out.flush()).map_err(|e| CliError::io(path, e))
}

fn user_label(log: &EventLog, user: usize) -> String {
    log.user_name(user).map_or_else(|| user.to_string(), str::to_string)
}

fn item_label(log: &EventLog, item: usize) -> String {
    log.item_name(item).map_or_else(|| item.to_string(), str::to_string)
}

/// Appends one JSON object per line to a metrics file.
struct JsonLines {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLines {
    fn create(path: PathBuf) -> Result<Self> {
        let out = create(&path)?;
        Ok(JsonLines { path, out })
    }

    fn push(&mut self, value: &impl serde::Serialize) -> Result<()> {
        serde_json::to_writer(&mut self.out, value).map_err(|e| CliError::io(&self.path, e.into()))?;
        writeln!(self.out).and_then(|()| self.out.flush()).map_err(|e| CliError::io(&self.path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

/// Trains `model`, appending one JSON line per epoch to `<dir>/metrics.jsonl`
/// and writing scheduled `epoch-<n>.ckpt` files (with optimizer state), then
/// `best.ckpt` and `last.ckpt`. On divergence the last good parameters are
/// saved as `last-good.ckpt` before the error is returned.
fn fit<S, V>(model: Model, source: &S, cfg: &RunConfig, dir: &Path, progress: bool, validate: V) -> Result<TrainOutcome>
where
    S: SampleSource,
    V: FnMut(&Model) -> deepred_core::Result<Option<Validation>>,
{
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut metrics = JsonLines::create(dir.join("metrics.jsonl"))?;
    let mut failure = None;
    let result = run_epochs(model, source, cfg.train_config(), validate, |report| {
        let mut record = || -> Result<()> {
            metrics.push(report.record)?;
            if report.checkpoint_due {
                let path = dir.join(format!("epoch-{}.ckpt", report.record.epoch));
                save_checkpoint(&path, report.model, Some(report.optimizer))?;
            }
            Ok(())
        };
        if let Err(e) = record() {
            let message = e.to_string();
            failure = Some(e);
            return Err(deepred_core::Error::Io(std::io::Error::other(message)));
        }
        let line = serde_json::to_string(report.record).unwrap_or_default();
        if progress {
            println!("{line}");
        } else {
            log::info!("{line}");
        }
        Ok(())
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let outcome = match result {
        Ok(outcome) => outcome,
        Err(deepred_core::Error::Diverged { epoch, last_good }) => {
            save_checkpoint(&dir.join("last-good.ckpt"), &last_good, None)?;
            return Err(deepred_core::Error::Diverged { epoch, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(&dir.join("best.ckpt"), &outcome.best, None)?;
    save_checkpoint(&dir.join("last.ckpt"), &outcome.model, Some(&outcome.optimizer))?;
    Ok(outcome)
}
