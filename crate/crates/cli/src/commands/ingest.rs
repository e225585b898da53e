use std::io::Write;

use deepred_core::eventlog::{write_cache, LogSummary};

use super::{create, parse_csv};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Parses the CSV, writes the binary cache when `cache` is set, and prints
/// corpus statistics.
pub fn ingest(cfg: &RunConfig) -> Result<LogSummary> {
    if cfg.data.is_empty() {
        return Err(CliError::Config("ingest needs `data`".into()));
    }
    let log = parse_csv(cfg)?;
    if !cfg.cache.is_empty() {
        let path = std::path::Path::new(&cfg.cache);
        let mut out = create(path)?;
        write_cache(&log, &mut out)?;
        out.flush().map_err(|e| CliError::io(path, e))?;
    }
    cfg.write_resolved("ingest")?;
    let s = log.summary();
    println!("users {}", s.users);
    println!("items {}", s.items);
    println!("events {}", s.events);
    println!("time_span {} {} {}", s.first_time, s.last_time, s.last_time - s.first_time);
    println!("repeat_rate {:.4}", s.repeat_rate);
    if s.out_of_order_rows > 0 {
        println!("out_of_order_rows {}", s.out_of_order_rows);
    }
    Ok(s)
}
