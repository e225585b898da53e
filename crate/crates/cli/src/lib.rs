//! Command-line driver: ingestion, temporal training and replay evaluation,
//! prediction, hyperparameter sweeps and the static link-prediction pipeline.
//!
//! Every command takes an optional `--config file.toml` plus any number of
//! `--key value` overrides; see [`config::KEY_DOCS`] for the keys.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "deepred", version, about = "Train and evaluate temporal interaction embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a CSV log, write the binary cache and print corpus statistics.
    Ingest(RunArgs),
    /// Train a temporal model; writes metrics.jsonl and checkpoints.
    Train(RunArgs),
    /// Replay-evaluate a checkpoint on the val or test split.
    Evaluate(RunArgs),
    /// Print the top-ranked items for one user at one time.
    Predict(RunArgs),
    /// Train and evaluate once per value of `sweep_key`.
    Sweep(RunArgs),
    /// Train a static-mode model on a random edge split.
    StaticTrain(RunArgs),
    /// Average precision of a static checkpoint on held-out edges.
    StaticEval(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file of `key = value` lines.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Configuration overrides, e.g. `--k 3 --learning_rate 0.01`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Predict(_) => "predict",
            Command::Sweep(_) => "sweep",
            Command::StaticTrain(_) => "static-train",
            Command::StaticEval(_) => "static-eval",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Ingest(a)
            | Command::Train(a)
            | Command::Evaluate(a)
            | Command::Predict(a)
            | Command::Sweep(a)
            | Command::StaticTrain(a)
            | Command::StaticEval(a) => a,
        }
    }
}

/// The clap command with the configuration key list attached to every help page.
pub fn command() -> clap::Command {
    let keys = config::keys_help();
    let mut cmd = Cli::command().after_help(keys.clone());
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    for name in names {
        let keys = keys.clone();
        cmd = cmd.mut_subcommand(name, move |c| c.after_help(keys));
    }
    cmd
}

/// What the binary should do after parsing.
pub enum Parsed {
    Run(Cli),
    /// Help or version text to print before exiting successfully.
    Print(String),
}

pub fn parse<I, T>(args: I) -> Result<Parsed>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut cmd = command();
    let matches = match cmd.try_get_matches_from_mut(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    Ok(Parsed::Print(e.render().to_string()))
                }
                _ => Err(CliError::Usage(first_line(&e.render().to_string()))),
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(first_line(&e.to_string())))?;
    // `--help` after an override lands in the override list.
    if cli.command.args().overrides.iter().any(|a| a == "--help" || a == "-h") {
        let sub = cmd.find_subcommand_mut(cli.command.name()).expect("subcommand exists");
        return Ok(Parsed::Print(sub.render_long_help().to_string()));
    }
    Ok(Parsed::Run(cli))
}

fn first_line(text: &str) -> String {
    text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments").trim().to_string()
}

/// Resolves the configuration for `cli` and runs the command.
pub fn run(cli: &Cli, env_seed: Option<&str>) -> Result<()> {
    let args = cli.command.args();
    let mut file = args.config.clone();
    let mut overrides = Vec::new();
    for (key, value) in config::parse_overrides(&args.overrides)? {
        if key == "config" {
            file = Some(PathBuf::from(value));
        } else {
            overrides.push((key, value));
        }
    }
    let cfg = config::resolve(file.as_deref(), env_seed, &overrides)?;
    match cli.command {
        Command::Ingest(_) => commands::ingest(&cfg).map(drop),
        Command::Train(_) => commands::train(&cfg).map(drop),
        Command::Evaluate(_) => commands::evaluate(&cfg).map(drop),
        Command::Predict(_) => commands::predict(&cfg).map(drop),
        Command::Sweep(_) => commands::sweep(&cfg).map(drop),
        Command::StaticTrain(_) => commands::static_train(&cfg).map(drop),
        Command::StaticEval(_) => commands::static_eval(&cfg).map(drop),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(args: &[&str]) -> Result<Parsed> {
        parse(std::iter::once("deepred").chain(args.iter().copied()))
    }

    #[test]
    fn overrides_follow_the_subcommand() {
        let Parsed::Run(cli) = parsed(&["train", "--config", "a.toml", "--k", "3"]).ok().unwrap() else {
            panic!("expected a command")
        };
        assert_eq!(cli.command.name(), "train");
        assert_eq!(cli.command.args().config, Some(PathBuf::from("a.toml")));
        assert_eq!(cli.command.args().overrides, ["--k", "3"]);
    }

    #[test]
    fn help_anywhere_prints_keys() {
        for args in [&["train", "--help"][..], &["sweep", "--k", "3", "--help"], &["--help"]] {
            match parsed(args) {
                Ok(Parsed::Print(text)) => assert!(text.contains("learning_rate"), "{args:?}"),
                _ => panic!("{args:?} should print help"),
            }
        }
    }

    #[test]
    fn unknown_command_is_a_one_line_usage_error() {
        let Err(e) = parsed(&["fly"]) else { panic!("expected an error") };
        assert_eq!(e.kind(), "usage");
        assert!(!e.to_string().contains('\n'));
    }
}
