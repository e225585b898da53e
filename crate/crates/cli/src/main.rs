use deepred_cli::config::SEED_ENV;
use deepred_cli::{parse, run, Parsed};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = parse(std::env::args_os()).and_then(|parsed| match parsed {
        Parsed::Print(text) => {
            print!("{text}");
            Ok(())
        }
        Parsed::Run(cli) => run(&cli, std::env::var(SEED_ENV).ok().as_deref()),
    });
    if let Err(e) = result {
        eprintln!("{}", e.to_line());
        std::process::exit(e.exit_code());
    }
}
