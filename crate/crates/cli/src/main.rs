use std::process::ExitCode;

use clap::Parser;
use simloop_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = run(cli, &mut std::io::stdout().lock());
    ExitCode::from(code as u8)
}
