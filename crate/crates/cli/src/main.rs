use clap::Parser;
use mmm_cli::commands::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(exit_code(&err));
    }
}
