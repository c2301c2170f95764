use clap::error::ErrorKind;
use clap::Parser;
use platoon_cli::{run, Cli, EXIT_USAGE};
use serde_json::json;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string().trim(), "exit_code": EXIT_USAGE }));
            std::process::exit(EXIT_USAGE);
        }
    };
    std::process::exit(run(cli));
}
