use std::process::ExitCode;

use clap::Parser;

use sentidrop::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("{}", serde_json::json!({"code": "ConfigError", "module": "cli", "message": e.to_string()}));
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.report()).expect("error report serializes"));
            ExitCode::FAILURE
        }
    }
}
