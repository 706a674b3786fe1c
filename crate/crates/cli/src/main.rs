use std::process::ExitCode;

use clap::Parser;
use persuasion_cli::{error_record, run, Args};

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = anyhow::anyhow!(e.to_string().trim().to_string());
            eprintln!("{}", error_record(&err));
            return ExitCode::from(2);
        }
    };
    match run(&args, |line| eprintln!("{line}")) {
        Ok(mut rec) => {
            rec["status"] = "ok".into();
            println!("{rec}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
