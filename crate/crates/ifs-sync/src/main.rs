//! `ifs-sync`: run, validate, or describe experiment configurations.
//!
//! Exit codes: 0 success, 2 configuration error, 3 computation error.

use ifs_sync::config::{config_schema, parse_config};
use ifs_sync::run::{canonical_json, run_experiment};
use std::process::ExitCode;

const USAGE: &str = "usage: ifs-sync <command>

commands:
  run <config.json>       execute the experiment described by the config
  validate <config.json>  check a config without running anything
  schema                  print the JSON schema of the config format

environment:
  IFS_SYNC_THREADS        cap the worker count (default: available parallelism)";

fn configure_threads() {
    if let Ok(text) = std::env::var("IFS_SYNC_THREADS") {
        if let Ok(n) = text.trim().parse::<usize>() {
            if n > 0 {
                // ignore failures: the pool may already be initialized in-process
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn read_config(path: &str) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {path}: {e}");
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(String::as_str) {
        Some("run") if args.len() == 2 => {
            configure_threads();
            let text = match read_config(&args[1]) {
                Ok(t) => t,
                Err(code) => return code,
            };
            let parsed = match parse_config(&text) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_experiment(&parsed) {
                Ok(manifest) => {
                    for f in &manifest.emitted_files {
                        println!("wrote {f}");
                    }
                    println!("wrote {}.manifest.json", parsed.config.output);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("computation error: {e}");
                    ExitCode::from(3)
                }
            }
        }
        Some("validate") if args.len() == 2 => {
            let text = match read_config(&args[1]) {
                Ok(t) => t,
                Err(code) => return code,
            };
            match parse_config(&text) {
                Ok(parsed) => {
                    println!(
                        "ok: {} experiment on the {:?}",
                        parsed.config.experiment.name(),
                        parsed.config.manifold()
                    );
                    for d in &parsed.defaults_applied {
                        println!("default applied: {d}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("config error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Some("schema") if args.len() == 1 => {
            print!("{}", canonical_json(&config_schema()));
            ExitCode::SUCCESS
        }
        _ => {
            eprintln!("{USAGE}");
            ExitCode::from(2)
        }
    }
}
