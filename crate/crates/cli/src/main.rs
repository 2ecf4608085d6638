mod commands;
mod config;

use clap::error::ErrorKind;
use clap::Parser;
use config::{Command, RunConfig, Usage};
use serde_json::json;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

const EXIT_FAILED: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;

fn load(cli: RunConfig) -> Result<RunConfig, Usage> {
    let cfg = match &cli.command {
        Command::Run(r) => {
            let text = std::fs::read_to_string(&r.config)
                .map_err(|e| Usage(format!("reading {}: {e}", r.config.display())))?;
            RunConfig::from_json(&text)?
        }
        _ => cli,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn threads(cfg: &RunConfig) -> Result<Option<usize>, Usage> {
    match std::env::var("HR_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Usage(format!("HR_THREADS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(cfg.threads),
    }
}

fn write_outputs(cfg: &RunConfig, out: &commands::Outcome, pool: usize, elapsed: f64) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    let name = cfg.command.name();
    let doc = json!({ "command": name, "config": cfg, "result": out.json });
    std::fs::write(cfg.out.join(format!("{name}.json")), serde_json::to_vec_pretty(&doc)?)?;
    for (file, bytes) in &out.tables {
        std::fs::write(cfg.out.join(file), bytes)?;
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "finished_unix": started,
        "elapsed_seconds": elapsed,
        "threads": pool,
    });
    std::fs::write(cfg.out.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match RunConfig::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let cfg = match load(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let n = match threads(&cfg) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = n {
        builder = builder.num_threads(n);
    }
    if let Err(e) = builder.build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    let t0 = Instant::now();
    let outcome = match commands::dispatch(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<Usage>().is_some() { EXIT_USAGE } else { EXIT_ERROR };
            return ExitCode::from(code);
        }
    };
    if let Err(e) = write_outputs(&cfg, &outcome, rayon::current_num_threads(), t0.elapsed().as_secs_f64()) {
        eprintln!("error: writing artifacts to {}: {e:#}", cfg.out.display());
        return ExitCode::from(EXIT_ERROR);
    }
    let status = if outcome.pass { "pass" } else { "FAIL" };
    println!("{}: {status} ({})", cfg.command.name(), cfg.out.join(format!("{}.json", cfg.command.name())).display());
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}
