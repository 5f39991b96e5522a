use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use hclab_cli::config::{self, Overrides, ReportFormat};
use hclab_cli::{report, scenarios};
use serde_json::json;

const CONFIG_FAILED: u8 = 2;
const TOLERANCE_FAILED: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "hclab", version, about = "Desk-scale scenarios for higher-order abstract Cauchy problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the built-in scenarios.
    List {
        /// Print a JSON array instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario and write report.json, meta.json and curves/*.csv.
    Run {
        #[arg(long)]
        scenario: Option<String>,
        /// JSON file overriding the scenario defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "hclab-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        grid_n: Option<usize>,
        #[arg(long, value_enum)]
        report_format: Option<ReportFormat>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List { json } => {
            print!("{}", if json { hclab_cli::list_json() } else { hclab_cli::list_text() });
            ExitCode::SUCCESS
        }
        Command::Run { scenario, config, out, seed, t_max, dt, grid_n, report_format } => {
            let flags = Overrides { scenario, seed, t_max, dt, grid_n, report_format };
            run(config, out, flags)
        }
    }
}

fn config_failure(path: &str, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {path}: {message}");
    ExitCode::from(CONFIG_FAILED)
}

fn init_threads() -> Result<Option<usize>, ExitCode> {
    let Ok(raw) = std::env::var("HC_LAB_THREADS") else { return Ok(None) };
    let threads = match raw.trim().parse::<usize>() {
        Ok(t) if t > 0 => t,
        _ => return Err(config_failure("HC_LAB_THREADS", format!("expected a positive integer, got `{raw}`"))),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| config_failure("HC_LAB_THREADS", e))?;
    Ok(Some(threads))
}

fn run(config_path: Option<PathBuf>, out: PathBuf, flags: Overrides) -> ExitCode {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let threads = match init_threads() {
        Ok(t) => t,
        Err(code) => return code,
    };
    let text = match &config_path {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => return config_failure("--config", format!("{}: {e}", p.display())),
        },
        None => None,
    };
    let cfg = match config::resolve(text.as_deref(), &flags) {
        Ok(cfg) => cfg,
        Err(errors) => {
            for e in &errors {
                eprintln!("config error: {e}");
            }
            return ExitCode::from(CONFIG_FAILED);
        }
    };
    let outcome = match scenarios::run(&cfg) {
        Ok(o) => o,
        Err(e) if scenarios::is_numerical_failure(&e) => {
            eprintln!("scenario {} failed: {}: {e}", cfg.scenario, e.code());
            return ExitCode::from(TOLERANCE_FAILED);
        }
        Err(e) => return config_failure(&cfg.scenario, format!("{}: {e}", e.code())),
    };
    let meta = json!({
        "scenario": cfg.scenario,
        "startedAtUnix": started,
        "elapsedSeconds": clock.elapsed().as_secs_f64(),
        "threads": threads.unwrap_or_else(rayon::current_num_threads),
        "configFile": config_path.as_ref().map(|p| p.display().to_string()),
        "out": out.display().to_string(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    if let Err(e) = report::write_outputs(&out, &cfg, &outcome, &meta) {
        eprintln!("cannot write reports under {}: {e}", out.display());
        return ExitCode::from(CONFIG_FAILED);
    }
    for c in &outcome.checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        let rel = serde_json::to_value(c.relation).expect("relation serializes");
        println!("{mark} {:<24} {:.3e} {} {:.3e}", c.name, c.value, rel.as_str().unwrap_or("?"), c.bound);
    }
    println!("reports written to {}", out.display());
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(TOLERANCE_FAILED)
    }
}
