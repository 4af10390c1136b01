//! `caplab run <config.json> --out-dir DIR [--threads N]`
//!
//! Exit codes: 0 when every applicable check passes (hypothesis-not-met
//! records included), 1 on an inequality violation, 2 on a configuration
//! error, 3 on a solver failure, 4 on an I/O failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, ExperimentConfig};
use output::{Outputs, Summary};

#[derive(Parser)]
#[command(name = "caplab", version, about = "Capacity and eigenvalue experiments on grid domains")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    use caplab_core::Error as E;
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NoConvergence { .. } | E::VanishingGroundState { .. } | E::DegenerateGap { .. } => {
                    EXIT_SOLVER
                }
                E::Io(_) => EXIT_IO,
                _ => EXIT_CONFIG,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<tempfile::PersistError>() {
            return EXIT_IO;
        }
    }
    EXIT_SOLVER
}

fn execute(config: &Path, out_dir: &Path, threads: Option<usize>) -> anyhow::Result<bool> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.apply_seed_override(std::env::var("CAPLAB_SEED").ok())?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(ConfigError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let res = commands::run(&cfg)?;
    let ok = commands::succeeded(&res.report);
    let summary = Summary::of(&res.report);
    let stem = &cfg.output.stem;
    let report = json!({
        "version": concat!("caplab ", env!("CARGO_PKG_VERSION")),
        "command": cfg.command,
        "config": cfg,
        "mesh": res.meshes,
        "summary": &summary,
        "report": res.report,
        "data": res.data,
    });
    let mut files = Outputs::default();
    let mut text = serde_json::to_vec_pretty(&report)?;
    text.push(b'\n');
    files.add(format!("{stem}.json"), text);
    files.add(format!("{stem}.csv"), res.table.to_bytes()?);
    if let Some(p) = &res.plot {
        files.add(format!("{stem}.svg"), p.render().into_bytes());
    }
    if let Some(bytes) = res.sidecar {
        files.add(format!("{stem}.eig.bin"), bytes);
    }
    let mut stages: Vec<_> = res
        .timings
        .iter()
        .map(|(s, t)| json!({ "stage": s, "seconds": t }))
        .collect();
    stages.push(json!({ "stage": "total", "seconds": started.elapsed().as_secs_f64() }));
    files.add(
        format!("{stem}.timings.json"),
        serde_json::to_vec_pretty(&json!({ "timings": stages }))?,
    );
    let names: Vec<String> = files.names().map(String::from).collect();
    files.commit(out_dir)?;
    for n in names {
        eprintln!("wrote {}", out_dir.join(n).display());
    }
    eprintln!(
        "{}: {} pass, {} fail, {} hypothesis-not-met",
        report["command"].as_str().unwrap_or("run"),
        summary.pass,
        summary.fail,
        summary.hypothesis_not_met
    );
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Cmd::Run {
        config,
        out_dir,
        threads,
    } = cli.cmd;
    match execute(&config, &out_dir, threads) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
