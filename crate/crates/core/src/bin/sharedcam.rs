use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sharedcam::session::bench::{run_bench, BenchOptions};
use sharedcam::session::files::{load_config, load_scenario, load_scene, ScenarioFile, SessionConfig};
use sharedcam::session::log::{read_log_file, replay, run_recorded};
use sharedcam::session::server::{run_session, ServeOptions};
use sharedcam::session::Engine;
use sharedcam::{Error, Result};

/// Shared camera control engine.
///
/// Exit codes: 0 ok, 1 check failed (error diagnostics, bench gate, replay
/// mismatch), 2 bad input, 3 environment (e.g. port in use), 4 scenario
/// semantics.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArg {
    /// Session config file; defaults apply when omitted.
    #[arg(long, env = "SHAREDCAM_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Host a live session over websockets.
    Serve {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        /// Listen address; overrides the config's `listen`.
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Write a JSONL log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Stop after N ticks.
        #[arg(long)]
        ticks: Option<u64>,
    },
    /// Run a scripted scenario headless and write its log.
    Scenario {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the scenario's own tick count.
        #[arg(long)]
        ticks: Option<u64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Check scene, config, scenario and log files without running them.
    Validate {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Time the solver on a seeded set of representative requests.
    Bench {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Re-run a log and compare snapshot hashes.
    Replay { log: PathBuf },
}

fn config_or_default(path: Option<&Path>) -> Result<SessionConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(SessionConfig::default()),
    }
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
    } else {
        println!("{}", text());
    }
}

fn run(cli: Cli) -> Result<u8> {
    let json = cli.json;
    match cli.command {
        Cmd::Serve {
            scene,
            config,
            listen,
            scenario,
            log,
            ticks,
        } => {
            let scene = load_scene(&scene)?;
            let config = config_or_default(config.config.as_deref())?;
            let listen = listen.unwrap_or_else(|| config.listen.clone());
            let mut engine = Engine::new(scene, config)?;
            if let Some(path) = scenario {
                engine = engine.with_scenario(&load_scenario(&path)?)?;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let handle = run_session(
                    engine,
                    ServeOptions {
                        listen,
                        log,
                        max_ticks: ticks,
                    },
                )
                .await?;
                let addr = handle.local_addr().to_string();
                emit(json, &serde_json::json!({ "listening": addr }), || {
                    format!("listening on ws://{addr}")
                });
                let summary = if ticks.is_some() {
                    handle.wait().await?
                } else {
                    tokio::select! {
                        _ = tokio::signal::ctrl_c() => {}
                    }
                    handle.shutdown().await?
                };
                emit(json, &summary, || format!("stopped after {} ticks", summary.ticks));
                Ok(0)
            })
        }
        Cmd::Scenario {
            scene,
            scenario,
            out,
            ticks,
            config,
        } => {
            let scene = load_scene(&scene)?;
            let config = config_or_default(config.config.as_deref())?.deterministic();
            let file: ScenarioFile = load_scenario(&scenario)?;
            let ticks = ticks.or(file.ticks).ok_or_else(|| {
                Error::InvalidInput("no tick count: pass --ticks or set \"ticks\" in the scenario".into())
            })?;
            let mut engine = Engine::new(scene, config)?.with_scenario(&file)?;
            let writer = std::io::BufWriter::new(std::fs::File::create(&out)?);
            let (summary, _) = run_recorded(&mut engine, ticks, writer)?;
            emit(json, &summary, || {
                format!(
                    "{} ticks, {} error and {} warning diagnostics, snapshot hash {}",
                    summary.ticks, summary.errors, summary.warnings, summary.snapshot_hash
                )
            });
            Ok(u8::from(summary.errors > 0))
        }
        Cmd::Validate {
            scene,
            config,
            scenario,
            log,
        } => {
            let mut checked = Vec::new();
            if let Some(p) = &scene {
                load_scene(p)?;
                checked.push(p.display().to_string());
            }
            if let Some(p) = &config.config {
                load_config(p)?;
                checked.push(p.display().to_string());
            }
            if let Some(p) = &scenario {
                load_scenario(p)?;
                checked.push(p.display().to_string());
            }
            if let Some(p) = &log {
                let contents = read_log_file(p)?;
                for w in &contents.warnings {
                    eprintln!("warning: {}: {w}", p.display());
                }
                checked.push(p.display().to_string());
            }
            if checked.is_empty() {
                return Err(Error::InvalidInput(
                    "nothing to validate; pass at least one file".into(),
                ));
            }
            emit(json, &serde_json::json!({ "valid": checked }), || {
                checked.iter().map(|c| format!("ok {c}")).collect::<Vec<_>>().join("\n")
            });
            Ok(0)
        }
        Cmd::Bench {
            scene,
            iters,
            seed,
            config,
        } => {
            let scene = load_scene(&scene)?;
            let config = config_or_default(config.config.as_deref())?;
            let opts = BenchOptions {
                iters,
                seed,
                ..BenchOptions::default()
            };
            let report = run_bench(&scene, &config, &opts)?;
            emit(json, &report, || {
                format!(
                    "{} solves, seed {}: p50 {:.3} ms, p95 {:.3} ms, max {:.3} ms\nbudget {} ms: {}\ngate {} ms: {}",
                    report.iters,
                    report.seed,
                    report.p50_ms,
                    report.p95_ms,
                    report.max_ms,
                    report.budget_ms,
                    if report.within_budget { "PASS" } else { "FAIL" },
                    report.gate_ms,
                    if report.pass { "PASS" } else { "FAIL" },
                )
            });
            Ok(u8::from(!report.pass))
        }
        Cmd::Replay { log } => {
            let contents = read_log_file(&log)?;
            for w in &contents.warnings {
                eprintln!("warning: {}: {w}", log.display());
            }
            let report = replay(&contents)?;
            emit(json, &report, || {
                format!(
                    "{} ticks replayed: {} (recorded {}, replayed {})",
                    report.ticks,
                    if report.identical { "identical" } else { "DIVERGED" },
                    report.recorded_hash,
                    report.replayed_hash
                )
            });
            Ok(u8::from(!report.identical))
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
