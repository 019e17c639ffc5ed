use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use haptilab::assessment::{group_gain, load_scores, Aggregation};
use haptilab::config::{parse_config, parse_override_value};
use haptilab::headless::{parse_script_file, run_headless, HeadlessInput};
use haptilab::session::{verify_replay, SessionLog};
use haptilab::servo::StopReason;
use haptilab::LabConfig;
use haptilab_cli::service;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "lab", version, about = "Haptic physics labs: friction, Coriolis and precession")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a lab, either served over WebSocket or headless from a script or log.
    Run(RunArgs),
    /// Re-run a recorded session.
    Replay {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Compare state hashes tick by tick against the recording.
        #[arg(long)]
        verify: bool,
    },
    /// Normalized learning gain per group from a score table.
    Gain {
        #[arg(long, value_name = "FILE")]
        csv: PathBuf,
        #[arg(long, default_value = "per-student", value_name = "per-student|group-mean")]
        agg: Aggregation,
    },
}

#[derive(Parser)]
struct RunArgs {
    #[arg(long, value_name = "friction|coriolis|precession")]
    scenario: Option<String>,
    #[arg(long, value_name = "ball|glider")]
    variant: Option<String>,
    /// `ws`, `script:FILE` or `replay:FILE`.
    #[arg(long, default_value = "ws")]
    device: String,
    /// TOML configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, env = "LAB_PORT")]
    port: Option<u16>,
    /// Write a session log.
    #[arg(long, value_name = "FILE")]
    record: Option<PathBuf>,
    /// Servo rate in Hz.
    #[arg(long, value_name = "HZ")]
    rate: Option<u32>,
    /// Tick limit for headless runs.
    #[arg(long)]
    ticks: Option<u64>,
    /// Extra `key=value` config overrides; values parse as JSON when they can.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, Value)>> {
        let mut out = Vec::new();
        if let Some(s) = &self.scenario {
            out.push(("scenario".to_string(), Value::from(s.as_str())));
        }
        if let Some(v) = &self.variant {
            out.push(("coriolis.variant".to_string(), Value::from(v.as_str())));
        }
        if let Some(p) = self.port {
            out.push(("port".to_string(), Value::from(p)));
        }
        if let Some(r) = self.rate {
            out.push(("servo.rate_hz".to_string(), Value::from(r)));
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            out.push((k.trim().to_string(), parse_override_value(v.trim())));
        }
        Ok(out)
    }

    fn load_config(&self) -> Result<LabConfig> {
        let text = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
            None => None,
        };
        parse_config(text.as_deref(), &self.overrides()?).map_err(|e| anyhow::anyhow!("invalid configuration:\n{e}"))
    }
}

fn print_stop(stop: &StopReason) -> &'static str {
    match stop {
        StopReason::Completed => "completed",
        StopReason::EndOfInput => "end of input",
        StopReason::Requested => "stopped",
        StopReason::Fault(_) => "fault",
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let config = args.load_config()?;
    let input = if args.device == "ws" {
        None
    } else if let Some(path) = args.device.strip_prefix("script:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        Some(HeadlessInput::Scripts(parse_script_file(&text)?))
    } else if let Some(path) = args.device.strip_prefix("replay:") {
        Some(HeadlessInput::Replay(SessionLog::open(path).with_context(|| format!("reading {path}"))?))
    } else {
        bail!("unknown device {:?}; expected ws, script:FILE or replay:FILE", args.device);
    };

    let Some(input) = input else {
        let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
        let rt = tokio::runtime::Runtime::new()?;
        rt.block_on(async {
            let running = service::start(config, addr, args.record).await?;
            tracing::info!("serving ws://{}/ws", running.addr);
            println!("listening on {}", running.addr);
            tokio::signal::ctrl_c().await?;
            running.shutdown().await
        })?;
        return Ok(ExitCode::SUCCESS);
    };

    let report = run_headless(config, input, args.ticks.unwrap_or(u64::MAX), args.record)?;
    println!("ticks {}", report.ticks);
    println!("simulated time {:.3} s", report.final_t);
    println!("stop {}", print_stop(&report.stop));
    println!("max force {:.4} N", report.max_force_n);
    println!("mean tick {:.2} us", report.mean_tick_s * 1e6);
    if let Some(n) = report.recorded {
        println!("recorded {n} ticks");
    }
    println!("final hash {:016x}", report.final_hash);
    if let StopReason::Fault(e) = &report.stop {
        eprintln!("error: {e}");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(input: PathBuf, verify: bool) -> Result<ExitCode> {
    let log = SessionLog::open(&input).with_context(|| format!("reading {}", input.display()))?;
    if verify {
        let report = verify_replay(&log)?;
        println!("ticks checked {}", report.ticks_checked);
        println!("match {}", report.matched);
        if let Some(t) = report.first_divergence {
            println!("first divergent tick {t}");
            return Ok(ExitCode::FAILURE);
        }
        return Ok(ExitCode::SUCCESS);
    }
    let config = log.header.lab_config()?;
    let recorded = log.records.last().map(|r| r.hash);
    let ticks = log.records.len() as u64;
    let report = run_headless(config, HeadlessInput::Replay(log), ticks, None)?;
    println!("ticks {}", report.ticks);
    println!("final hash {:016x}", report.final_hash);
    if let Some(h) = recorded {
        println!("recorded hash {h:016x}");
    }
    Ok(ExitCode::SUCCESS)
}

fn gain(csv: PathBuf, agg: Aggregation) -> Result<ExitCode> {
    let file = std::fs::File::open(&csv).with_context(|| format!("reading {}", csv.display()))?;
    let records = load_scores(file).with_context(|| format!("parsing {}", csv.display()))?;
    let reports = group_gain(&records, agg)?;
    println!("{:<12} {:>4} {:>10} {:>9}  aggregation", "group", "n", "gain", "excluded");
    for r in &reports {
        println!("{:<12} {:>4} {:>10.4} {:>9}  {}", r.group, r.n, r.mean_gain, r.excluded.len(), r.aggregation);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Replay { input, verify } => replay(input, verify),
        Command::Gain { csv, agg } => gain(csv, agg),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
