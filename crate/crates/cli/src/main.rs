use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use simpath_core::analysis::{self, Axis, Weighting};
use simpath_core::prompts::Route;
use simpath_core::session::{self, synth, Config, ServeOptions};
use simpath_core::telemetry::{parse_log_str, resample, serialize_log};

#[derive(Parser)]
#[command(name = "simpath", version, about = "Road-bending display engine and motion sickness analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a recorded ride through the display pipeline.
    Replay {
        #[arg(long)]
        ride: PathBuf,
        #[arg(long)]
        route: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline metrics over stored sessions.
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
    /// Live endpoint for the cockpit.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        route: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// Where to write session.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many seconds instead of waiting for Ctrl-C.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Write the bundled synthetic ride log and route.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct SessionArg {
    #[arg(long)]
    session: PathBuf,
}

#[derive(Subcommand)]
enum Analyze {
    /// Per-axis motion sickness dose value of a replayed session.
    Msdv {
        #[command(flatten)]
        session: SessionArg,
        #[arg(long, value_enum, default_value = "on")]
        weighting: OnOff,
    },
    /// Grid of MS modification events.
    Heatmap {
        #[command(flatten)]
        session: SessionArg,
        /// MS-report JSON Lines file to use instead of the session's reports.
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long, default_value_t = analysis::DEFAULT_CELL_SIZE_M)]
        cell_size: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-way ANOVA across sessions and score/bend correlation.
    Stats {
        /// Repeat once per condition.
        #[arg(long, required = true)]
        session: Vec<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Replay { ride, route, params, out } => replay(&ride, &route, params.as_deref(), &out),
        Command::Analyze { what } => match what {
            Analyze::Msdv { session, weighting } => msdv(&session.session, weighting),
            Analyze::Heatmap { session, reports, cell_size, out } => {
                heatmap(&session.session, reports.as_deref(), cell_size, out.as_deref())
            }
            Analyze::Stats { session } => stats(&session),
        },
        Command::Serve { port, route, params, bind, out, duration } => {
            serve(SocketAddr::new(bind, port), &route, params.as_deref(), out, duration)
        }
        Command::Synth { out } => write_synth(&out),
    }
}

fn replay(ride: &Path, route: &Path, params: Option<&Path>, out: &Path) -> Result<()> {
    let result = session::replay_files(ride, route, params)?;
    let digest = session::export(&result.log, out)?;
    let series_path = out.join(session::SERIES_FILE);
    std::fs::write(&series_path, serialize_log(result.series.samples()))
        .with_context(|| format!("writing {}", series_path.display()))?;
    println!("{} frames written to {} (sha256 {digest})", result.log.frames.len(), out.display());
    Ok(())
}

fn msdv(dir: &Path, weighting: OnOff) -> Result<()> {
    let log = session::import(dir)?;
    let samples = parse_log_str(&read(&dir.join(session::SERIES_FILE))?)?;
    let series = resample(&samples, log.header.config.resample_rate_hz)?;
    let weighting = match weighting {
        OnOff::On => Weighting::On,
        OnOff::Off => Weighting::Off,
    };
    let results = Axis::ALL
        .iter()
        .map(|&axis| analysis::msdv(&series.accel_channel(axis.index())?, series.rate_hz(), axis, weighting))
        .collect::<simpath_core::Result<Vec<_>>>()?;
    println!("{}", serde_json::to_string_pretty(&results)?);
    Ok(())
}

fn heatmap(dir: &Path, reports: Option<&Path>, cell_size: f64, out: Option<&Path>) -> Result<()> {
    let reports = match reports {
        Some(p) => analysis::parse_reports(&read(p)?)?,
        None => session::import(dir)?.reports,
    };
    let grid = analysis::heatmap(&reports, cell_size)?;
    let doc = grid.to_json();
    match out {
        Some(p) => std::fs::write(p, doc).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{doc}"),
    }
    if grid.skipped > 0 {
        eprintln!("{} modification events had no position and were skipped", grid.skipped);
    }
    Ok(())
}

fn stats(dirs: &[PathBuf]) -> Result<()> {
    let logs = dirs.iter().map(|d| session::import(d)).collect::<simpath_core::Result<Vec<_>>>()?;
    let stats = session::condition_stats(&logs)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn serve(addr: SocketAddr, route: &Path, params: Option<&Path>, out: Option<PathBuf>, duration: Option<f64>) -> Result<()> {
    let config = match params {
        Some(p) => Config::from_json(&read(p)?)?,
        None => Config::default(),
    };
    let route_text = read(route)?;
    let route_sha256 = session::sha256_hex(route_text.as_bytes());
    let route = Route::from_json(&route_text)?;
    if let Some(d) = duration {
        if !(d.is_finite() && d > 0.0) {
            bail!("--duration must be positive");
        }
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let handle = session::serve(ServeOptions { addr, config, route, route_sha256, out_dir: out }).await?;
        eprintln!("listening on {}", handle.local_addr());
        match duration {
            Some(d) => tokio::time::sleep(std::time::Duration::from_secs_f64(d)).await,
            None => tokio::signal::ctrl_c().await?,
        }
        let log = handle.shutdown().await?;
        eprintln!(
            "session closed: {} frames, {} reports, {} control inputs",
            log.frames.len(),
            log.reports.len(),
            log.controls.len()
        );
        Ok(())
    })
}

fn write_synth(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("synthetic_ride.jsonl"), serialize_log(&synth::ride()))?;
    std::fs::write(out.join("synthetic_route.json"), synth::route().to_json() + "\n")?;
    std::fs::write(out.join("default_params.json"), serde_json::to_string_pretty(&Config::default())? + "\n")?;
    println!("wrote synthetic ride, route and params to {}", out.display());
    Ok(())
}
