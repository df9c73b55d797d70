//! `cimpcc`: track preprocessing, races, comparisons and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use cimpcc_core::harness::{self, parse_telemetry, write_telemetry, RaceOutcome};
use cimpcc_core::planner::Mode;
use cimpcc_core::track::{Centerline, Track, DEFAULT_SPACING, DEFAULT_WINDOW};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "cimpcc", version, about = "Curvature-informed MPCC racing planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the raw, smoothed and normalized curvature of a track file.
    ProcessTrack {
        #[arg(long)]
        track: PathBuf,
        /// Moving-average window in points (odd).
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Resampling spacing in meters; 0 keeps the file's points.
        #[arg(long, default_value_t = DEFAULT_SPACING)]
        spacing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Race one planner and write telemetry and lap statistics.
    Race {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
    /// Race MPCC and CiMPCC on the same track and seed.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Race CiMPCC against itself; every percentage comes out 0.0.
        #[arg(long)]
        self_compare: bool,
    },
    /// Summarize a telemetry file.
    Report {
        #[arg(long)]
        telemetry: PathBuf,
        /// Solve-time budget in seconds.
        #[arg(long, default_value_t = 0.05)]
        budget: f64,
        /// Print the published solve-time benchmark next to this run's.
        #[arg(long = "paper-ref")]
        reference: bool,
        /// Config used for lap timing; defaults to `resolved_config.toml`
        /// beside the telemetry.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

enum Failure {
    /// Bad input: config, track or telemetry. Exit 2.
    Input(String),
    /// A race was abandoned. Exit 3.
    Aborted(String),
    Io(anyhow::Error),
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Input(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ProcessTrack { track, window, spacing, out } => process_track(&track, window, spacing, &out),
        Command::Race { config, mode } => race(&config, mode),
        Command::Compare { config, self_compare } => compare(&config, self_compare),
        Command::Report { telemetry, budget, reference, config, json } => {
            report(&telemetry, budget, reference, config.as_deref(), json)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Aborted(msg)) => {
            eprintln!("aborted: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn process_track(path: &Path, window: usize, spacing: f64, out: &Path) -> Result<(), Failure> {
    if !(spacing >= 0.0) {
        return Err(Failure::Input(format!("--spacing must be >= 0, got {spacing}")));
    }
    let track = config::load_track_file(path, window, spacing)?;
    let cl: &Centerline = &track.centerline;
    let p = &track.profile;
    let mut csv = String::from("index,s_m,x_m,y_m,kappa_raw,kappa_smooth,kappa_nsc\n");
    for (i, pt) in cl.points().iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{}",
            cl.arc_lengths()[i],
            pt.x,
            pt.y,
            p.raw[i],
            p.smoothed[i],
            p.normalized[i]
        );
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("track");
    let dest = out.join(format!("{stem}_curvature.csv"));
    fs::write(&dest, csv).with_context(|| format!("writing {}", dest.display()))?;
    let lo = p.raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("{} points, {:.3} m", cl.len(), cl.total_length());
    println!("raw curvature min/max: {lo:.6} / {hi:.6} 1/m");
    println!("wrote {}", dest.display());
    Ok(())
}

fn prepare(config_path: &Path) -> Result<(RunConfig, Track), Failure> {
    let cfg = RunConfig::load(config_path)?;
    let track = cfg.load_track()?;
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let echo = cfg.output_dir.join("resolved_config.toml");
    fs::write(&echo, cfg.resolved_toml()).with_context(|| format!("writing {}", echo.display()))?;
    Ok((cfg, track))
}

fn write_outcome(dir: &Path, outcome: &RaceOutcome) -> Result<(), Failure> {
    let tag = outcome.mode.to_string().to_lowercase();
    let telemetry = dir.join(format!("telemetry_{tag}.csv"));
    fs::write(&telemetry, write_telemetry(&outcome.records))
        .with_context(|| format!("writing {}", telemetry.display()))?;
    if let Some(stats) = &outcome.stats {
        let path = dir.join(format!("stats_{tag}.json"));
        let json = serde_json::to_string_pretty(stats).context("serializing stats")?;
        fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn race(config_path: &Path, mode: Option<Mode>) -> Result<(), Failure> {
    let (cfg, track) = prepare(config_path)?;
    let mode = mode
        .or(cfg.mode.planner_mode())
        .ok_or_else(|| Failure::Input("`race` needs mode = \"mpcc\" or \"cimpcc\" in the config, or --mode".into()))?;
    let outcome = harness::run_race(&track, mode, &cfg.race_config(), cfg.n_laps, cfg.seed)
        .map_err(|e| Failure::Input(e.to_string()))?;
    write_outcome(&cfg.output_dir, &outcome)?;
    if let Some(reason) = outcome.aborted {
        return Err(Failure::Aborted(format!("{mode} race: {reason}")));
    }
    if let Some(stats) = &outcome.stats {
        println!(
            "{mode}: {} laps, mean lap {:.3} s, mean v_l {:.3} m/s",
            stats.lap_times.len(),
            stats.lap_time.mean,
            stats.velocity.mean
        );
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn compare(config_path: &Path, self_compare: bool) -> Result<(), Failure> {
    let (cfg, track) = prepare(config_path)?;
    let (baseline, candidate) = if self_compare { (Mode::Cimpcc, Mode::Cimpcc) } else { (Mode::Mpcc, Mode::Cimpcc) };
    let race_cfg = cfg.race_config();
    let mut outcomes = Vec::new();
    for mode in [baseline, candidate] {
        let outcome = harness::run_race(&track, mode, &race_cfg, cfg.n_laps, cfg.seed)
            .map_err(|e| Failure::Input(e.to_string()))?;
        write_outcome(&cfg.output_dir, &outcome)?;
        if let Some(reason) = &outcome.aborted {
            return Err(Failure::Aborted(format!("{mode} race: {reason}")));
        }
        outcomes.push(outcome);
    }
    let summary =
        |o: &RaceOutcome| harness::MethodSummary { mode: o.mode, stats: o.stats.clone().expect("n_laps >= 1") };
    let report = harness::ComparisonReport::new(summary(&outcomes[0]), summary(&outcomes[1]));
    let path = cfg.output_dir.join("comparison.json");
    let json = serde_json::to_string_pretty(&report).context("serializing comparison")?;
    fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{baseline}: mean lap {:.3} s, mean v_l {:.3} m/s",
        report.baseline.stats.lap_time.mean, report.baseline.stats.velocity.mean
    );
    println!(
        "{candidate}: mean lap {:.3} s, mean v_l {:.3} m/s",
        report.candidate.stats.lap_time.mean, report.candidate.stats.velocity.mean
    );
    println!(
        "lap time improvement {:.1}%, velocity gain {:.1}%",
        report.lap_time_improvement_pct, report.velocity_gain_pct
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn report(telemetry: &Path, budget: f64, reference: bool, config: Option<&Path>, json: bool) -> Result<(), Failure> {
    if !(budget > 0.0) {
        return Err(Failure::Input(format!("--budget must be positive, got {budget}")));
    }
    let text = fs::read_to_string(telemetry)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", telemetry.display())))?;
    let records = parse_telemetry(&text).map_err(|e| Failure::Input(format!("{}: {e}", telemetry.display())))?;
    let beside = telemetry.parent().unwrap_or(Path::new(".")).join("resolved_config.toml");
    let config = match config {
        Some(p) => Some(p.to_path_buf()),
        None => beside.is_file().then_some(beside),
    };
    let length = match config {
        Some(p) => Some(RunConfig::load(&p)?.load_track()?.total_length()),
        None => None,
    };
    let summary = report::build(&records, length, budget);
    if json {
        println!("{}", serde_json::to_string_pretty(&summary).context("serializing report")?);
    } else {
        print!("{}", report::render(&summary, reference));
    }
    Ok(())
}
