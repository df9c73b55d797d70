//! Closed-loop races, lap timing and method comparison.

mod telemetry;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlp::SolverStatus;
use crate::planner::{contour_lag_errors, Mode, Planner, PlannerConfig, PlannerError, StartKind};
use crate::track::Track;
use crate::vehicle::{plant_step, ControlInput, Disturbance, VehicleState};

pub use telemetry::{parse_telemetry, write_telemetry, TELEMETRY_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("no completed laps")]
    NoCompletedLaps,
    #[error("{mode} race aborted: {reason}")]
    RaceAborted { mode: Mode, reason: String },
    #[error("telemetry line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceConfig {
    pub v_l_std: f64,
    pub delta_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaceConfig {
    pub planner: PlannerConfig,
    pub disturbance: DisturbanceConfig,
    /// Simulated seconds allowed per lap (launch lap included) before the
    /// race is abandoned.
    pub max_lap_time: f64,
}

impl Default for RaceConfig {
    fn default() -> Self {
        Self { planner: PlannerConfig::default(), disturbance: DisturbanceConfig::default(), max_lap_time: 60.0 }
    }
}

/// Outcome of the solve in one control cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleStatus {
    Solved(SolverStatus),
    /// The solve failed with this status and the previous command was reapplied.
    Fallback(SolverStatus),
}

impl CycleStatus {
    pub fn label(&self) -> String {
        match self {
            CycleStatus::Solved(s) => s.as_str().to_string(),
            CycleStatus::Fallback(s) => format!("fallback:{}", s.as_str()),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.strip_prefix("fallback:") {
            Some(rest) => SolverStatus::parse(rest).map(CycleStatus::Fallback),
            None => SolverStatus::parse(s).map(CycleStatus::Solved),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    pub t: f64,
    /// State at the start of the cycle; progress is unwrapped.
    pub state: VehicleState,
    pub command: ControlInput,
    pub xi_con: f64,
    pub xi_lag: f64,
    pub beta: f64,
    pub solve_time: f64,
    pub status: CycleStatus,
    /// Not part of the telemetry file.
    pub iterations: usize,
    /// Iterations a cold-started solve needed from the same state, when
    /// shadow solves are enabled. Not part of the telemetry file.
    pub cold_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Some(Self { max, min, mean: mean.clamp(min, max) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapStats {
    pub lap_times: Vec<f64>,
    /// Mean commanded body velocity per lap.
    pub velocities: Vec<f64>,
    /// Distance driven by the plant over lap time.
    pub path_velocities: Vec<f64>,
    pub lap_time: Aggregate,
    pub velocity: Aggregate,
    pub path_velocity: Aggregate,
}

/// Where a lap ended: the first sample at or past the line, and the
/// interpolated crossing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LapBoundary {
    pub index: usize,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct RaceOutcome {
    pub mode: Mode,
    pub records: Vec<CycleRecord>,
    pub boundaries: Vec<LapBoundary>,
    /// `None` when fewer than one lap after the launch lap was completed.
    pub stats: Option<LapStats>,
    pub aborted: Option<String>,
}

impl RaceOutcome {
    /// Cycles where the vehicle was outside the track edge.
    pub fn corridor_violations(&self, track: &Track) -> usize {
        self.records
            .iter()
            .filter(|r| {
                let w = track.reference(r.state.progress);
                r.xi_con > w.half_width_right || -r.xi_con > w.half_width_left
            })
            .count()
    }

    /// Commands outside the configured input bounds.
    pub fn bound_violations(&self, config: &PlannerConfig) -> usize {
        self.records.iter().filter(|r| !config.horizon.input_within_bounds(&r.command)).count()
    }

    pub fn into_result(self) -> Result<Self, HarnessError> {
        match &self.aborted {
            Some(reason) => Err(HarnessError::RaceAborted { mode: self.mode, reason: reason.clone() }),
            None => Ok(self),
        }
    }
}

/// Extra per-cycle work for experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RaceOptions {
    /// Also solve every cycle from a cold start (result discarded) and
    /// record its iteration count.
    pub shadow_cold_start: bool,
}

/// Standing start at `s = 0` on the centerline, heading along the track.
pub fn start_state(track: &Track) -> VehicleState {
    let r = track.sample_at_s(0.0);
    VehicleState::new(r.x, r.y, r.heading, 0.0)
}

/// Races `n_laps` counted laps after a launch lap.
pub fn run_race(
    track: &Track,
    mode: Mode,
    config: &RaceConfig,
    n_laps: usize,
    seed: u64,
) -> Result<RaceOutcome, HarnessError> {
    run_race_with(track, mode, config, n_laps, seed, RaceOptions::default())
}

pub fn run_race_with(
    track: &Track,
    mode: Mode,
    config: &RaceConfig,
    n_laps: usize,
    seed: u64,
    options: RaceOptions,
) -> Result<RaceOutcome, HarnessError> {
    let mut planner = Planner::new(track, mode, config.planner)?;
    let dt = config.planner.horizon.t_s;
    let total = track.total_length();
    let target = (n_laps + 1) as f64 * total;
    let max_cycles = ((n_laps + 1) as f64 * config.max_lap_time / dt).ceil() as usize;
    let mut disturbance = Disturbance::new(config.disturbance.v_l_std, config.disturbance.delta_std, seed);

    let mut state = start_state(track);
    let mut records = Vec::new();
    let mut failures = 0;
    let mut aborted = None;

    for cycle in 0..max_cycles {
        let t = cycle as f64 * dt;
        let (xi_con, xi_lag) = contour_lag_errors(&state, track);
        let cold_iterations = if options.shadow_cold_start {
            planner.solve_from(&state, StartKind::Cold).ok().map(|p| p.iterations)
        } else {
            None
        };
        let (command, beta, solve_time, status, iterations) = match planner.step(&state) {
            Ok(plan) => {
                failures = 0;
                (plan.command(), plan.beta, plan.solve_time, CycleStatus::Solved(plan.status), plan.iterations)
            }
            Err(PlannerError::SolverFailure { status, iterations, solve_time, .. }) => {
                failures += 1;
                let fallback = planner.last_command().unwrap_or_default();
                let record = CycleRecord {
                    t,
                    state,
                    command: fallback,
                    xi_con,
                    xi_lag,
                    beta: planner.current_beta(&state),
                    solve_time,
                    status: CycleStatus::Fallback(status),
                    iterations,
                    cold_iterations,
                };
                if failures >= 2 {
                    records.push(record);
                    aborted = Some(format!("two consecutive solver failures at t = {t:.2} s"));
                    break;
                }
                (record.command, record.beta, solve_time, record.status, iterations)
            }
            Err(e @ PlannerError::OffTrack { .. }) => {
                aborted = Some(format!("{e} at t = {t:.2} s"));
                break;
            }
            Err(e) => return Err(e.into()),
        };
        records.push(CycleRecord {
            t,
            state,
            command,
            xi_con,
            xi_lag,
            beta,
            solve_time,
            status,
            iterations,
            cold_iterations,
        });
        if state.progress >= target {
            break;
        }
        if cycle + 1 == max_cycles {
            aborted = Some(format!("lap budget of {} s exceeded", config.max_lap_time));
            break;
        }
        let mut next = plant_step(&state, &command, &config.planner.vehicle, dt, Some(&mut disturbance))
            .map_err(|e| PlannerError::Configuration(e.to_string()))?;
        next.progress = unwrap_progress(track, state.progress, &next);
        state = next;
    }

    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let progress: Vec<f64> = records.iter().map(|r| r.state.progress).collect();
    let boundaries = lap_boundaries(&times, &progress, total);
    let stats = compute_stats(&records, &boundaries).ok();
    Ok(RaceOutcome { mode, records, boundaries, stats, aborted })
}

/// Unwrapped progress of `next`, continuing from `previous`.
fn unwrap_progress(track: &Track, previous: f64, next: &VehicleState) -> f64 {
    let total = track.total_length();
    let wrapped = track.centerline.project_continuous(next.x, next.y, Some(previous));
    let mut delta = wrapped - track.centerline.wrap_s(previous);
    delta -= total * (delta / total).round();
    previous + delta
}

/// Indices of the first samples at or past each multiple of `total_length`.
pub fn detect_lap_completion(progress: &[f64], total_length: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut next = total_length;
    for (j, &s) in progress.iter().enumerate() {
        while s >= next {
            out.push(j);
            next += total_length;
        }
    }
    out
}

/// Lap boundaries with crossing times interpolated between samples.
pub fn lap_boundaries(times: &[f64], progress: &[f64], total_length: f64) -> Vec<LapBoundary> {
    detect_lap_completion(progress, total_length)
        .into_iter()
        .enumerate()
        .map(|(k, j)| {
            let level = (k + 1) as f64 * total_length;
            let time = if j == 0 || progress[j] == level {
                times[j]
            } else {
                let (s0, s1) = (progress[j - 1], progress[j]);
                times[j - 1] + (level - s0) / (s1 - s0) * (times[j] - times[j - 1])
            };
            LapBoundary { index: j, time }
        })
        .collect()
}

/// Statistics over the laps between consecutive boundaries. Time before the
/// first boundary (the launch lap) is not counted.
pub fn compute_stats(records: &[CycleRecord], boundaries: &[LapBoundary]) -> Result<LapStats, HarnessError> {
    if boundaries.len() < 2 {
        return Err(HarnessError::NoCompletedLaps);
    }
    let mut lap_times = Vec::new();
    let mut velocities = Vec::new();
    let mut path_velocities = Vec::new();
    for pair in boundaries.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let lap_time = b.time - a.time;
        let in_lap: Vec<&CycleRecord> = records.iter().filter(|r| r.t >= a.time && r.t < b.time).collect();
        let mean_v = if in_lap.is_empty() {
            0.0
        } else {
            in_lap.iter().map(|r| r.command.v_l).sum::<f64>() / in_lap.len() as f64
        };
        let distance: f64 =
            in_lap.windows(2).map(|w| (w[1].state.x - w[0].state.x).hypot(w[1].state.y - w[0].state.y)).sum();
        let covered = in_lap.last().map_or(0.0, |r| r.t) - in_lap.first().map_or(0.0, |r| r.t);
        lap_times.push(lap_time);
        velocities.push(mean_v);
        path_velocities.push(if covered > 0.0 { distance / covered } else { 0.0 });
    }
    Ok(LapStats {
        lap_time: Aggregate::of(&lap_times).expect("nonempty"),
        velocity: Aggregate::of(&velocities).expect("nonempty"),
        path_velocity: Aggregate::of(&path_velocities).expect("nonempty"),
        lap_times,
        velocities,
        path_velocities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mode: Mode,
    pub stats: LapStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: MethodSummary,
    pub candidate: MethodSummary,
    /// `(baseline - candidate) / baseline` of the mean lap time, percent,
    /// one decimal.
    pub lap_time_improvement_pct: f64,
    /// `(candidate - baseline) / baseline` of the mean velocity, percent,
    /// one decimal.
    pub velocity_gain_pct: f64,
}

impl ComparisonReport {
    pub fn new(baseline: MethodSummary, candidate: MethodSummary) -> Self {
        let b = &baseline.stats;
        let c = &candidate.stats;
        let time = (b.lap_time.mean - c.lap_time.mean) / b.lap_time.mean * 100.0;
        let vel = (c.velocity.mean - b.velocity.mean) / b.velocity.mean * 100.0;
        Self { lap_time_improvement_pct: round1(time), velocity_gain_pct: round1(vel), baseline, candidate }
    }
}

fn round1(x: f64) -> f64 {
    let r = (x * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Both races of a comparison with the report.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub baseline: RaceOutcome,
    pub candidate: RaceOutcome,
}

/// MPCC baseline against CiMPCC on the same track, configuration and seed.
pub fn compare(track: &Track, config: &RaceConfig, n_laps: usize, seed: u64) -> Result<Comparison, HarnessError> {
    compare_modes(track, config, n_laps, seed, Mode::Mpcc, Mode::Cimpcc)
}

pub fn compare_modes(
    track: &Track,
    config: &RaceConfig,
    n_laps: usize,
    seed: u64,
    baseline: Mode,
    candidate: Mode,
) -> Result<Comparison, HarnessError> {
    let base = run_race(track, baseline, config, n_laps, seed)?.into_result()?;
    let cand = run_race(track, candidate, config, n_laps, seed)?.into_result()?;
    let summary = |o: &RaceOutcome| -> Result<MethodSummary, HarnessError> {
        Ok(MethodSummary { mode: o.mode, stats: o.stats.clone().ok_or(HarnessError::NoCompletedLaps)? })
    };
    let report = ComparisonReport::new(summary(&base)?, summary(&cand)?);
    Ok(Comparison { report, baseline: base, candidate: cand })
}
