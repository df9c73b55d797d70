//! Summaries of a telemetry file.

use std::fmt::Write as _;

use cimpcc_core::harness::{compute_stats, lap_boundaries, CycleRecord, CycleStatus, LapStats};
use serde::Serialize;

/// Published benchmark for comparison: 95% of solves under this many seconds.
pub const REFERENCE_P95: f64 = 0.0206;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveTimes {
    pub count: usize,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    pub budget: f64,
    pub fraction_under_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub cycles: usize,
    pub fallbacks: usize,
    /// `None` when the track length is unknown or no lap after launch finished.
    pub laps: Option<LapStats>,
    pub solve_time: SolveTimes,
}

/// Nearest-rank percentile of a nonempty sample, `p` in `(0, 1]`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn build(records: &[CycleRecord], track_length: Option<f64>, budget: f64) -> Report {
    let times: Vec<f64> = records.iter().map(|r| r.solve_time).collect();
    let under = times.iter().filter(|&&t| t < budget).count();
    let laps = track_length.and_then(|l| {
        let t: Vec<f64> = records.iter().map(|r| r.t).collect();
        let s: Vec<f64> = records.iter().map(|r| r.state.progress).collect();
        compute_stats(records, &lap_boundaries(&t, &s, l)).ok()
    });
    Report {
        cycles: records.len(),
        fallbacks: records.iter().filter(|r| matches!(r.status, CycleStatus::Fallback(_))).count(),
        laps,
        solve_time: SolveTimes {
            count: times.len(),
            p50: percentile(&times, 0.5),
            p95: percentile(&times, 0.95),
            max: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            budget,
            fraction_under_budget: under as f64 / times.len() as f64,
        },
    }
}

pub fn render(report: &Report, reference: bool) -> String {
    let mut out = String::new();
    match &report.laps {
        Some(stats) => {
            let _ = writeln!(out, "lap   time [s]   mean v_l [m/s]   path v [m/s]");
            for (k, ((t, v), pv)) in
                stats.lap_times.iter().zip(&stats.velocities).zip(&stats.path_velocities).enumerate()
            {
                let _ = writeln!(out, "{:>3}   {:>8.3}   {:>14.3}   {:>12.3}", k + 1, t, v, pv);
            }
            let _ = writeln!(
                out,
                "mean  {:>8.3}   {:>14.3}   {:>12.3}",
                stats.lap_time.mean, stats.velocity.mean, stats.path_velocity.mean
            );
            let _ = writeln!(out, "lap time min/max: {:.3} / {:.3} s", stats.lap_time.min, stats.lap_time.max);
        }
        None => {
            let _ = writeln!(out, "no completed laps (or track length unknown)");
        }
    }
    let st = &report.solve_time;
    let _ = writeln!(out, "cycles: {} ({} fallback)", report.cycles, report.fallbacks);
    let _ = writeln!(out, "solve time p50/p95/max: {:.4} / {:.4} / {:.4} s", st.p50, st.p95, st.max);
    let _ = writeln!(out, "under {} s budget: {:.1}%", st.budget, 100.0 * st.fraction_under_budget);
    if reference {
        let _ = writeln!(out, "reference: 95% < {REFERENCE_P95} s; this run: 95% < {:.4} s", st.p95);
    }
    out
}
