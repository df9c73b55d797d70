//! Browser bindings for the demo page in `web/`.
//!
//! Every export returns JSON text; the page parses it with `JSON.parse`.

use cimpcc_core::harness::{run_race, RaceConfig};
use cimpcc_core::planner::Mode;
use cimpcc_core::track::Track;
use cimpcc_core::tracks::STADIUM_CHICANE_CSV;
use cimpcc_core::velocity_map::{map_nsc_to_beta, MappingParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct TrackView {
    pub length: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
    pub kappa_raw: Vec<f64>,
    pub kappa_smooth: Vec<f64>,
    pub nsc: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct RaceView {
    pub mode: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub v_l: Vec<f64>,
    pub beta: Vec<f64>,
    pub lap_times: Vec<f64>,
    pub mean_velocity: Option<f64>,
    pub p95_solve_time: f64,
    pub aborted: Option<String>,
}

fn load(csv: &str, window: usize, spacing: f64) -> Result<Track, String> {
    let source = if csv.trim().is_empty() { STADIUM_CHICANE_CSV } else { csv };
    let spacing = if csv.trim().is_empty() { 0.0 } else { spacing };
    Track::from_csv(source, window, Some(spacing)).map_err(|e| e.to_string())
}

/// Curvature pipeline on a track CSV; an empty string means the built-in circuit.
pub fn track_view(csv: &str, window: usize, spacing: f64) -> Result<TrackView, String> {
    let track = load(csv, window, spacing)?;
    let cl = &track.centerline;
    let n = cl.len();
    let mut view = TrackView {
        length: cl.total_length(),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        s: cl.arc_lengths().to_vec(),
        left: Vec::with_capacity(n),
        right: Vec::with_capacity(n),
        kappa_raw: track.profile.raw.clone(),
        kappa_smooth: track.profile.smoothed.clone(),
        nsc: track.profile.normalized.clone(),
    };
    for (i, p) in cl.points().iter().enumerate() {
        let heading = track.sample_at_s(cl.arc_lengths()[i]).heading;
        let (nx, ny) = (-heading.sin(), heading.cos());
        view.x.push(p.x);
        view.y.push(p.y);
        view.left.push([p.x + nx * p.half_width_left, p.y + ny * p.half_width_left]);
        view.right.push([p.x - nx * p.half_width_right, p.y - ny * p.half_width_right]);
    }
    Ok(view)
}

/// `exp(-alpha * nsc^2)` on `samples` evenly spaced points of `[0, 1]`.
pub fn beta_curve(alpha: f64, samples: usize) -> Result<Vec<f64>, String> {
    let params = MappingParams::new(alpha).map_err(|e| e.to_string())?;
    let n = samples.max(2);
    (0..n).map(|i| map_nsc_to_beta(i as f64 / (n - 1) as f64, &params).map_err(|e| e.to_string())).collect()
}

/// Closed-loop race of `laps` counted laps after the launch lap.
pub fn race_view(csv: &str, mode: &str, alpha: f64, laps: usize) -> Result<RaceView, String> {
    let track = load(csv, cimpcc_core::track::DEFAULT_WINDOW, cimpcc_core::track::DEFAULT_SPACING)?;
    let mode: Mode = mode.parse()?;
    let mut config = RaceConfig::default();
    config.planner.mapping = MappingParams::new(alpha).map_err(|e| e.to_string())?;
    let out = run_race(&track, mode, &config, laps, 1).map_err(|e| e.to_string())?;
    let mut solve: Vec<f64> = out.records.iter().map(|r| r.solve_time).collect();
    solve.sort_by(f64::total_cmp);
    let p95 = solve.get(((0.95 * solve.len() as f64).ceil() as usize).saturating_sub(1)).copied().unwrap_or(0.0);
    Ok(RaceView {
        mode: mode.to_string(),
        x: out.records.iter().map(|r| r.state.x).collect(),
        y: out.records.iter().map(|r| r.state.y).collect(),
        t: out.records.iter().map(|r| r.t).collect(),
        v_l: out.records.iter().map(|r| r.command.v_l).collect(),
        beta: out.records.iter().map(|r| r.beta).collect(),
        lap_times: out.stats.as_ref().map(|s| s.lap_times.clone()).unwrap_or_default(),
        mean_velocity: out.stats.as_ref().map(|s| s.velocity.mean),
        p95_solve_time: p95,
        aborted: out.aborted,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e)).and_then(|v| serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())))
}

#[wasm_bindgen(js_name = builtinTrack)]
pub fn builtin_track() -> String {
    STADIUM_CHICANE_CSV.to_string()
}

#[wasm_bindgen(js_name = processTrack)]
pub fn process_track(csv: &str, window: usize, spacing: f64) -> Result<String, JsError> {
    to_json(track_view(csv, window, spacing))
}

#[wasm_bindgen(js_name = betaCurve)]
pub fn beta_curve_js(alpha: f64, samples: usize) -> Result<String, JsError> {
    to_json(beta_curve(alpha, samples))
}

#[wasm_bindgen]
pub fn race(csv: &str, mode: &str, alpha: f64, laps: usize) -> Result<String, JsError> {
    to_json(race_view(csv, mode, alpha, laps))
}
