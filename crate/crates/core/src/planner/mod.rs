//! Receding-horizon MPCC and CiMPCC planners.

mod cost;
mod problem;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlp::{self, SolverSettings, SolverStatus};
use crate::track::Track;
use crate::vehicle::{rk4_raw, wrap_angle, ControlInput, VehicleParams, VehicleState};
use crate::velocity_map::{map_nsc_to_beta, MappingParams, VelocityBounds};

pub use cost::{contour_lag_errors, corridor_penalty, eval_j_ci, eval_j_ci_staged, eval_j_mpcc};
pub use problem::{build_nlp, ShootingProblem};

/// Constraint violation up to which a solve that ran out of budget still
/// yields a usable command.
pub const USABLE_VIOLATION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("vehicle is off track: contour error {contour_error:.3} m beyond the recovery limit {limit:.3} m")]
    OffTrack { contour_error: f64, limit: f64 },
    #[error("solver failed ({}) after {iterations} iterations, violation {violation:.3e}", status.as_str())]
    SolverFailure { status: SolverStatus, iterations: usize, solve_time: f64, violation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mpcc,
    Cimpcc,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Mpcc => "mpcc",
            Mode::Cimpcc => "cimpcc",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mpcc" => Ok(Mode::Mpcc),
            "cimpcc" => Ok(Mode::Cimpcc),
            other => Err(format!("unknown planner mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonConfig {
    pub n_p: usize,
    pub n_c: usize,
    /// Stage duration in seconds.
    pub t_s: f64,
    /// `[x, y, heading, progress]`; progress is further limited per solve.
    pub state_lower: [f64; 4],
    pub state_upper: [f64; 4],
    /// `[v_l, delta, v_p]`.
    pub input_lower: [f64; 3],
    pub input_upper: [f64; 3],
    /// Lateral safety margin subtracted from the track half-widths.
    pub boundary_margin: f64,
    /// Penalize the first input increment against the last applied command.
    pub anchor_first_increment: bool,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            n_p: 10,
            n_c: 10,
            t_s: 0.05,
            state_lower: [-1e9; 4],
            state_upper: [1e9; 4],
            input_lower: [-10.0, -0.35, -10.0],
            input_upper: [10.0, 0.35, 10.0],
            boundary_margin: 0.15,
            anchor_first_increment: true,
        }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: String| Err(PlannerError::Configuration(m));
        if self.n_p == 0 || self.n_c == 0 || self.n_c > self.n_p {
            return bad(format!("need 1 <= n_c <= n_p, got n_c = {}, n_p = {}", self.n_c, self.n_p));
        }
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return bad(format!("stage duration {} must be positive", self.t_s));
        }
        if (0..4).any(|i| !(self.state_lower[i] < self.state_upper[i])) {
            return bad("state bounds must satisfy lower < upper".into());
        }
        if (0..3).any(|i| !(self.input_lower[i] < self.input_upper[i])) {
            return bad("input bounds must satisfy lower < upper".into());
        }
        if self.input_lower[1] <= -PI / 2.0 || self.input_upper[1] >= PI / 2.0 {
            return bad("steering bounds must stay inside (-pi/2, pi/2)".into());
        }
        if !(self.boundary_margin >= 0.0) {
            return bad("boundary margin must be >= 0".into());
        }
        Ok(())
    }

    /// Input applied at prediction stage `k` (the last one is held).
    pub fn input_index(&self, k: usize) -> usize {
        k.min(self.n_c - 1)
    }

    pub fn clamp_input(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(
            u.v_l.clamp(self.input_lower[0], self.input_upper[0]),
            u.delta.clamp(self.input_lower[1], self.input_upper[1]),
            u.v_p.clamp(self.input_lower[2], self.input_upper[2]),
        )
    }

    pub fn input_within_bounds(&self, u: &ControlInput) -> bool {
        let a = u.as_array();
        (0..3).all(|i| self.input_lower[i] <= a[i] && a[i] <= self.input_upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerWeights {
    pub q_con: f64,
    pub q_lag: f64,
    pub gamma: f64,
    pub r1: [f64; 3],
    pub r2: [f64; 3],
    pub r3: [f64; 2],
    pub u_ref: [f64; 3],
    pub slack_penalty: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self {
            q_con: 800.0,
            q_lag: 800.0,
            gamma: 40.0,
            r1: [10.0, 3500.0, 0.0],
            r2: [40.0, 10.0, 40.0],
            r3: [40.0, 40.0],
            u_ref: [3.3, 0.0, 3.0],
            slack_penalty: 1e4,
        }
    }
}

impl PlannerWeights {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let all = [self.q_con, self.q_lag, self.gamma, self.slack_penalty]
            .into_iter()
            .chain(self.r1)
            .chain(self.r2)
            .chain(self.r3);
        for w in all {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(PlannerError::Configuration(format!("weight {w} must be finite and >= 0")));
            }
        }
        if self.u_ref.iter().any(|v| !v.is_finite()) {
            return Err(PlannerError::Configuration("reference input must be finite".into()));
        }
        Ok(())
    }

    /// Weights as used by `mode`: CiMPCC drops the velocity entries of `r2`,
    /// which its own velocity objective replaces.
    pub fn effective(&self, mode: Mode) -> Self {
        match mode {
            Mode::Mpcc => *self,
            Mode::Cimpcc => Self { r2: [0.0, self.r2[1], 0.0], ..*self },
        }
    }
}

/// Everything a planner needs besides the track and the mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub horizon: HorizonConfig,
    pub weights: PlannerWeights,
    pub velocity: VelocityBounds,
    pub mapping: MappingParams,
    /// Evaluate the blending weight at every predicted stage instead of once
    /// at the current position. Experimental.
    pub beta_per_stage: bool,
    pub vehicle: VehicleParams,
    pub solver: SolverSettings,
    pub warm_start: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: HorizonConfig::default(),
            weights: PlannerWeights::default(),
            velocity: VelocityBounds::default(),
            mapping: MappingParams::default(),
            beta_per_stage: false,
            vehicle: VehicleParams::default(),
            solver: SolverSettings::default(),
            warm_start: true,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        self.horizon.validate()?;
        self.weights.validate()?;
        let cfg = |e: &dyn fmt::Display| PlannerError::Configuration(e.to_string());
        self.velocity.validate().map_err(|e| cfg(&e))?;
        self.mapping.validate().map_err(|e| cfg(&e))?;
        self.vehicle.validate().map_err(|e| cfg(&e))?;
        self.solver.validate().map_err(|e| cfg(&e))?;
        Ok(())
    }
}

/// Result of one receding-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPlan {
    pub states: Vec<VehicleState>,
    pub inputs: Vec<ControlInput>,
    /// Per state, including stage 0.
    pub contour_errors: Vec<f64>,
    pub lag_errors: Vec<f64>,
    pub objective_value: f64,
    pub solve_time: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub beta: f64,
}

impl Default for HorizonPlan {
    fn default() -> Self {
        Self {
            states: Vec::new(),
            inputs: Vec::new(),
            contour_errors: Vec::new(),
            lag_errors: Vec::new(),
            objective_value: 0.0,
            solve_time: 0.0,
            status: SolverStatus::Converged,
            iterations: 0,
            kkt_residual: 0.0,
            constraint_violation: 0.0,
            beta: 1.0,
        }
    }
}

impl HorizonPlan {
    /// The command sent to the vehicle.
    pub fn command(&self) -> ControlInput {
        self.inputs[0]
    }
}

/// How the solver's initial guess is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartKind {
    /// Previous solution shifted by one stage; falls back to cold.
    Warm,
    /// Rollout along the centerline at the safe progress velocity.
    Cold,
}

/// A receding-horizon planner bound to one track.
#[derive(Debug, Clone)]
pub struct Planner<'a> {
    track: &'a Track,
    mode: Mode,
    config: PlannerConfig,
    weights: PlannerWeights,
    previous_point: Option<DVector<f64>>,
    last_command: Option<ControlInput>,
}

impl<'a> Planner<'a> {
    pub fn new(track: &'a Track, mode: Mode, config: PlannerConfig) -> Result<Self, PlannerError> {
        config.validate()?;
        Ok(Self {
            track,
            mode,
            weights: config.weights.effective(mode),
            config,
            previous_point: None,
            last_command: None,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn track(&self) -> &Track {
        self.track
    }

    pub fn last_command(&self) -> Option<ControlInput> {
        self.last_command
    }

    /// Records a command applied by someone else (e.g. a fallback).
    pub fn set_last_command(&mut self, u: ControlInput) {
        self.last_command = Some(u);
    }

    /// Forgets the warm-start point.
    pub fn reset_warm_start(&mut self) {
        self.previous_point = None;
    }

    /// Blending weight at the vehicle's current position.
    pub fn current_beta(&self, zeta: &VehicleState) -> f64 {
        match self.mode {
            Mode::Mpcc => 1.0,
            Mode::Cimpcc => {
                let nsc = self.track.nsc_at_position(zeta.x, zeta.y, Some(zeta.progress));
                map_nsc_to_beta(nsc, &self.config.mapping).expect("nsc lies in [0, 1]")
            }
        }
    }

    /// Errors with [`PlannerError::OffTrack`] once the vehicle is more than
    /// one margin outside the track edge.
    pub fn check_on_track(&self, zeta: &VehicleState) -> Result<(), PlannerError> {
        let s = self.track.centerline.project_continuous(zeta.x, zeta.y, Some(zeta.progress));
        let r = self.track.reference(s);
        let (con, _) = cost::errors_against(zeta.x, zeta.y, r.pose.x, r.pose.y, r.pose.heading);
        let margin = self.config.horizon.boundary_margin;
        let (excess, limit) =
            if con >= 0.0 { (con, r.half_width_right + margin) } else { (-con, r.half_width_left + margin) };
        if excess > limit {
            return Err(PlannerError::OffTrack { contour_error: con, limit });
        }
        Ok(())
    }

    /// Receding-horizon step: solves from `zeta`, warm-started when enabled,
    /// and remembers the solution and its first input.
    pub fn step(&mut self, zeta: &VehicleState) -> Result<HorizonPlan, PlannerError> {
        let kind = if self.config.warm_start { StartKind::Warm } else { StartKind::Cold };
        match self.plan(zeta, kind) {
            Ok((plan, point)) => {
                self.previous_point = Some(point);
                self.last_command = Some(plan.command());
                Ok(plan)
            }
            Err(e) => {
                self.previous_point = None;
                Err(e)
            }
        }
    }

    /// Solves from `zeta` without changing the planner's memory.
    pub fn solve_from(&self, zeta: &VehicleState, kind: StartKind) -> Result<HorizonPlan, PlannerError> {
        self.plan(zeta, kind).map(|(plan, _)| plan)
    }

    fn plan(&self, zeta: &VehicleState, kind: StartKind) -> Result<(HorizonPlan, DVector<f64>), PlannerError> {
        self.check_on_track(zeta)?;
        let cfg = &self.config.horizon;
        let beta = self.current_beta(zeta);

        let (guess_states, guess_inputs) = match (&self.previous_point, kind) {
            (Some(prev), StartKind::Warm) => self.shifted_guess(prev, zeta),
            _ => self.cold_guess(zeta),
        };
        let betas = if self.config.beta_per_stage && self.mode == Mode::Cimpcc {
            guess_states[1..]
                .iter()
                .map(|s| {
                    map_nsc_to_beta(self.track.sample_at_s(s.progress).nsc, &self.config.mapping)
                        .expect("nsc lies in [0, 1]")
                })
                .collect()
        } else {
            vec![beta; cfg.n_p]
        };
        let problem = build_nlp(
            self.mode,
            *zeta,
            &betas,
            cfg,
            &self.weights,
            &self.config.velocity,
            self.track,
            self.config.vehicle.wheelbase,
            self.last_command,
        )?;
        let guess = problem.pack(&guess_states, &guess_inputs);
        let sol = nlp::solve(&problem, &guess, &self.config.solver)
            .map_err(|e| PlannerError::Configuration(e.to_string()))?;

        let usable = match sol.status {
            SolverStatus::Converged => true,
            SolverStatus::IterationLimit | SolverStatus::TimeLimit => sol.constraint_violation <= USABLE_VIOLATION,
            SolverStatus::NumericalFailure => false,
        };
        if !usable {
            return Err(PlannerError::SolverFailure {
                status: sol.status,
                iterations: sol.iterations,
                solve_time: sol.wall_time,
                violation: sol.constraint_violation,
            });
        }
        let mut plan = problem.unpack(&sol.point);
        for u in plan.inputs.iter_mut() {
            *u = cfg.clamp_input(*u);
        }
        plan.objective_value = sol.objective_value;
        plan.solve_time = sol.wall_time;
        plan.status = sol.status;
        plan.iterations = sol.iterations;
        plan.kkt_residual = sol.kkt_residual;
        plan.constraint_violation = sol.constraint_violation;
        plan.beta = beta;
        Ok((plan, sol.point))
    }

    fn cold_guess(&self, zeta: &VehicleState) -> (Vec<VehicleState>, Vec<ControlInput>) {
        let cfg = &self.config.horizon;
        let v = self.config.velocity.v_under;
        let mut states = vec![*zeta];
        let mut heading = zeta.heading;
        for k in 1..=cfg.n_p {
            let s = zeta.progress + k as f64 * cfg.t_s * v[1];
            let r = self.track.sample_at_s(s);
            heading += wrap_angle(r.heading - heading);
            states.push(VehicleState::new(r.x, r.y, heading, s));
        }
        let inputs = vec![cfg.clamp_input(ControlInput::new(v[0], 0.0, v[1])); cfg.n_c];
        (states, inputs)
    }

    fn shifted_guess(&self, prev: &DVector<f64>, zeta: &VehicleState) -> (Vec<VehicleState>, Vec<ControlInput>) {
        let cfg = &self.config.horizon;
        let n_x = 4 * (cfg.n_p + 1);
        let state = |k: usize| VehicleState::from_vector(&prev.fixed_rows::<4>(4 * k).into_owned());
        let input = |j: usize| ControlInput::from_vector(&prev.fixed_rows::<3>(n_x + 3 * j).into_owned());

        let mut inputs: Vec<ControlInput> = (1..cfg.n_c).map(input).collect();
        inputs.push(input(cfg.n_c - 1));
        let mut states: Vec<VehicleState> = (1..=cfg.n_p).map(state).collect();
        let last = states[cfg.n_p - 1].to_vector();
        let tail =
            rk4_raw(&last, &inputs[cfg.input_index(cfg.n_p - 1)].to_vector(), self.config.vehicle.wheelbase, cfg.t_s);
        states.push(VehicleState::from_vector(&tail));

        // Bring headings into the branch of the current (wrapped) heading.
        let turns = ((states[0].heading - zeta.heading) / (2.0 * PI)).round();
        for s in states.iter_mut() {
            s.heading -= turns * 2.0 * PI;
        }
        states[0] = *zeta;
        (states, inputs)
    }
}
