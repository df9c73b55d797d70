//! Multiple-shooting transcription of the receding-horizon problem.
//!
//! Decision vector: stage states `x_0..=x_{n_p}` (4 each) followed by inputs
//! `u_0..u_{n_c}` (3 each). Stage `k` applies input `min(k, n_c - 1)`.
//! The objective is a sum of squared residuals plus the linear progress
//! reward; the corridor slacks are eliminated in closed form, so each side
//! contributes `weight * max(0, violation)^2`.

use nalgebra::{DMatrix, DVector};

use crate::nlp::NlpProblem;
use crate::track::Track;
use crate::vehicle::{rk4_raw, rk4_with_jacobians, ControlInput, VehicleState};
use crate::velocity_map::VelocityBounds;

use super::cost::errors_against;
use super::{HorizonConfig, HorizonPlan, Mode, PlannerError, PlannerWeights};

const STATE: usize = 4;
const INPUT: usize = 3;

/// A residual touching at most four variables.
#[derive(Debug, Clone, Copy)]
struct Residual {
    value: f64,
    idx: [usize; 4],
    grad: [f64; 4],
    nnz: usize,
}

impl Residual {
    fn single(value: f64, i: usize, g: f64) -> Self {
        Self { value, idx: [i, 0, 0, 0], grad: [g, 0.0, 0.0, 0.0], nnz: 1 }
    }

    fn pair(value: f64, i: usize, gi: f64, j: usize, gj: f64) -> Self {
        Self { value, idx: [i, j, 0, 0], grad: [gi, gj, 0.0, 0.0], nnz: 2 }
    }
}

/// The assembled NLP for one control cycle.
#[derive(Debug, Clone)]
pub struct ShootingProblem<'a> {
    track: &'a Track,
    cfg: HorizonConfig,
    weights: PlannerWeights,
    bounds: VelocityBounds,
    mode: Mode,
    /// Per-stage blending weights (all equal unless per-stage blending is on).
    betas: Vec<f64>,
    initial: VehicleState,
    previous: Option<[f64; 3]>,
    wheelbase: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Builds the NLP for one cycle. `weights` should already be the effective
/// weights for `mode`; `betas` holds one value per prediction stage and is
/// ignored in MPCC mode.
#[allow(clippy::too_many_arguments)]
pub fn build_nlp<'a>(
    mode: Mode,
    initial: VehicleState,
    betas: &[f64],
    cfg: &HorizonConfig,
    weights: &PlannerWeights,
    bounds: &VelocityBounds,
    track: &'a Track,
    wheelbase: f64,
    previous: Option<ControlInput>,
) -> Result<ShootingProblem<'a>, PlannerError> {
    cfg.validate()?;
    weights.validate()?;
    if !initial.to_vector().iter().all(|v| v.is_finite()) {
        return Err(PlannerError::Configuration("initial state is not finite".into()));
    }
    let betas = match mode {
        Mode::Mpcc => vec![1.0; cfg.n_p],
        Mode::Cimpcc => {
            if betas.len() != cfg.n_p {
                return Err(PlannerError::DimensionMismatch(format!(
                    "{} blending weights for {} stages",
                    betas.len(),
                    cfg.n_p
                )));
            }
            if betas.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
                return Err(PlannerError::Configuration("blending weights must lie in (0, 1]".into()));
            }
            betas.to_vec()
        }
    };

    let n = dimension(cfg);
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let s_lo = initial.progress - 1.0;
    let s_hi = initial.progress + cfg.input_upper[2].max(0.0) * cfg.t_s * cfg.n_p as f64 + 1.0;
    for k in 0..=cfg.n_p {
        for i in 0..STATE {
            lower[STATE * k + i] = cfg.state_lower[i];
            upper[STATE * k + i] = cfg.state_upper[i];
        }
        lower[STATE * k + 3] = lower[STATE * k + 3].max(s_lo);
        upper[STATE * k + 3] = upper[STATE * k + 3].min(s_hi);
    }
    for j in 0..cfg.n_c {
        for i in 0..INPUT {
            lower[input_offset(cfg, j) + i] = cfg.input_lower[i];
            upper[input_offset(cfg, j) + i] = cfg.input_upper[i];
        }
    }
    Ok(ShootingProblem {
        track,
        cfg: *cfg,
        weights: *weights,
        bounds: *bounds,
        mode,
        betas,
        initial,
        previous: if cfg.anchor_first_increment { previous.map(|u| u.as_array()) } else { None },
        wheelbase,
        lower,
        upper,
    })
}

fn dimension(cfg: &HorizonConfig) -> usize {
    STATE * (cfg.n_p + 1) + INPUT * cfg.n_c
}

fn input_offset(cfg: &HorizonConfig, j: usize) -> usize {
    STATE * (cfg.n_p + 1) + INPUT * j
}

impl ShootingProblem<'_> {
    pub fn config(&self) -> &HorizonConfig {
        &self.cfg
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Packs a plan's states and inputs into a decision vector.
    pub fn pack(&self, states: &[VehicleState], inputs: &[ControlInput]) -> DVector<f64> {
        let mut z = DVector::zeros(self.dimension());
        for (k, st) in states.iter().enumerate().take(self.cfg.n_p + 1) {
            z.fixed_rows_mut::<4>(STATE * k).copy_from(&st.to_vector());
        }
        for (j, u) in inputs.iter().enumerate().take(self.cfg.n_c) {
            z.fixed_rows_mut::<3>(input_offset(&self.cfg, j)).copy_from(&u.to_vector());
        }
        z
    }

    pub fn state(&self, z: &DVector<f64>, k: usize) -> VehicleState {
        VehicleState::from_vector(&z.fixed_rows::<4>(STATE * k).into_owned())
    }

    pub fn input(&self, z: &DVector<f64>, j: usize) -> ControlInput {
        ControlInput::from_vector(&z.fixed_rows::<3>(input_offset(&self.cfg, j)).into_owned())
    }

    /// Plan view of a decision vector, with per-stage errors filled in.
    pub fn unpack(&self, z: &DVector<f64>) -> HorizonPlan {
        let states: Vec<VehicleState> = (0..=self.cfg.n_p).map(|k| self.state(z, k)).collect();
        let inputs = (0..self.cfg.n_c).map(|j| self.input(z, j)).collect();
        let (contour_errors, lag_errors) = states.iter().map(|s| super::contour_lag_errors(s, self.track)).unzip();
        HorizonPlan { states, inputs, contour_errors, lag_errors, ..HorizonPlan::default() }
    }

    fn residuals(&self, z: &DVector<f64>) -> Vec<Residual> {
        let cfg = &self.cfg;
        let w = &self.weights;
        let mut out = Vec::with_capacity(8 * cfg.n_p + 6 * cfg.n_c + 3);
        let slack = w.slack_penalty.sqrt();

        for k in 1..=cfg.n_p {
            let o = STATE * k;
            let (x, y, s) = (z[o], z[o + 1], z[o + 3]);
            let r = self.track.reference(s);
            let th = r.pose.heading;
            let (sin, cos) = th.sin_cos();
            let (con, lag) = errors_against(x, y, r.pose.x, r.pose.y, th);
            // Heading is piecewise constant in s, so d(con)/ds = 0 and d(lag)/ds = 1.
            let gc = [sin, -cos, 0.0];
            let qc = w.q_con.sqrt();
            let ql = w.q_lag.sqrt();
            out.push(Residual {
                value: qc * con,
                idx: [o, o + 1, o + 3, 0],
                grad: [qc * gc[0], qc * gc[1], 0.0, 0.0],
                nnz: 3,
            });
            out.push(Residual {
                value: ql * lag,
                idx: [o, o + 1, o + 3, 0],
                grad: [-ql * cos, -ql * sin, ql, 0.0],
                nnz: 3,
            });
            let right = con - (r.half_width_right - cfg.boundary_margin);
            if right > 0.0 {
                out.push(Residual {
                    value: slack * right,
                    idx: [o, o + 1, o + 3, 0],
                    grad: [slack * gc[0], slack * gc[1], -slack * r.d_right_ds, 0.0],
                    nnz: 3,
                });
            }
            let left = -con - (r.half_width_left - cfg.boundary_margin);
            if left > 0.0 {
                out.push(Residual {
                    value: slack * left,
                    idx: [o, o + 1, o + 3, 0],
                    grad: [-slack * gc[0], -slack * gc[1], -slack * r.d_left_ds, 0.0],
                    nnz: 3,
                });
            }
        }

        for j in 0..cfg.n_c {
            let o = input_offset(cfg, j);
            for i in 0..INPUT {
                if w.r1[i] > 0.0 {
                    let r1 = w.r1[i].sqrt();
                    if j > 0 {
                        let p = input_offset(cfg, j - 1) + i;
                        out.push(Residual::pair(r1 * (z[o + i] - z[p]), o + i, r1, p, -r1));
                    } else if let Some(prev) = self.previous {
                        out.push(Residual::single(r1 * (z[o + i] - prev[i]), o + i, r1));
                    }
                }
                if w.r2[i] > 0.0 {
                    let r2 = w.r2[i].sqrt();
                    out.push(Residual::single(r2 * (z[o + i] - w.u_ref[i]), o + i, r2));
                }
            }
        }

        if self.mode == Mode::Cimpcc {
            for (k, &beta) in self.betas.iter().enumerate() {
                let o = input_offset(cfg, cfg.input_index(k));
                for (m, var) in [(0, o), (1, o + 2)] {
                    let safe = ((1.0 - beta) * w.r3[m]).sqrt();
                    let aggressive = (beta * w.r3[m]).sqrt();
                    if safe > 0.0 {
                        out.push(Residual::single(safe * (z[var] - self.bounds.v_under[m]), var, safe));
                    }
                    if aggressive > 0.0 {
                        out.push(Residual::single(aggressive * (z[var] - self.bounds.v_bar[m]), var, aggressive));
                    }
                }
            }
        }
        out
    }

    fn progress_reward(&self, z: &DVector<f64>) -> f64 {
        (0..self.cfg.n_p).map(|k| z[input_offset(&self.cfg, self.cfg.input_index(k)) + 2]).sum::<f64>()
            * (-self.weights.gamma * self.cfg.t_s)
    }

    /// Shooting defects `x_{k+1} - f_d(x_k, u_k)`, max-norm.
    pub fn max_defect(&self, z: &DVector<f64>) -> f64 {
        self.equalities(z).rows(STATE, STATE * self.cfg.n_p).amax()
    }
}

impl NlpProblem for ShootingProblem<'_> {
    fn dimension(&self) -> usize {
        dimension(&self.cfg)
    }

    fn num_equalities(&self) -> usize {
        STATE * (self.cfg.n_p + 1)
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        self.residuals(z).iter().map(|r| r.value * r.value).sum::<f64>() + self.progress_reward(z)
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dimension());
        for r in self.residuals(z) {
            for a in 0..r.nnz {
                g[r.idx[a]] += 2.0 * r.value * r.grad[a];
            }
        }
        for k in 0..self.cfg.n_p {
            g[input_offset(&self.cfg, self.cfg.input_index(k)) + 2] -= self.weights.gamma * self.cfg.t_s;
        }
        g
    }

    fn hessian_model(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dimension();
        let mut h = DMatrix::zeros(n, n);
        for r in self.residuals(z) {
            for a in 0..r.nnz {
                for b in 0..r.nnz {
                    h[(r.idx[a], r.idx[b])] += 2.0 * r.grad[a] * r.grad[b];
                }
            }
        }
        h
    }

    fn equalities(&self, z: &DVector<f64>) -> DVector<f64> {
        let cfg = &self.cfg;
        let mut c = DVector::zeros(self.num_equalities());
        c.fixed_rows_mut::<4>(0).copy_from(&(z.fixed_rows::<4>(0) - self.initial.to_vector()));
        for k in 0..cfg.n_p {
            let x = z.fixed_rows::<4>(STATE * k).into_owned();
            let u = z.fixed_rows::<3>(input_offset(cfg, cfg.input_index(k))).into_owned();
            let next = rk4_raw(&x, &u, self.wheelbase, cfg.t_s);
            c.fixed_rows_mut::<4>(STATE * (k + 1)).copy_from(&(z.fixed_rows::<4>(STATE * (k + 1)) - next));
        }
        c
    }

    fn equality_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let cfg = &self.cfg;
        let mut a = DMatrix::zeros(self.num_equalities(), self.dimension());
        for i in 0..STATE {
            a[(i, i)] = 1.0;
        }
        for k in 0..cfg.n_p {
            let x = z.fixed_rows::<4>(STATE * k).into_owned();
            let uo = input_offset(cfg, cfg.input_index(k));
            let u = z.fixed_rows::<3>(uo).into_owned();
            let (_, dx, du) = rk4_with_jacobians(&x, &u, self.wheelbase, cfg.t_s);
            let row = STATE * (k + 1);
            for i in 0..STATE {
                a[(row + i, row + i)] = 1.0;
            }
            // Several stages may share one input past the control horizon.
            let mut block = a.view_mut((row, STATE * k), (4, 4));
            block -= dx;
            let mut block = a.view_mut((row, uo), (4, 3));
            block -= du;
        }
        a
    }
}
