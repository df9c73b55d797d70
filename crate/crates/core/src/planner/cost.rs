//! Standalone evaluators for the planner objective. The NLP builder computes
//! the same quantities from the decision vector; tests hold the two together.

use crate::track::Track;
use crate::vehicle::VehicleState;
use crate::velocity_map::VelocityBounds;

use super::{HorizonConfig, HorizonPlan, PlannerError, PlannerWeights};

/// Contour and lag error of `state` against the reference at its progress.
pub fn contour_lag_errors(state: &VehicleState, track: &Track) -> (f64, f64) {
    let r = track.sample_at_s(state.progress);
    errors_against(state.x, state.y, r.x, r.y, r.heading)
}

pub(crate) fn errors_against(x: f64, y: f64, x_r: f64, y_r: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let (dx, dy) = (x - x_r, y - y_r);
    (s * dx - c * dy, -c * dx - s * dy)
}

fn check_plan(plan: &HorizonPlan, cfg: &HorizonConfig) -> Result<(), PlannerError> {
    let ok = plan.states.len() == cfg.n_p + 1
        && plan.inputs.len() == cfg.n_c
        && plan.contour_errors.len() == cfg.n_p + 1
        && plan.lag_errors.len() == cfg.n_p + 1;
    if ok {
        Ok(())
    } else {
        Err(PlannerError::DimensionMismatch(format!(
            "plan has {} states / {} inputs / {} error stages, horizon expects {} / {}",
            plan.states.len(),
            plan.inputs.len(),
            plan.contour_errors.len(),
            cfg.n_p + 1,
            cfg.n_c
        )))
    }
}

/// MPCC objective: contour/lag errors on stages `1..=n_p`, the progress
/// reward on every stage input, input increments and input deviation from
/// `u_ref`. When `previous` is given, the first increment is taken against it.
pub fn eval_j_mpcc(
    plan: &HorizonPlan,
    weights: &PlannerWeights,
    cfg: &HorizonConfig,
    previous: Option<[f64; 3]>,
) -> Result<f64, PlannerError> {
    check_plan(plan, cfg)?;
    let mut cost = 0.0;
    for k in 1..=cfg.n_p {
        cost += weights.q_con * plan.contour_errors[k].powi(2) + weights.q_lag * plan.lag_errors[k].powi(2);
    }
    for k in 0..cfg.n_p {
        cost -= weights.gamma * plan.inputs[cfg.input_index(k)].v_p * cfg.t_s;
    }
    let quad = |w: &[f64; 3], a: [f64; 3], b: [f64; 3]| (0..3).map(|i| w[i] * (a[i] - b[i]).powi(2)).sum::<f64>();
    if let Some(prev) = previous {
        cost += quad(&weights.r1, plan.inputs[0].as_array(), prev);
    }
    for k in 1..cfg.n_c {
        cost += quad(&weights.r1, plan.inputs[k].as_array(), plan.inputs[k - 1].as_array());
    }
    for u in &plan.inputs {
        cost += quad(&weights.r2, u.as_array(), weights.u_ref);
    }
    Ok(cost)
}

/// Curvature-integrated velocity objective with one blending weight for the
/// whole horizon.
pub fn eval_j_ci(
    plan: &HorizonPlan,
    beta: f64,
    bounds: &VelocityBounds,
    r3: [f64; 2],
    cfg: &HorizonConfig,
) -> Result<f64, PlannerError> {
    eval_j_ci_staged(plan, &vec![beta; cfg.n_p], bounds, r3, cfg)
}

/// As [`eval_j_ci`] with a blending weight per stage.
pub fn eval_j_ci_staged(
    plan: &HorizonPlan,
    betas: &[f64],
    bounds: &VelocityBounds,
    r3: [f64; 2],
    cfg: &HorizonConfig,
) -> Result<f64, PlannerError> {
    check_plan(plan, cfg)?;
    if betas.len() != cfg.n_p {
        return Err(PlannerError::DimensionMismatch(format!(
            "{} blending weights for {} stages",
            betas.len(),
            cfg.n_p
        )));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
        return Err(PlannerError::Configuration(format!("blending weight {b} outside (0, 1]")));
    }
    let mut cost = 0.0;
    for (k, &beta) in betas.iter().enumerate() {
        let u = plan.inputs[cfg.input_index(k)];
        let v = [u.v_l, u.v_p];
        for m in 0..2 {
            cost += (1.0 - beta) * r3[m] * (v[m] - bounds.v_under[m]).powi(2)
                + beta * r3[m] * (v[m] - bounds.v_bar[m]).powi(2);
        }
    }
    Ok(cost)
}

/// Quadratic penalty on corridor violations of stages `1..=n_p`.
pub fn corridor_penalty(plan: &HorizonPlan, track: &Track, cfg: &HorizonConfig, weight: f64) -> f64 {
    plan.states[1..]
        .iter()
        .zip(&plan.contour_errors[1..])
        .map(|(st, &xi)| {
            let r = track.reference(st.progress);
            let right = (xi - (r.half_width_right - cfg.boundary_margin)).max(0.0);
            let left = (-xi - (r.half_width_left - cfg.boundary_margin)).max(0.0);
            weight * (right * right + left * left)
        })
        .sum()
}
