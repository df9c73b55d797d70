//! Sequential quadratic programming for smooth problems with equality
//! constraints and simple variable bounds.
//!
//! Each iteration builds a convex quadratic model from the problem's curvature
//! model (Gauss-Newton for least-squares objectives), linearizes the
//! equalities, solves the bounded QP in [`qp`], and backtracks on the
//! exact-penalty merit `f(z) + nu * |c(z)|_1`. Iterates never leave the box.

pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use web_time::Instant;

use qp::{Activity, BoundedQp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
}

/// A smooth nonlinear program
///
/// ```text
/// min f(z)   s.t.   c(z) = 0,   lower <= z <= upper
/// ```
///
/// with analytic first derivatives and a positive semidefinite curvature
/// model of `f`.
pub trait NlpProblem {
    fn dimension(&self) -> usize;
    fn num_equalities(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];
    fn objective(&self, z: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
    /// Curvature model of the objective used in the QP (need not include
    /// constraint curvature).
    fn hessian_model(&self, z: &DVector<f64>) -> DMatrix<f64>;
    fn equalities(&self, z: &DVector<f64>) -> DVector<f64>;
    fn equality_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianStrategy {
    GaussNewton,
    /// Gauss-Newton plus the positive part of the finite-difference diagonal
    /// of the Lagrangian Hessian. Costs two gradient evaluations per variable.
    ExactDiagonalRegularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// Seconds.
    pub max_wall_time: f64,
    pub hessian_strategy: HessianStrategy,
    /// Levenberg term added to the curvature model.
    pub regularization: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-6,
            max_iterations: 100,
            max_wall_time: 0.05,
            hessian_strategy: HessianStrategy::GaussNewton,
            regularization: 1e-8,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.kkt_tolerance > 0.0) || self.max_iterations == 0 || !(self.max_wall_time > 0.0) {
            return Err(SolverError::InvalidSettings(
                "tolerance, iteration budget and wall-time budget must be positive".into(),
            ));
        }
        if !(self.regularization >= 0.0) {
            return Err(SolverError::InvalidSettings("regularization must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Converged,
    IterationLimit,
    TimeLimit,
    NumericalFailure,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::IterationLimit => "iteration_limit",
            SolverStatus::TimeLimit => "time_limit",
            SolverStatus::NumericalFailure => "numerical_failure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "converged" => SolverStatus::Converged,
            "iteration_limit" => SolverStatus::IterationLimit,
            "time_limit" => SolverStatus::TimeLimit,
            "numerical_failure" => SolverStatus::NumericalFailure,
            _ => return None,
        })
    }
}

/// Merit values around one accepted step, both under the same penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritStep {
    pub penalty: f64,
    pub before: f64,
    pub after: f64,
    pub step_length: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub point: DVector<f64>,
    pub objective_value: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub status: SolverStatus,
    pub multipliers: DVector<f64>,
    pub merit_log: Vec<MeritStep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// Max-norm of the projected Lagrangian gradient.
    pub stationarity: f64,
    /// Max-norm of equality residuals and bound violations.
    pub violation: f64,
}

/// First-order optimality measures at `z`, with equality multipliers fitted
/// by least squares on the variables that are not at a bound.
pub fn kkt_residual<P: NlpProblem + ?Sized>(problem: &P, z: &DVector<f64>) -> Result<KktResidual, SolverError> {
    check_dimension(problem, z)?;
    let g = problem.gradient(z);
    let a = problem.equality_jacobian(z);
    let c = problem.equalities(z);
    Ok(kkt_measure(&g, &a, &c, z, problem.lower_bounds(), problem.upper_bounds()).0)
}

fn check_dimension<P: NlpProblem + ?Sized>(problem: &P, z: &DVector<f64>) -> Result<(), SolverError> {
    let n = problem.dimension();
    if z.len() != n || problem.lower_bounds().len() != n || problem.upper_bounds().len() != n {
        return Err(SolverError::DimensionMismatch(format!(
            "problem has {n} variables, candidate has {}, bounds have {}/{}",
            z.len(),
            problem.lower_bounds().len(),
            problem.upper_bounds().len()
        )));
    }
    Ok(())
}

fn at_bound(v: f64, bound: f64) -> bool {
    bound.is_finite() && (v - bound).abs() <= 1e-9 * (1.0 + bound.abs())
}

fn kkt_measure(
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    z: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
) -> (KktResidual, DVector<f64>) {
    let n = z.len();
    let m = c.len();
    let mut violation = c.amax();
    for i in 0..n {
        violation = violation.max(lo[i] - z[i]).max(z[i] - hi[i]);
    }
    let free: Vec<usize> = (0..n).filter(|&i| !at_bound(z[i], lo[i]) && !at_bound(z[i], hi[i])).collect();
    let lambda = if m == 0 { DVector::zeros(0) } else { least_squares_multipliers(g, a, &free) };
    let r = g - a.transpose() * &lambda;
    let mut stationarity: f64 = 0.0;
    for i in 0..n {
        let ri = if at_bound(z[i], lo[i]) {
            r[i].min(0.0)
        } else if at_bound(z[i], hi[i]) {
            r[i].max(0.0)
        } else {
            r[i]
        };
        stationarity = stationarity.max(ri.abs());
    }
    if !stationarity.is_finite() || !violation.is_finite() {
        stationarity = f64::INFINITY;
    }
    (KktResidual { stationarity, violation }, lambda)
}

fn least_squares_multipliers(g: &DVector<f64>, a: &DMatrix<f64>, free: &[usize]) -> DVector<f64> {
    let m = a.nrows();
    let af = a.select_columns(free);
    let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
    let normal = &af * af.transpose();
    let rhs = &af * &gf;
    if let Some(ch) = normal.clone().cholesky() {
        let sol = ch.solve(&rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return sol;
        }
    }
    af.transpose().svd(true, true).solve(&gf, 1e-12).unwrap_or_else(|_| DVector::zeros(m))
}

struct Linearization {
    f: f64,
    g: DVector<f64>,
    c: DVector<f64>,
    a: DMatrix<f64>,
}

impl Linearization {
    fn at<P: NlpProblem + ?Sized>(problem: &P, z: &DVector<f64>) -> Self {
        Self {
            f: problem.objective(z),
            g: problem.gradient(z),
            c: problem.equalities(z),
            a: problem.equality_jacobian(z),
        }
    }

    fn finite(&self) -> bool {
        self.f.is_finite()
            && self.g.iter().all(|v| v.is_finite())
            && self.c.iter().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
    }
}

fn l1(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Solves `problem` from `guess` (which may violate the equalities; it is
/// clipped into the bounds first).
pub fn solve<P: NlpProblem + ?Sized>(
    problem: &P,
    guess: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<Solution, SolverError> {
    settings.validate()?;
    check_dimension(problem, guess)?;
    let start = Instant::now();
    let n = problem.dimension();
    let lo = DVector::from_column_slice(problem.lower_bounds());
    let hi = DVector::from_column_slice(problem.upper_bounds());
    if problem.num_equalities() != problem.equalities(guess).len() {
        return Err(SolverError::DimensionMismatch("equality count disagrees with evaluation".into()));
    }

    let mut z = guess.zip_zip_map(&lo, &hi, |v, l, h| v.max(l).min(h));
    let mut lin = Linearization::at(problem, &z);
    let mut penalty: f64 = 0.0;
    let mut active: Vec<Activity> = (0..n)
        .map(|i| {
            if at_bound(z[i], lo[i]) && lin.g[i] > 0.0 {
                Activity::Lower
            } else if at_bound(z[i], hi[i]) && lin.g[i] < 0.0 {
                Activity::Upper
            } else {
                Activity::Free
            }
        })
        .collect();
    let mut merit_log = Vec::new();
    let mut iterations = 0;
    let mut stalled = 0;

    let finish = |z: DVector<f64>, lin: &Linearization, status, iterations, merit_log, start: Instant| {
        let (res, lambda) = kkt_measure(&lin.g, &lin.a, &lin.c, &z, problem.lower_bounds(), problem.upper_bounds());
        Solution {
            objective_value: lin.f,
            point: z,
            kkt_residual: res.stationarity,
            constraint_violation: res.violation,
            iterations,
            wall_time: start.elapsed().as_secs_f64(),
            status,
            multipliers: lambda,
            merit_log,
        }
    };

    loop {
        if !lin.finite() {
            return Ok(finish(z, &lin, SolverStatus::NumericalFailure, iterations, merit_log, start));
        }
        let (res, _) = kkt_measure(&lin.g, &lin.a, &lin.c, &z, problem.lower_bounds(), problem.upper_bounds());
        if res.stationarity <= settings.kkt_tolerance && res.violation <= settings.kkt_tolerance {
            return Ok(finish(z, &lin, SolverStatus::Converged, iterations, merit_log, start));
        }
        if iterations >= settings.max_iterations {
            return Ok(finish(z, &lin, SolverStatus::IterationLimit, iterations, merit_log, start));
        }
        if start.elapsed().as_secs_f64() >= settings.max_wall_time {
            return Ok(finish(z, &lin, SolverStatus::TimeLimit, iterations, merit_log, start));
        }

        let mut h = problem.hessian_model(&z);
        if settings.hessian_strategy == HessianStrategy::ExactDiagonalRegularized {
            add_diagonal_curvature(problem, &z, &lin, &mut h);
        }
        for i in 0..n {
            h[(i, i)] += settings.regularization;
        }
        let b = -&lin.c;
        let dlo = &lo - &z;
        let dhi = &hi - &z;
        let qp = BoundedQp { h: &h, g: &lin.g, a: &lin.a, b: &b, lo: &dlo, hi: &dhi };
        let Some(sol) = qp.solve(&active) else {
            return Ok(finish(z, &lin, SolverStatus::NumericalFailure, iterations, merit_log, start));
        };
        active = sol.active.clone();
        let d = sol.step;

        let lambda_max = sol.multipliers.amax();
        if penalty < lambda_max * 1.1 + 1e-6 {
            penalty = lambda_max * 2.0 + 1e-3;
        }
        let merit0 = lin.f + penalty * l1(&lin.c);
        let slope = lin.g.dot(&d) - penalty * l1(&lin.c);

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-10 {
            let trial = (&z + &d * alpha).zip_zip_map(&lo, &hi, |v, l, h| v.max(l).min(h));
            let f = problem.objective(&trial);
            let c = problem.equalities(&trial);
            let merit = f + penalty * l1(&c);
            if merit.is_finite() && merit <= merit0 + 1e-4 * alpha * slope.min(0.0) {
                accepted = Some((trial, merit));
                break;
            }
            // Second-order correction for the full step.
            if alpha == 1.0 && l1(&c) > 0.0 {
                if let Some(corrected) = second_order_correction(&lin.a, &c, &trial, &lo, &hi, &active) {
                    let fc = problem.objective(&corrected);
                    let cc = problem.equalities(&corrected);
                    let mc = fc + penalty * l1(&cc);
                    if mc.is_finite() && mc <= merit0 + 1e-4 * slope.min(0.0) {
                        accepted = Some((corrected, mc));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((next, merit)) = accepted else {
            // No decrease along the step: the model and the merit disagree
            // only at round-off level, so report the current point.
            return Ok(finish(z, &lin, SolverStatus::IterationLimit, iterations, merit_log, start));
        };
        merit_log.push(MeritStep { penalty, before: merit0, after: merit, step_length: alpha });
        z = next;
        lin = Linearization::at(problem, &z);
        iterations += 1;
        // Progress below working precision twice in a row: stop rather than
        // spend the budget on round-off.
        if merit0 - merit <= 1e-14 * merit0.abs().max(1.0) {
            stalled += 1;
            if stalled >= 2 {
                return Ok(finish(z, &lin, SolverStatus::IterationLimit, iterations, merit_log, start));
            }
        } else {
            stalled = 0;
        }
    }
}

fn second_order_correction(
    a: &DMatrix<f64>,
    c_trial: &DVector<f64>,
    trial: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    active: &[Activity],
) -> Option<DVector<f64>> {
    // minimum-norm correction over the free variables: A_F dz = -c(trial)
    let free: Vec<usize> = (0..trial.len()).filter(|&i| active[i] == Activity::Free).collect();
    let af = a.select_columns(&free);
    let y = (&af * af.transpose()).cholesky()?.solve(&(-c_trial));
    let dz = af.transpose() * y;
    let mut out = trial.clone();
    for (k, &i) in free.iter().enumerate() {
        out[i] = (out[i] + dz[k]).clamp(lo[i], hi[i]);
    }
    Some(out)
}

fn add_diagonal_curvature<P: NlpProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    lin: &Linearization,
    h: &mut DMatrix<f64>,
) {
    let (_, lambda) = kkt_measure(&lin.g, &lin.a, &lin.c, z, problem.lower_bounds(), problem.upper_bounds());
    let lagrangian_grad = |p: &DVector<f64>| problem.gradient(p) - problem.equality_jacobian(p).transpose() * &lambda;
    for i in 0..z.len() {
        let step = 1e-6 * (1.0 + z[i].abs());
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[i] += step;
        zm[i] -= step;
        let curvature = (lagrangian_grad(&zp)[i] - lagrangian_grad(&zm)[i]) / (2.0 * step);
        if curvature.is_finite() {
            let extra = curvature - h[(i, i)];
            if extra > 0.0 {
                h[(i, i)] += extra;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min sum (z - target)^2 + equality rows A z = rhs, bounds.
    struct Quadratic {
        target: Vec<f64>,
        a: DMatrix<f64>,
        rhs: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    }

    impl Quadratic {
        fn unconstrained(target: Vec<f64>) -> Self {
            let n = target.len();
            Self {
                target,
                a: DMatrix::zeros(0, n),
                rhs: vec![],
                lo: vec![f64::NEG_INFINITY; n],
                hi: vec![f64::INFINITY; n],
            }
        }
    }

    impl NlpProblem for Quadratic {
        fn dimension(&self) -> usize {
            self.target.len()
        }
        fn num_equalities(&self) -> usize {
            self.rhs.len()
        }
        fn lower_bounds(&self) -> &[f64] {
            &self.lo
        }
        fn upper_bounds(&self) -> &[f64] {
            &self.hi
        }
        fn objective(&self, z: &DVector<f64>) -> f64 {
            z.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum()
        }
        fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
            DVector::from_iterator(z.len(), z.iter().zip(&self.target).map(|(a, b)| 2.0 * (a - b)))
        }
        fn hessian_model(&self, z: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_diagonal_element(z.len(), z.len(), 2.0)
        }
        fn equalities(&self, z: &DVector<f64>) -> DVector<f64> {
            &self.a * z - DVector::from_column_slice(&self.rhs)
        }
        fn equality_jacobian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
            self.a.clone()
        }
    }

    /// Rosenbrock-style nonlinear residuals on the unit circle.
    struct Circle;

    impl NlpProblem for Circle {
        fn dimension(&self) -> usize {
            2
        }
        fn num_equalities(&self) -> usize {
            1
        }
        fn lower_bounds(&self) -> &[f64] {
            &[f64::NEG_INFINITY, f64::NEG_INFINITY]
        }
        fn upper_bounds(&self) -> &[f64] {
            &[f64::INFINITY, f64::INFINITY]
        }
        fn objective(&self, z: &DVector<f64>) -> f64 {
            (z[0] - 2.0).powi(2) + (z[1] - 1.0).powi(2)
        }
        fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![2.0 * (z[0] - 2.0), 2.0 * (z[1] - 1.0)])
        }
        fn hessian_model(&self, _z: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_diagonal_element(2, 2, 2.0)
        }
        fn equalities(&self, z: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![z[0] * z[0] + z[1] * z[1] - 1.0])
        }
        fn equality_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[2.0 * z[0], 2.0 * z[1]])
        }
    }

    #[test]
    fn unconstrained_quadratic_in_one_step() {
        let p = Quadratic::unconstrained(vec![1.5, -2.0, 7.0]);
        let sol = solve(&p, &DVector::from_vec(vec![100.0, -3.0, 0.0]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Converged);
        assert!(sol.iterations <= 3);
        assert!(sol.kkt_residual <= 1e-6);
        for (a, b) in sol.point.iter().zip([1.5, -2.0, 7.0]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn single_equality() {
        let p = Quadratic {
            target: vec![2.0, 3.0],
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            rhs: vec![1.0],
            lo: vec![f64::NEG_INFINITY; 2],
            hi: vec![f64::INFINITY; 2],
        };
        let sol = solve(&p, &DVector::from_vec(vec![5.0, 5.0]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Converged);
        assert!((sol.point[0]).abs() < 1e-6 && (sol.point[1] - 1.0).abs() < 1e-6);
        assert!((sol.multipliers[0] + 4.0).abs() < 1e-6);
    }

    #[test]
    fn active_upper_bound() {
        let mut p = Quadratic::unconstrained(vec![5.0]);
        p.lo = vec![0.0];
        p.hi = vec![1.0];
        let sol = solve(&p, &DVector::from_vec(vec![0.3]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Converged);
        assert!((sol.point[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_equality_converges() {
        let settings = SolverSettings { max_wall_time: 10.0, ..Default::default() };
        let sol = solve(&Circle, &DVector::from_vec(vec![0.1, -0.5]), &settings).unwrap();
        assert_eq!(sol.status, SolverStatus::Converged, "{sol:?}");
        let norm = 5f64.sqrt();
        assert!((sol.point[0] - 2.0 / norm).abs() < 1e-6);
        assert!((sol.point[1] - 1.0 / norm).abs() < 1e-6);
        for step in &sol.merit_log {
            assert!(step.after <= step.before);
        }
        let exact = SolverSettings { hessian_strategy: HessianStrategy::ExactDiagonalRegularized, ..settings };
        let sol2 = solve(&Circle, &DVector::from_vec(vec![0.1, -0.5]), &exact).unwrap();
        assert_eq!(sol2.status, SolverStatus::Converged);
        assert!((sol2.point[0] - 2.0 / norm).abs() < 1e-6);
    }

    #[test]
    fn kkt_residual_examples() {
        let p = Quadratic {
            target: vec![2.0, 3.0],
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            rhs: vec![1.0],
            lo: vec![f64::NEG_INFINITY; 2],
            hi: vec![f64::INFINITY; 2],
        };
        let opt = kkt_residual(&p, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert!(opt.stationarity <= 1e-9 && opt.violation <= 1e-9);
        let feasible = kkt_residual(&p, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(feasible.violation < 1e-12 && feasible.stationarity > 0.1);

        let shifted = Quadratic { rhs: vec![3.0], ..p };
        for z in [[0.0, 1.0], [-4.0, 5.0], [0.75, 0.25]] {
            let r = kkt_residual(&shifted, &DVector::from_vec(z.to_vec())).unwrap();
            assert!((r.violation - 2.0).abs() < 1e-12);
        }
        assert!(matches!(
            kkt_residual(&shifted, &DVector::from_vec(vec![1.0])),
            Err(SolverError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn deterministic_points() {
        let a = solve(&Circle, &DVector::from_vec(vec![-0.3, 0.8]), &SolverSettings::default()).unwrap();
        let b = solve(&Circle, &DVector::from_vec(vec![-0.3, 0.8]), &SolverSettings::default()).unwrap();
        let bits = |s: &Solution| s.point.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
