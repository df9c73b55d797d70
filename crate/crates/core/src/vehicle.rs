//! Kinematic bicycle model augmented with the centerline progress state.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Matrix4x3, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of RK4 substeps the plant takes per control period.
pub const PLANT_SUBSTEPS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("steering angle {0} rad is at or beyond the tan singularity")]
    SteeringSingularity(f64),
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(String),
}

/// Pose plus progress along the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub progress: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, progress: f64) -> Self {
        Self { x, y, heading, progress }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.heading, self.progress)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Body velocity, steering angle and progress velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub v_l: f64,
    pub delta: f64,
    pub v_p: f64,
}

impl ControlInput {
    pub fn new(v_l: f64, delta: f64, v_p: f64) -> Self {
        Self { v_l, delta, v_p }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.v_l, self.delta, self.v_p)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.v_l, self.delta, self.v_p]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub wheelbase: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { wheelbase: 0.324 }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        if self.wheelbase > 0.0 && self.wheelbase.is_finite() {
            Ok(())
        } else {
            Err(VehicleError::InvalidParams(format!("wheelbase {} must be > 0", self.wheelbase)))
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn check_steering(delta: f64) -> Result<(), VehicleError> {
    if delta.abs() < PI / 2.0 {
        Ok(())
    } else {
        Err(VehicleError::SteeringSingularity(delta))
    }
}

/// State time-derivative `(x', y', heading', progress')`.
pub fn dynamics(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<Vector4<f64>, VehicleError> {
    check_steering(input.delta)?;
    Ok(rhs(&state.to_vector(), &input.to_vector(), params.wheelbase))
}

fn rhs(z: &Vector4<f64>, u: &Vector3<f64>, wheelbase: f64) -> Vector4<f64> {
    let (s, c) = z[2].sin_cos();
    Vector4::new(c * u[0], s * u[0], u[1].tan() / wheelbase * u[0], u[2])
}

fn rhs_jacobians(z: &Vector4<f64>, u: &Vector3<f64>, wheelbase: f64) -> (Matrix4<f64>, Matrix4x3<f64>) {
    let (s, c) = z[2].sin_cos();
    let mut a = Matrix4::zeros();
    a[(0, 2)] = -s * u[0];
    a[(1, 2)] = c * u[0];
    let t = u[1].tan();
    let mut b = Matrix4x3::zeros();
    b[(0, 0)] = c;
    b[(1, 0)] = s;
    b[(2, 0)] = t / wheelbase;
    b[(2, 1)] = u[0] * (1.0 + t * t) / wheelbase;
    b[(3, 2)] = 1.0;
    (a, b)
}

/// One classical RK4 step without heading wrap. This is the discretized
/// dynamics used by the planner.
pub fn rk4_raw(z: &Vector4<f64>, u: &Vector3<f64>, wheelbase: f64, dt: f64) -> Vector4<f64> {
    let k1 = rhs(z, u, wheelbase);
    let k2 = rhs(&(z + k1 * (0.5 * dt)), u, wheelbase);
    let k3 = rhs(&(z + k2 * (0.5 * dt)), u, wheelbase);
    let k4 = rhs(&(z + k3 * dt), u, wheelbase);
    z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// RK4 step with its sensitivities with respect to state and input.
pub fn rk4_with_jacobians(
    z: &Vector4<f64>,
    u: &Vector3<f64>,
    wheelbase: f64,
    dt: f64,
) -> (Vector4<f64>, Matrix4<f64>, Matrix4x3<f64>) {
    let id = Matrix4::<f64>::identity();
    let h = dt;

    let k1 = rhs(z, u, wheelbase);
    let (a1, b1) = rhs_jacobians(z, u, wheelbase);
    let dk1_dz = a1;
    let dk1_du = b1;

    let z2 = z + k1 * (0.5 * h);
    let k2 = rhs(&z2, u, wheelbase);
    let (a2, b2) = rhs_jacobians(&z2, u, wheelbase);
    let dk2_dz = a2 * (id + dk1_dz * (0.5 * h));
    let dk2_du = a2 * dk1_du * (0.5 * h) + b2;

    let z3 = z + k2 * (0.5 * h);
    let k3 = rhs(&z3, u, wheelbase);
    let (a3, b3) = rhs_jacobians(&z3, u, wheelbase);
    let dk3_dz = a3 * (id + dk2_dz * (0.5 * h));
    let dk3_du = a3 * dk2_du * (0.5 * h) + b3;

    let z4 = z + k3 * h;
    let k4 = rhs(&z4, u, wheelbase);
    let (a4, b4) = rhs_jacobians(&z4, u, wheelbase);
    let dk4_dz = a4 * (id + dk3_dz * h);
    let dk4_du = a4 * dk3_du * h + b4;

    let next = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let dz = id + (dk1_dz + dk2_dz * 2.0 + dk3_dz * 2.0 + dk4_dz) * (h / 6.0);
    let du = (dk1_du + dk2_du * 2.0 + dk3_du * 2.0 + dk4_du) * (h / 6.0);
    (next, dz, du)
}

/// One RK4 step with the input held over `dt`; the heading is wrapped.
pub fn rk4_step(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, VehicleError> {
    check_steering(input.delta)?;
    let mut next = VehicleState::from_vector(&rk4_raw(&state.to_vector(), &input.to_vector(), params.wheelbase, dt));
    next.heading = wrap_angle(next.heading);
    Ok(next)
}

/// Zero-mean Gaussian actuation noise on `v_l` and `delta`, with its own
/// seeded stream.
#[derive(Debug, Clone)]
pub struct Disturbance {
    v_l_std: f64,
    delta_std: f64,
    rng: ChaCha8Rng,
}

impl Disturbance {
    pub fn new(v_l_std: f64, delta_std: f64, seed: u64) -> Self {
        Self { v_l_std, delta_std, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn is_silent(&self) -> bool {
        self.v_l_std == 0.0 && self.delta_std == 0.0
    }

    fn perturb(&mut self, input: &ControlInput) -> ControlInput {
        let mut out = *input;
        if self.v_l_std > 0.0 {
            out.v_l += Normal::new(0.0, self.v_l_std).expect("finite std").sample(&mut self.rng);
        }
        if self.delta_std > 0.0 {
            out.delta += Normal::new(0.0, self.delta_std).expect("finite std").sample(&mut self.rng);
        }
        out
    }
}

/// Simulated vehicle: the same kinematics integrated at `dt / PLANT_SUBSTEPS`,
/// with optional actuation noise drawn once per call.
pub fn plant_step(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
    disturbance: Option<&mut Disturbance>,
) -> Result<VehicleState, VehicleError> {
    let applied = match disturbance {
        Some(d) if !d.is_silent() => d.perturb(input),
        _ => *input,
    };
    check_steering(applied.delta)?;
    let h = dt / PLANT_SUBSTEPS as f64;
    let u = applied.to_vector();
    let mut z = state.to_vector();
    for _ in 0..PLANT_SUBSTEPS {
        z = rk4_raw(&z, &u, params.wheelbase, h);
    }
    let mut next = VehicleState::from_vector(&z);
    next.heading = wrap_angle(next.heading);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L: f64 = 0.324;

    fn params() -> VehicleParams {
        VehicleParams { wheelbase: L }
    }

    #[test]
    fn dynamics_examples() {
        let rest = dynamics(&VehicleState::new(1.0, 2.0, 0.3, 4.0), &ControlInput::default(), &params()).unwrap();
        assert_eq!(rest, Vector4::zeros());
        let straight = dynamics(&VehicleState::default(), &ControlInput::new(1.0, 0.0, 0.7), &params()).unwrap();
        assert_eq!(straight, Vector4::new(1.0, 0.0, 0.0, 0.7));
        let turn = dynamics(&VehicleState::default(), &ControlInput::new(2.0, 0.35, 0.0), &params()).unwrap();
        assert!((turn[2] - 2.0 * 0.35f64.tan() / L).abs() < 1e-12);
        assert!((turn[2] - 2.25326).abs() < 1e-5);
        assert!(matches!(
            dynamics(&VehicleState::default(), &ControlInput::new(1.0, PI / 2.0, 0.0), &params()),
            Err(VehicleError::SteeringSingularity(_))
        ));
    }

    #[test]
    fn rk4_examples() {
        let s = VehicleState::new(0.5, -0.2, 1.0, 3.0);
        assert_eq!(rk4_step(&s, &ControlInput::default(), &params(), 0.1).unwrap(), s);

        let moved = rk4_step(&VehicleState::default(), &ControlInput::new(1.0, 0.0, 0.0), &params(), 0.1).unwrap();
        assert!((moved.x - 0.1).abs() < 1e-15 && moved.y == 0.0);

        let turned = rk4_step(&VehicleState::default(), &ControlInput::new(1.0, 0.2, 0.0), &params(), 0.05).unwrap();
        let oracle = 0.2f64.tan() / L * 0.05;
        assert!((turned.heading - oracle).abs() < 1e-8);
        assert!((oracle - 0.0312824).abs() < 1e-7);
    }

    #[test]
    fn rk4_jacobians_match_finite_differences() {
        let z = Vector4::new(0.3, -1.2, 2.9, 5.0);
        let u = Vector3::new(3.1, -0.27, 2.8);
        let dt = 0.05;
        let (next, dz, du) = rk4_with_jacobians(&z, &u, L, dt);
        assert!((next - rk4_raw(&z, &u, L, dt)).norm() < 1e-15);
        let h = 1e-6;
        for j in 0..4 {
            let mut zp = z;
            let mut zm = z;
            zp[j] += h;
            zm[j] -= h;
            let fd = (rk4_raw(&zp, &u, L, dt) - rk4_raw(&zm, &u, L, dt)) / (2.0 * h);
            assert!((fd - dz.column(j)).amax() < 1e-8, "state column {j}");
        }
        for j in 0..3 {
            let mut up = u;
            let mut um = u;
            up[j] += h;
            um[j] -= h;
            let fd = (rk4_raw(&z, &up, L, dt) - rk4_raw(&z, &um, L, dt)) / (2.0 * h);
            assert!((fd - du.column(j)).amax() < 1e-8, "input column {j}");
        }
    }

    #[test]
    fn plant_matches_single_step_integrator() {
        let s = VehicleState::new(1.0, 2.0, -2.5, 7.0);
        let u = ControlInput::new(3.0, 0.3, 2.9);
        let coarse = rk4_step(&s, &u, &params(), 0.05).unwrap();
        let fine = plant_step(&s, &u, &params(), 0.05, None).unwrap();
        assert!((coarse.to_vector() - fine.to_vector()).amax() < 1e-6);

        let mut silent = Disturbance::new(0.0, 0.0, 3);
        assert_eq!(plant_step(&s, &u, &params(), 0.05, Some(&mut silent)).unwrap(), fine);
    }

    #[test]
    fn seeded_disturbance_is_reproducible() {
        let run = || {
            let mut d = Disturbance::new(0.1, 0.02, 42);
            let mut s = VehicleState::default();
            for _ in 0..50 {
                s = plant_step(&s, &ControlInput::new(2.0, 0.1, 2.0), &params(), 0.05, Some(&mut d)).unwrap();
            }
            s
        };
        let a = run();
        let b = run();
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.heading.to_bits(), b.heading.to_bits());
        let clean = (0..50).fold(VehicleState::default(), |s, _| {
            plant_step(&s, &ControlInput::new(2.0, 0.1, 2.0), &params(), 0.05, None).unwrap()
        });
        assert_ne!(a, clean);
    }

    #[test]
    fn rk4_convergence_order() {
        let u = Vector3::new(2.0, 0.3, 1.0);
        let z0 = Vector4::new(0.0, 0.0, 0.2, 0.0);
        let horizon = 1.0;
        let integrate = |steps: usize| {
            let dt = horizon / steps as f64;
            (0..steps).fold(z0, |z, _| rk4_raw(&z, &u, L, dt))
        };
        let base = 10;
        let reference = integrate(base * 1000);
        let e1 = (integrate(base) - reference).norm();
        let e2 = (integrate(2 * base) - reference).norm();
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    proptest! {
        #[test]
        fn heading_stays_wrapped(h in -20.0f64..20.0, v in -5.0f64..5.0, d in -0.35f64..0.35, dt in 0.001f64..0.5) {
            let s = VehicleState::new(0.0, 0.0, h, 0.0);
            let n = rk4_step(&s, &ControlInput::new(v, d, 1.0), &params(), dt).unwrap();
            prop_assert!(n.heading > -PI && n.heading <= PI);
        }

        #[test]
        fn progress_ignores_body_inputs(v in -5.0f64..5.0, d in -0.35f64..0.35, vp in -5.0f64..5.0) {
            let s = VehicleState::new(1.0, 1.0, 0.4, 2.0);
            let a = rk4_step(&s, &ControlInput::new(v, d, vp), &params(), 0.05).unwrap();
            let b = rk4_step(&s, &ControlInput::new(-v + 1.0, -d * 0.5, vp), &params(), 0.05).unwrap();
            prop_assert_eq!(a.progress, b.progress);
        }
    }
}
