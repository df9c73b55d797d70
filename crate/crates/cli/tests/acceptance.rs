//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cimpcc_core::harness::{self, parse_telemetry, RaceConfig, RaceOptions, RaceOutcome};
use cimpcc_core::nlp::{solve, NlpProblem, SolverSettings, SolverStatus};
use cimpcc_core::planner::{
    build_nlp, corridor_penalty, eval_j_ci, eval_j_mpcc, HorizonConfig, Mode, PlannerConfig, PlannerWeights,
};
use cimpcc_core::track::compute_raw_curvature;
use cimpcc_core::tracks;
use cimpcc_core::vehicle::{rk4_raw, ControlInput, VehicleParams, VehicleState};
use cimpcc_core::velocity_map::{map_nsc_to_beta, MappingParams, VelocityBounds};
use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn curvature_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for r in [0.5, 1.0, 2.0, 5.0] {
        let kappa = compute_raw_curvature(&tracks::circle(r, 200, 0.2).unwrap()).unwrap();
        worst = kappa.iter().map(|k| (k * r - 1.0).abs()).fold(worst, f64::max);
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst < 0.01 && secs < 1.0, format!("max relative error {worst:.2e}, {secs:.3} s"))
}

fn mapping_endpoints() -> Outcome {
    let mut worst: f64 = 0.0;
    for alpha in [0.5, 1.0, 3.0, 7.5] {
        let p = MappingParams::new(alpha).unwrap();
        worst = worst.max((map_nsc_to_beta(0.0, &p).unwrap() - 1.0).abs());
        worst = worst.max((map_nsc_to_beta(1.0, &p).unwrap() - (-alpha).exp()).abs());
    }
    check(worst <= 1e-15, format!("max endpoint error {worst:.1e}"))
}

fn integrator_order() -> Outcome {
    let start = Instant::now();
    let wheelbase = VehicleParams::default().wheelbase;
    let u = Vector3::new(2.5, 0.3, 2.5);
    let z0 = Vector4::new(0.0, 0.0, 0.0, 0.0);
    let horizon = 1.0;
    let integrate = |steps: usize| {
        let dt = horizon / steps as f64;
        (0..steps).fold(z0, |z, _| rk4_raw(&z, &u, wheelbase, dt))
    };
    let coarse = 20;
    let reference = integrate(coarse * 1000);
    let e1 = (integrate(coarse) - reference).norm();
    let e2 = (integrate(2 * coarse) - reference).norm();
    let order = (e1 / e2).log2();
    let secs = start.elapsed().as_secs_f64();
    check(order >= 3.5 && secs < 5.0, format!("observed order {order:.2}, {secs:.3} s"))
}

/// `sum (z - target)^2` with linear equalities and bounds.
struct Quadratic {
    target: Vec<f64>,
    a: DMatrix<f64>,
    rhs: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
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

fn solver_correctness() -> Outcome {
    let start = Instant::now();
    let free = |n: usize| (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n]);
    let (lo3, hi3) = free(3);
    let (lo2, hi2) = free(2);
    let fixtures = [
        // minimizer is the target
        (
            Quadratic { target: vec![1.5, -2.0, 7.0], a: DMatrix::zeros(0, 3), rhs: vec![], lo: lo3, hi: hi3 },
            vec![100.0, -3.0, 0.0],
            vec![1.5, -2.0, 7.0],
        ),
        // projection of (2, 3) onto z1 + z2 = 1
        (
            Quadratic {
                target: vec![2.0, 3.0],
                a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                rhs: vec![1.0],
                lo: lo2,
                hi: hi2,
            },
            vec![5.0, 5.0],
            vec![0.0, 1.0],
        ),
        // target outside the box, clipped at the upper bound
        (
            Quadratic {
                target: vec![3.0, -1.0],
                a: DMatrix::zeros(0, 2),
                rhs: vec![],
                lo: vec![-5.0, -5.0],
                hi: vec![1.0, 5.0],
            },
            vec![0.0, 0.0],
            vec![1.0, -1.0],
        ),
    ];
    let mut worst_kkt: f64 = 0.0;
    let mut worst_err: f64 = 0.0;
    for (p, guess, optimum) in &fixtures {
        let sol = solve(p, &DVector::from_vec(guess.clone()), &SolverSettings::default()).map_err(|e| e.to_string())?;
        if sol.status != SolverStatus::Converged {
            return Err(format!("status {}", sol.status.as_str()));
        }
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        worst_err = sol.point.iter().zip(optimum).map(|(a, b)| (a - b).abs()).fold(worst_err, f64::max);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_kkt <= 1e-6 && worst_err <= 1e-6 && secs < 1.0,
        format!("max kkt {worst_kkt:.1e}, max error {worst_err:.1e}, {secs:.3} s"),
    )
}

fn objective_equivalence() -> Outcome {
    let track = tracks::stadium_chicane();
    let cfg = HorizonConfig::default();
    let bounds = VelocityBounds::default();
    let wheelbase = VehicleParams::default().wheelbase;
    let previous = ControlInput::new(3.0, 0.05, 2.9);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for mode in [Mode::Mpcc, Mode::Cimpcc] {
        let weights = PlannerWeights::default().effective(mode);
        for _ in 0..100 {
            let beta = rng.random_range(0.05..1.0);
            // random inputs rolled out through the discrete dynamics
            let s0 = rng.random_range(0.0..track.total_length());
            let r = track.sample_at_s(s0);
            let mut x = VehicleState::new(
                r.x + rng.random_range(-0.3..0.3),
                r.y + rng.random_range(-0.3..0.3),
                r.heading + rng.random_range(-0.2..0.2),
                s0,
            );
            let inputs: Vec<ControlInput> = (0..cfg.n_c)
                .map(|_| {
                    ControlInput::new(
                        rng.random_range(0.5..4.5),
                        rng.random_range(-0.35..0.35),
                        rng.random_range(0.5..4.5),
                    )
                })
                .collect();
            let p =
                build_nlp(mode, x, &vec![beta; cfg.n_p], &cfg, &weights, &bounds, &track, wheelbase, Some(previous))
                    .map_err(|e| e.to_string())?;
            let mut states = vec![x];
            for k in 0..cfg.n_p {
                x = VehicleState::from_vector(&rk4_raw(
                    &x.to_vector(),
                    &inputs[cfg.input_index(k)].to_vector(),
                    wheelbase,
                    cfg.t_s,
                ));
                states.push(x);
            }
            let z = p.pack(&states, &inputs);
            let plan = p.unpack(&z);
            let mut expected = eval_j_mpcc(&plan, &weights, &cfg, Some(previous.as_array()))
                .map_err(|e| e.to_string())?
                + corridor_penalty(&plan, &track, &cfg, weights.slack_penalty);
            if mode == Mode::Cimpcc {
                expected += eval_j_ci(&plan, beta, &bounds, weights.r3, &cfg).map_err(|e| e.to_string())?;
            }
            worst = worst.max((p.objective(&z) - expected).abs() / expected.abs().max(1.0));
        }
    }
    check(worst <= 1e-10, format!("200 points, max relative error {worst:.1e}"))
}

fn cimpcc(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_cimpcc")).args(args).env_remove("CIMPCC_SEED").output().map_err(|e| e.to_string())
}

fn run_compare(config: &Path) -> Result<f64, String> {
    let start = Instant::now();
    let out = cimpcc(&["compare", "--config", config.to_str().unwrap()])?;
    if !out.status.success() {
        return Err(format!("compare exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(start.elapsed().as_secs_f64())
}

fn desk_comparison(dir: &Path) -> Outcome {
    let secs = run_compare(&dir.join("run.toml"))?;
    let text = std::fs::read_to_string(dir.join("a/comparison.json")).map_err(|e| e.to_string())?;
    let report: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mean = |who: &str, what: &str| report[who]["stats"][what]["mean"].as_f64().unwrap_or(f64::NAN);
    let (t_base, t_cand) = (mean("baseline", "lap_time"), mean("candidate", "lap_time"));
    let (v_base, v_cand) = (mean("baseline", "velocity"), mean("candidate", "velocity"));
    let laps = report["candidate"]["stats"]["lap_times"].as_array().map_or(0, Vec::len);
    check(
        laps == 5 && t_cand <= 0.95 * t_base && v_cand > v_base && secs < 120.0,
        format!(
            "lap time {t_base:.3} -> {t_cand:.3} s ({}%), velocity {v_base:.3} -> {v_cand:.3} m/s ({}%), {secs:.1} s",
            report["lap_time_improvement_pct"], report["velocity_gain_pct"]
        ),
    )
}

fn load_outcome(path: &Path, mode: Mode) -> Result<RaceOutcome, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let records = parse_telemetry(&text).map_err(|e| e.to_string())?;
    Ok(RaceOutcome { mode, records, boundaries: vec![], stats: None, aborted: None })
}

fn safety(dirs: &[&Path]) -> Outcome {
    let track = tracks::stadium_chicane();
    let config = PlannerConfig::default();
    let (mut cycles, mut corridor, mut bounds) = (0, 0, 0);
    for dir in dirs {
        for (file, mode) in [("telemetry_mpcc.csv", Mode::Mpcc), ("telemetry_cimpcc.csv", Mode::Cimpcc)] {
            let o = load_outcome(&dir.join(file), mode)?;
            cycles += o.records.len();
            corridor += o.corridor_violations(&track);
            bounds += o.bound_violations(&config);
        }
    }
    check(
        cycles > 0 && corridor == 0 && bounds == 0,
        format!("{cycles} cycles, {corridor} corridor violations, {bounds} bound violations"),
    )
}

fn real_time(dir: &Path) -> Outcome {
    let telemetry = dir.join("a/telemetry_cimpcc.csv");
    let out = cimpcc(&["report", "--telemetry", telemetry.to_str().unwrap(), "--json", "--budget", "0.05"])?;
    if !out.status.success() {
        return Err(format!("report failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let report: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let p95 = report["solve_time"]["p95"].as_f64().unwrap_or(f64::INFINITY);
    let max = report["solve_time"]["max"].as_f64().unwrap_or(f64::INFINITY);
    check(p95 < 0.05, format!("p95 {:.2} ms, max {:.2} ms", 1e3 * p95, 1e3 * max))
}

fn median(v: &mut [usize]) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn warm_start() -> Outcome {
    let track = tracks::stadium_chicane();
    let options = RaceOptions { shadow_cold_start: true };
    let mut details = Vec::new();
    let mut ok = true;
    for mode in [Mode::Mpcc, Mode::Cimpcc] {
        let out =
            harness::run_race_with(&track, mode, &RaceConfig::default(), 1, 1, options).map_err(|e| e.to_string())?;
        if out.aborted.is_some() || out.boundaries.len() < 2 {
            return Err(format!("{mode} lap did not complete"));
        }
        let (a, b) = (out.boundaries[0].time, out.boundaries[1].time);
        let lap: Vec<_> = out.records.iter().filter(|r| r.t >= a && r.t < b).collect();
        let mut warm: Vec<usize> = lap.iter().map(|r| r.iterations).collect();
        let mut cold: Vec<usize> = lap.iter().filter_map(|r| r.cold_iterations).collect();
        let (mw, mc) = (median(&mut warm), median(&mut cold));
        ok &= mw <= mc;
        details.push(format!("{mode} median {mw} warm vs {mc} cold"));
    }
    check(ok, details.join(", "))
}

fn determinism(dir: &Path) -> Outcome {
    run_compare(&dir.join("run_b.toml"))?;
    let a = std::fs::read(dir.join("a/comparison.json")).map_err(|e| e.to_string())?;
    let b = std::fs::read(dir.join("b/comparison.json")).map_err(|e| e.to_string())?;
    check(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let base = "n_laps = 5\nseed = 2024\n[mapping]\nalpha = 3.0\n[disturbance]\nv_l_std = 0.0\ndelta_std = 0.0\n";
    std::fs::write(dir.path().join("run.toml"), format!("output_dir = \"a\"\n{base}")).unwrap();
    std::fs::write(dir.path().join("run_b.toml"), format!("output_dir = \"b\"\n{base}")).unwrap();

    let criteria: [Criterion; 10] = [
        ("1 curvature oracle", Box::new(curvature_oracle)),
        ("2 mapping endpoints", Box::new(mapping_endpoints)),
        ("3 integrator order", Box::new(integrator_order)),
        ("4 solver correctness", Box::new(solver_correctness)),
        ("5 objective equivalence", Box::new(objective_equivalence)),
        ("6 desk-scale comparison", Box::new(|| desk_comparison(dir.path()))),
        ("10 determinism", Box::new(|| determinism(dir.path()))),
        ("7 safety", Box::new(|| safety(&[&dir.path().join("a"), &dir.path().join("b")]))),
        ("8 real-time", Box::new(|| real_time(dir.path()))),
        ("9 warm start", Box::new(warm_start)),
    ];
    let mut results: Vec<(&str, Outcome)> = criteria.iter().map(|(name, f)| (*name, f())).collect();
    results.sort_by_key(|(name, _)| name.split(' ').next().unwrap().parse::<u32>().unwrap());
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
