//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3, Vector5};
use purcell_core::integrator::{holonomy, rollout};
use purcell_core::se2::{exp, log, AlgebraVector};
use purcell_core::solver::{objective_and_gradient, solve, verify, Method, ProblemSpec, SolverConfig};
use purcell_core::swimmer::{connection, drag_assembly};
use purcell_core::{AbnormalityFlag, DiscretizationParams, GroupElement, ShapeState, Solution, SwimmerGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TERMINAL_TOLERANCE: f64 = 1e-6;
const PMP_TOLERANCE: f64 = 1e-6;
const GRADIENT_TOLERANCE: f64 = 1e-6;
const HOLONOMY_TOLERANCE: f64 = 1e-13;
const ROUNDTRIP_TOLERANCE: f64 = 1e-12;
const QUADRATURE_TOLERANCE: f64 = 1e-8;
const AXIAL_TOLERANCE: f64 = 1e-12;
const MIRROR_TOLERANCE: f64 = 1e-10;
const CROSS_SOLVER_TOLERANCE: f64 = 1e-3;
const CROSS_SOLVER_BUDGET: Duration = Duration::from_secs(60);
const REFERENCE_BUDGET: Duration = Duration::from_secs(600);
const MIN_ORDER: f64 = 0.9;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Plotted envelopes with slack: `(name, low, high)` in degrees, deg/s and metres.
const ENVELOPES: [(&str, f64, f64); 6] = [
    ("alpha1 [deg]", -55.0, 75.0),
    ("alpha2 [deg]", -35.0, 155.0),
    ("|u| [deg/s]", 0.0, 5.0),
    ("x [m]", -0.35, 0.35),
    ("y [m]", -0.35, 0.35),
    ("theta [deg]", -10.0, 45.0),
];

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn envelope_lines(sol: &Solution) -> Vec<(String, bool)> {
    let traj = &sol.trajectory;
    let ranges = [
        range(traj.alphas.iter().map(|a| a.alpha1().to_degrees())),
        range(traj.alphas.iter().map(|a| a.alpha2().to_degrees())),
        range(traj.controls.iter().map(|u| u.amax().to_degrees())),
        range(traj.poses.iter().map(|g| g.x)),
        range(traj.poses.iter().map(|g| g.y)),
        range(traj.poses.iter().map(|g| g.theta.to_degrees())),
    ];
    ENVELOPES
        .iter()
        .zip(ranges)
        .map(|(&(name, lo, hi), (min, max))| {
            let ok = min >= lo && max <= hi;
            let status = if ok { "inside" } else { "MISMATCH" };
            (format!("{name:<13} observed [{min:8.3}, {max:8.3}] envelope [{lo}, {hi}] {status}"), ok)
        })
        .collect()
}

fn certification(sol: &Solution, spec: &ProblemSpec) -> (bool, String) {
    let report = verify(sol, spec);
    let r = &report.residuals;
    let ok = sol.converged
        && report.certified()
        && report.terminal_residual.norm() <= TERMINAL_TOLERANCE
        && r.passes(PMP_TOLERANCE)
        && r.nontrivial()
        && r.nu == AbnormalityFlag::Normal;
    let detail = format!(
        "terminal {:.2e}, state {:.2e}, rho {:.2e}, xi {:.2e}, stationarity {:.2e}, nu {}",
        report.terminal_residual.norm(),
        r.state,
        r.rho_recursion,
        r.xi_recursion,
        r.stationarity,
        r.nu.nu()
    );
    (ok, detail)
}

fn reference_instance(solutions: &mut Vec<(String, Solution, ProblemSpec)>) -> Verdict {
    let spec = ProblemSpec::default();
    let start = Instant::now();
    let result = solve(&spec, &SolverConfig::default());
    let elapsed = start.elapsed();
    let sol = match result {
        Ok(sol) => sol,
        Err(e) => return Verdict::new(false, format!("solver failed: {e}")),
    };
    let (certified, detail) = certification(&sol, &spec);
    let envelopes = envelope_lines(&sol);
    for (line, _) in &envelopes {
        println!("       {line}");
    }
    let inside = envelopes.iter().all(|(_, ok)| *ok);
    let verdict = Verdict::new(
        certified && elapsed <= REFERENCE_BUDGET,
        format!(
            "cost {:.6}, {} iterations, {:.1} s, {}; envelopes {}",
            sol.cost,
            sol.log.len(),
            elapsed.as_secs_f64(),
            detail,
            if inside { "inside" } else { "mismatch reported (different local optimum)" }
        ),
    );
    solutions.push(("reference".into(), sol, spec));
    verdict
}

fn pmp_certification(solutions: &[(String, Solution, ProblemSpec)]) -> Verdict {
    let mut pass = !solutions.is_empty();
    let mut parts = vec![];
    for (name, sol, spec) in solutions {
        let (ok, _) = certification(sol, spec);
        pass &= ok;
        parts.push(format!("{name} max residual {:.2e}", sol.residuals.max_residual()));
    }
    Verdict::new(pass, format!("{} solutions: {}", solutions.len(), parts.join(", ")))
}

fn gradient_identity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = ProblemSpec {
        params: DiscretizationParams { h: 0.05, steps: 20 },
        g_bar: GroupElement::new(0.1, 0.1, 0.0),
        ..Default::default()
    };
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let controls: Vec<_> =
            (0..20).map(|_| Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let lambda = Vector5::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let penalty = rng.gen_range(0.0..10.0);
        let (_, grad) = objective_and_gradient(&controls, &spec, &lambda, penalty).unwrap();
        let scale = grad.iter().map(|g| g.amax()).fold(0.0, f64::max);
        for k in 0..20 {
            for i in 0..2 {
                let (mut plus, mut minus) = (controls.clone(), controls.clone());
                plus[k][i] += step;
                minus[k][i] -= step;
                let fp = objective_and_gradient(&plus, &spec, &lambda, penalty).unwrap().0;
                let fm = objective_and_gradient(&minus, &spec, &lambda, penalty).unwrap().0;
                worst = worst.max(((fp - fm) / (2.0 * step) - grad[k][i]).abs() / scale);
            }
        }
    }
    Verdict::new(
        worst <= GRADIENT_TOLERANCE,
        format!("max relative error {worst:.2e} over 50 sequences, {:.2} s", start.elapsed().as_secs_f64()),
    )
}

fn random_pose(rng: &mut ChaCha8Rng) -> GroupElement {
    GroupElement::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.0..3.0))
}

fn holonomy_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let geom = SwimmerGeometry::default();
    let params = DiscretizationParams { h: 0.01, steps: 50 };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g0 = random_pose(&mut rng);
        let shift = random_pose(&mut rng);
        let alpha0 = ShapeState::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let controls: Vec<_> =
            (0..50).map(|_| Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let a = holonomy(&rollout(&geom, &g0, &alpha0, &controls, &params).unwrap());
        let b = holonomy(&rollout(&geom, &shift.compose(&g0), &alpha0, &controls, &params).unwrap());
        worst = worst.max((a.x - b.x).abs()).max((a.y - b.y).abs()).max((a.theta - b.theta).abs());
    }
    Verdict::new(worst <= HOLONOMY_TOLERANCE, format!("max holonomy difference {worst:.2e} over 100 samples"))
}

fn structure_preservation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let geom = SwimmerGeometry::default();
    let params = DiscretizationParams { h: 0.01, steps: 10_000 };
    let controls: Vec<_> = (0..10_000).map(|_| Vector2::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2))).collect();
    let traj = rollout(&geom, &GroupElement::IDENTITY, &ShapeState::default(), &controls, &params).unwrap();
    let orthogonality = traj
        .poses
        .iter()
        .map(|g| {
            let r = g.rotation();
            (r.transpose() * r - Matrix2::identity()).abs().max() + (r.determinant() - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let mut roundtrip: f64 = 0.0;
    for (k, u) in controls.iter().enumerate() {
        let a = connection(&geom, &traj.alphas[k]).unwrap().a;
        let x = AlgebraVector(-(a * u) * params.h);
        roundtrip = roundtrip.max((log(&exp(&x)).unwrap().0 - x.0).amax());
        let rel = traj.poses[k].inverse().compose(&traj.poses[k + 1]);
        let back = exp(&log(&rel).unwrap());
        roundtrip = roundtrip.max((back.x - rel.x).abs()).max((back.y - rel.y).abs()).max((back.theta - rel.theta).abs());
    }
    Verdict::new(
        orthogonality <= f64::EPSILON * 4.0 && roundtrip <= ROUNDTRIP_TOLERANCE,
        format!("orthogonality defect {orthogonality:.2e}, exp/log roundtrip {roundtrip:.2e} over 10000 steps"),
    )
}

/// Body-frame force and torque densities integrated with composite Simpson
/// over each link, from link geometry built directly from the joint angles.
fn quadrature_drag(geom: &SwimmerGeometry, alpha: &ShapeState, segments: usize) -> (Matrix3<f64>, Matrix3x2<f64>) {
    let (c1, s1, c2, s2) = (alpha.alpha1().cos(), alpha.alpha1().sin(), alpha.alpha2().cos(), alpha.alpha2().sin());
    let half = geom.len0 / 2.0;
    // (start, unit tangent, length, shape column index, d tangent / d alpha)
    let links = [
        (Vector2::new(-half, 0.0), Vector2::new(1.0, 0.0), geom.len0, None, Vector2::zeros()),
        (Vector2::new(half, 0.0), Vector2::new(c1, s1), geom.len1, Some(0), Vector2::new(-s1, c1)),
        (Vector2::new(-half, 0.0), Vector2::new(-c2, s2), geom.len2, Some(1), Vector2::new(s2, c2)),
    ];
    let mut omega_g = Matrix3::zeros();
    let mut omega_alpha = Matrix3x2::zeros();
    for (start, t, len, joint, dt) in links {
        let n = Vector2::new(-t.y, t.x);
        let k = (t * t.transpose()) * geom.drag_tangential + (n * n.transpose()) * geom.drag_normal;
        let ds = len / segments as f64;
        for i in 0..=segments {
            let weight = if i == 0 || i == segments {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            } * ds
                / 3.0;
            let s = i as f64 * ds;
            let p = start + t * s;
            let wrench = |v: Vector2<f64>| {
                let f = k * v;
                Vector3::new(f.x, f.y, p.x * f.y - p.y * f.x)
            };
            let body = [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0), Vector2::new(-p.y, p.x)];
            for (j, v) in body.into_iter().enumerate() {
                let w = wrench(v) * weight;
                for r in 0..3 {
                    omega_g[(r, j)] += w[r];
                }
            }
            if let Some(j) = joint {
                let w = wrench(dt * s) * weight;
                for r in 0..3 {
                    omega_alpha[(r, j)] += w[r];
                }
            }
        }
    }
    (omega_g, omega_alpha)
}

fn connection_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let geom = SwimmerGeometry::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let alpha = ShapeState::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let (og, oa) = quadrature_drag(&geom, &alpha, 10_000);
        let drag = drag_assembly(&geom, &alpha);
        let a = connection(&geom, &alpha).unwrap().a;
        let a_quad = og.cholesky().unwrap().solve(&oa);
        worst = worst
            .max((drag.omega_g - og).abs().max())
            .max((drag.omega_alpha - oa).abs().max())
            .max((a - a_quad).abs().max());
    }
    let a0 = connection(&geom, &ShapeState::default()).unwrap().a;
    let axial = a0.row(0).amax();
    let s3 = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
    let mut mirror: f64 = 0.0;
    for _ in 0..100 {
        let alpha = ShapeState::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let a = connection(&geom, &alpha).unwrap().a;
        let m = connection(&geom, &ShapeState(-alpha.0)).unwrap().a;
        mirror = mirror.max((s3 * m * -1.0 - a).abs().max());
    }
    Verdict::new(
        worst <= QUADRATURE_TOLERANCE && axial <= AXIAL_TOLERANCE && mirror <= MIRROR_TOLERANCE,
        format!("quadrature {worst:.2e} over 100 shapes, A(0) vx-row {axial:.2e}, mirror identity {mirror:.2e}"),
    )
}

fn trivial_instance(solutions: &mut Vec<(String, Solution, ProblemSpec)>) -> Verdict {
    let spec = ProblemSpec { g_bar: GroupElement::IDENTITY, ..Default::default() };
    let mut pass = true;
    let mut parts = vec![];
    for method in [Method::Direct, Method::Shooting] {
        match solve(&spec, &SolverConfig { method, ..Default::default() }) {
            Ok(sol) => {
                let zero = sol.controls().iter().all(|u| *u == Vector2::zeros());
                pass &= zero && sol.cost == 0.0;
                parts.push(format!("{method:?}: exact zeros {zero}, cost {}", sol.cost));
                solutions.push((format!("trivial {method:?}"), sol, spec.clone()));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{method:?} failed: {e}"));
            }
        }
    }
    Verdict::new(pass, parts.join("; "))
}

fn cross_solver(solutions: &mut Vec<(String, Solution, ProblemSpec)>) -> Verdict {
    let spec = ProblemSpec {
        params: DiscretizationParams { h: 0.01, steps: 200 },
        g_bar: GroupElement::new(0.05, 0.0, 0.0),
        ..Default::default()
    };
    let start = Instant::now();
    let direct = solve(&spec, &SolverConfig::default());
    let shooting = solve(&spec, &SolverConfig { method: Method::Shooting, ..Default::default() });
    let elapsed = start.elapsed();
    match (direct, shooting) {
        (Ok(d), Ok(s)) => {
            let rel = (d.cost - s.cost).abs() / s.cost;
            let pass = d.converged && s.converged && rel <= CROSS_SOLVER_TOLERANCE && elapsed <= CROSS_SOLVER_BUDGET;
            let detail = format!(
                "direct {:.8}, shooting {:.8}, relative difference {rel:.2e}, {:.1} s",
                d.cost,
                s.cost,
                elapsed.as_secs_f64()
            );
            solutions.push(("cross direct".into(), d, spec.clone()));
            solutions.push(("cross shooting".into(), s, spec));
            Verdict::new(pass, detail)
        }
        (d, s) => Verdict::new(false, format!("direct {:?}, shooting {:?}", d.err(), s.err())),
    }
}

fn convergence_order() -> Verdict {
    let geom = SwimmerGeometry::default();
    let horizon = 10.0;
    let rate = |t: f64| Vector2::new(0.3 * (0.7 * t).sin(), 0.3 * (0.7 * t).cos());
    let endpoint = |h: f64| {
        let steps = (horizon / h).round() as usize;
        let controls: Vec<_> = (0..steps).map(|k| rate(k as f64 * h)).collect();
        let params = DiscretizationParams { h, steps };
        rollout(&geom, &GroupElement::IDENTITY, &ShapeState::default(), &controls, &params).unwrap().final_pose()
    };
    let hs = [0.1, 0.05, 0.025, 0.0125];
    let errors: Vec<f64> = hs
        .iter()
        .map(|&h| log(&endpoint(h).inverse().compose(&endpoint(h / 2.0))).unwrap().norm())
        .collect();
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let listed: Vec<String> = hs.iter().zip(&errors).map(|(h, e)| format!("h={h}: {e:.3e}")).collect();
    Verdict::new(slope >= MIN_ORDER, format!("fitted order {slope:.3} ({})", listed.join(", ")))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut solutions = vec![];
    let mut verdicts = vec![];
    let mut run = |n: usize, name: &str, verdict: Verdict| {
        println!("{} [{n}] {name}: {}", if verdict.pass { "PASS" } else { "FAIL" }, verdict.detail);
        verdicts.push(verdict.pass);
    };
    let v1 = reference_instance(&mut solutions);
    run(1, "reference instance", v1);
    let v7 = trivial_instance(&mut solutions);
    let v8 = cross_solver(&mut solutions);
    run(2, "PMP certification", pmp_certification(&solutions));
    run(3, "gradient identity", gradient_identity());
    run(4, "holonomy invariance", holonomy_invariance());
    run(5, "structure preservation", structure_preservation());
    run(6, "connection oracle", connection_oracle());
    run(7, "trivial instance", v7);
    run(8, "cross-solver agreement", v8);
    run(9, "convergence order", convergence_order());
    let failed = verdicts.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
