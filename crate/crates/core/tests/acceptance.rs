//! Acceptance criteria 1-9. Each prints one PASS/FAIL line; criterion 6 is
//! reported but never fails the suite. Built without the libtest harness so
//! the lines always appear: `cargo test --release --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use armsim::arm_model::{
    fk_points, radial_height, step, ArmGeometry, ControlInput, JointLimits, JointState,
};
use armsim::geometry_sets::{
    pontryagin_diff_interval, tighten_workspace, DisturbanceBounds3, Interval, TighteningMode, TightenedWorkspace,
    WorkspaceSet,
};
use armsim::rmpc::{rmpc_cost, solve_rmpc, CostWeights, RmpcProblem, SolveStatus, SolverOptions};
use armsim::sim::{batch, mask_wall_clock, run, ControllerKind, RunMetrics, RunOutput};
use armsim::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn scenario(name: &str) -> Scenario {
    let path = format!("{}/scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn random_state(rng: &mut impl Rng, lim: &JointLimits) -> JointState {
    let mut a = [0.0; 4];
    for i in 0..4 {
        a[i] = rng.gen_range(lim.lower[i]..=lim.upper[i]);
    }
    JointState::from(a)
}

// 1. kinematics invariants

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let geom = ArmGeometry::default();
    let lim = JointLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_len: f64 = 0.0;
    let mut worst_plane: f64 = 0.0;
    for _ in 0..1000 {
        let x = random_state(&mut rng, &lim);
        let p = fk_points(&x, &geom);
        worst_len = worst_len
            .max((dist3([0.0; 3], p.p2) - geom.l1).abs())
            .max((dist3(p.p2, p.p3) - geom.l2).abs())
            .max((dist3(p.p3, p.p4) - geom.l3).abs());
        let (s, c) = x.theta.sin_cos();
        for q in [p.p2, p.p3, p.p4] {
            worst_plane = worst_plane.max((q[0] * s - q[1] * c).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: worst_len <= 1e-12 && worst_plane <= 1e-12 && secs < 1.0,
        detail: format!(
            "1000 states, max link-length residual {worst_len:.1e}, max planarity residual {worst_plane:.1e}, {secs:.3} s"
        ),
    }
}

// 2. Pontryagin difference and tightening oracles

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counterexamples = 0;
    for _ in 0..500 {
        let a_lo = rng.gen_range(-5.0..5.0);
        let a_hi = a_lo + rng.gen_range(0.0..6.0);
        let a = Interval::new(a_lo, a_hi);
        let b_lo = rng.gen_range(-2.0..2.0);
        let b_hi = b_lo + rng.gen_range(0.0..3.0);
        let b = Interval::new(b_lo, b_hi);
        let d = pontryagin_diff_interval(a, b);
        // endpoints of b plus uniform interior samples
        let mut ws = vec![b_lo, b_hi];
        ws.extend((0..198).map(|_| rng.gen_range(b_lo..=b_hi)));
        let mut xs: Vec<f64> = (0..40).map(|_| rng.gen_range(-9.0..9.0)).collect();
        if let Interval::Closed { lo, hi } = d {
            xs.extend([lo, hi, lo - 1e-9, hi + 1e-9, 0.5 * (lo + hi)]);
        }
        // x + w rounds; 1e-12 absorbs that at the exact endpoints while the
        // 1e-9 probes still resolve the boundary
        for x in xs {
            let sampled = ws.iter().all(|w| x + w >= a_lo - 1e-12 && x + w <= a_hi + 1e-12);
            if d.contains(x) != sampled {
                counterexamples += 1;
            }
        }
    }

    let ws = WorkspaceSet::default();
    let mut outside = 0;
    let scenarios = 20;
    for _ in 0..scenarios {
        let dist = DisturbanceBounds3::new(rng.gen_range(0.0..1.5), rng.gen_range(0.0..0.4), 0.1);
        let floor: Vec<f64> = (0..10)
            .map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.0..5.0) } else { ws.z_min })
            .collect();
        let mode = if rng.gen_bool(0.5) { TighteningMode::Growing } else { TighteningMode::Constant };
        let Ok(tw) = tighten_workspace(&ws, &dist, &floor, 10, mode) else {
            continue;
        };
        for _ in 0..10_000 {
            let k = rng.gen_range(0..10);
            // uniform over the disc times the height band
            let r = tw.radii[k] * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let z = rng.gen_range(tw.floors[k]..=tw.z_max);
            let p = [r * phi.cos(), r * phi.sin(), z];
            if tw.contains(k, p) && !ws.contains(p) {
                outside += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: counterexamples == 0 && outside == 0 && secs < 10.0,
        detail: format!(
            "500 interval pairs: {counterexamples} counterexamples; {scenarios} tightened sets x 1e4 points: {outside} outside nominal; {secs:.2} s"
        ),
    }
}

// 3. solver against exhaustive enumeration, and Jacobians against finite differences

const LEVELS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

struct Oracle<'a> {
    p: &'a RmpcProblem,
    best: f64,
}

impl Oracle<'_> {
    /// Depth-first enumeration of the pitch-joint levels. The base rotation
    /// enters neither the end-effector radius nor its height, so its cost
    /// term separates and is minimized on its own.
    fn search(&mut self, k: usize, x: JointState, cost: f64) {
        if cost >= self.best {
            return;
        }
        if k == self.p.horizon {
            self.best = cost;
            return;
        }
        let w = self.p.weights;
        let lim = &self.p.joint_limits;
        for &a in &LEVELS {
            for &b in &LEVELS {
                for &g in &LEVELS {
                    let u = ControlInput::new(a, b, g, 0.0);
                    let y = step(&x, &u, self.p.dt);
                    let ya = y.to_array();
                    if (0..3).any(|i| ya[i] < lim.lower[i] || ya[i] > lim.upper[i]) {
                        continue;
                    }
                    let (rho, z) = radial_height(&y, &self.p.geometry);
                    let r = self.p.tightened.radii[k];
                    if rho * rho > r * r || z > self.p.tightened.z_max {
                        continue;
                    }
                    let eps = (self.p.tightened.floors[k] - z).max(0.0);
                    if eps > self.p.eps_max {
                        continue;
                    }
                    let c = w.c1 * a.abs() + w.c2 * b.abs() + w.c3 * g.abs() + w.c4 * eps;
                    self.search(k + 1, y, cost + c);
                }
            }
        }
    }
}

fn theta_part(p: &RmpcProblem) -> f64 {
    let best = LEVELS.iter().map(|u| p.weights.c_theta * u.abs()).fold(f64::INFINITY, f64::min);
    best * p.horizon as f64
}

fn random_instance(rng: &mut impl Rng, sc: &Scenario, np: usize) -> RmpcProblem {
    let lim = sc.arm.joint_limits;
    let geom = sc.arm.geometry;
    let x0 = loop {
        let mut a = [0.0; 4];
        for i in 0..3 {
            a[i] = rng.gen_range(-1.2..1.2);
        }
        a[3] = rng.gen_range(-3.0..3.0);
        let x = JointState::from(a);
        let (rho, z) = radial_height(&x, &geom);
        if rho.abs() < 6.0 && z > 0.2 && z < 5.8 {
            break x;
        }
    };
    let floor: Vec<f64> = (0..np)
        .map(|_| if rng.gen_bool(0.6) { rng.gen_range(2.8..4.4) } else { sc.workspace.z_min })
        .collect();
    let dist = sc.disturbance.to_3d(sc.dt);
    let tightened: TightenedWorkspace =
        tighten_workspace(&sc.workspace, &dist, &floor, np, sc.rmpc.tightening).expect("nonempty tightening");
    RmpcProblem {
        initial: x0,
        horizon: np,
        dt: sc.dt,
        geometry: geom,
        joint_limits: lim,
        input_limits: sc.arm.input_limits,
        tightened,
        weights: CostWeights::default(),
        eps_max: sc.rmpc.eps_max,
        reference: None,
    }
}

fn jacobian_error(p: &RmpcProblem, controls: &[ControlInput], slacks: &[f64]) -> f64 {
    let jac = p.constraint_jacobian(controls);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for col in 0..5 * p.horizon {
        let mut up: Vec<[f64; 4]> = controls.iter().map(|u| u.to_array()).collect();
        let mut dn = up.clone();
        let mut su = slacks.to_vec();
        let mut sd = slacks.to_vec();
        if col < 4 * p.horizon {
            up[col / 4][col % 4] += h;
            dn[col / 4][col % 4] -= h;
        } else {
            su[col - 4 * p.horizon] += h;
            sd[col - 4 * p.horizon] -= h;
        }
        let up: Vec<ControlInput> = up.into_iter().map(ControlInput::from).collect();
        let dn: Vec<ControlInput> = dn.into_iter().map(ControlInput::from).collect();
        let cu = p.constraint_values(&up, &su);
        let cd = p.constraint_values(&dn, &sd);
        for row in 0..cu.len() {
            let fd = (cu[row] - cd[row]) / (2.0 * h);
            let err = (jac[(row, col)] - fd).abs() / jac[(row, col)].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let sc = Scenario::default();
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = CostWeights::default();
    // one grid cell (spacing 0.5) of input error on every rate of every step
    let gap = 3.0 * 0.25 * (w.c1 + w.c2 + w.c3 + w.c_theta);

    let mut instances = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut not_converged = 0;
    let mut failures = 0;
    while instances < 20 {
        let p = random_instance(&mut rng, &sc, 3);
        let mut oracle = Oracle { p: &p, best: f64::INFINITY };
        oracle.search(0, p.initial, 0.0);
        if !oracle.best.is_finite() {
            // no admissible grid point: not a feasible instance
            continue;
        }
        instances += 1;
        let optimum = oracle.best + theta_part(&p);
        let sol = solve_rmpc(&p, None, &opts);
        if sol.status != SolveStatus::Converged {
            not_converged += 1;
        }
        let obj = rmpc_cost(&sol.controls, &sol.slacks, &p.weights);
        let excess = obj - optimum;
        worst_excess = worst_excess.max(excess);
        if excess > gap || sol.constraint_violation > 1e-6 {
            failures += 1;
        }
    }

    let mut jac_err: f64 = 0.0;
    for np in [3, 10] {
        for _ in 0..10 {
            let p = random_instance(&mut rng, &sc, np);
            let controls: Vec<ControlInput> = (0..np)
                .map(|_| ControlInput::from([0; 4].map(|_| rng.gen_range(-1.0..1.0))))
                .collect();
            let slacks: Vec<f64> = (0..np).map(|_| rng.gen_range(0.0..1.0)).collect();
            jac_err = jac_err.max(jacobian_error(&p, &controls, &slacks));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: failures == 0 && not_converged == 0 && jac_err <= 1e-6 && secs < 120.0,
        detail: format!(
            "20 instances: {failures} above oracle + {gap:.2}, worst objective - oracle {worst_excess:+.3}, {not_converged} unconverged; \
             Jacobian max rel. error {jac_err:.1e}; {secs:.1} s"
        ),
    }
}

// 4 and 6. Monte Carlo safety on the dynamic scenario, solve-time budget

fn criteria_4_and_6() -> (Outcome, Outcome) {
    let sc = scenario("dynamic");
    let seeds: Vec<u64> = (0..100).collect();
    let report = batch(&sc, &[ControllerKind::Rmpc], &seeds).expect("batch runs");
    let errors: Vec<String> = report.runs.iter().filter_map(|r| r.error.clone()).collect();
    let runs: Vec<&RunMetrics> = report.metrics_for(ControllerKind::Rmpc).map(|(_, m)| m).collect();
    let collisions: u32 = runs.iter().map(|m| m.collision_count).sum();
    let colliding_seeds: Vec<u64> =
        report.metrics_for(ControllerKind::Rmpc).filter(|(_, m)| m.collision_count > 0).map(|(s, _)| s).collect();
    // no separation is recorded when no obstacle was ever present
    let nonpositive = runs.iter().filter(|m| m.min_separation.is_some_and(|d| d <= 0.0)).count();
    let obstacle_free = runs.iter().filter(|m| m.min_separation.is_none()).count();
    let step0: u32 = runs.iter().map(|m| m.step0_violations).sum();
    let min_sep = runs.iter().filter_map(|m| m.min_separation).fold(f64::INFINITY, f64::min);
    let rmpc_steps: u32 = runs.iter().map(|m| m.rmpc_steps).sum();
    let c4 = Outcome {
        pass: errors.is_empty() && runs.len() == 100 && collisions == 0 && nonpositive == 0 && step0 == 0,
        detail: format!(
            "{} runs ({} errors), {collisions} collisions (seeds {colliding_seeds:?}), {nonpositive} runs with min_separation <= 0 (smallest {min_sep:.3} m, \
             {obstacle_free} obstacle-free), {step0} step-0 violations over {rmpc_steps} MPC steps",
            runs.len(),
            errors.len()
        ),
    };

    let means: Vec<f64> = runs.iter().filter_map(|m| m.mean_solve_time).collect();
    let mean = means.iter().sum::<f64>() / means.len().max(1) as f64;
    let max = runs.iter().filter_map(|m| m.max_solve_time).fold(0.0, f64::max);
    let c6 = Outcome {
        pass: mean <= 0.050 && max <= 0.250,
        detail: format!(
            "Np={}: mean solve {:.1} ms (budget 50), max {:.1} ms (budget 250); published: mean 32 ms, range 8-52 ms. Reported only",
            sc.rmpc.horizon,
            1e3 * mean,
            1e3 * max
        ),
    };
    (c4, c6)
}

// 5. comparative efficiency

fn criterion_5() -> Outcome {
    let sc = scenario("paper_comparison");
    let seeds: Vec<u64> = (0..25).collect();
    let report = batch(&sc, &[ControllerKind::Rmpc, ControllerKind::Baseline], &seeds).expect("batch runs");
    let time = |m: &RunMetrics| m.completion_time.unwrap_or(f64::INFINITY);
    let mut wins = 0;
    let (mut tr, mut tb) = (Vec::new(), Vec::new());
    let mut rmpc_no_stop = 0;
    let mut base_critical = 0;
    let mut rmpc_collisions = 0;
    for &s in &seeds {
        let find = |c| report.runs.iter().find(|r| r.controller == c && r.seed == s).and_then(|r| r.metrics.clone());
        let (Some(r), Some(b)) = (find(ControllerKind::Rmpc), find(ControllerKind::Baseline)) else {
            return Outcome {
                pass: false,
                detail: format!("seed {s} failed to run"),
            };
        };
        wins += (time(&r) < time(&b)) as usize;
        tr.push(time(&r));
        tb.push(time(&b));
        rmpc_no_stop += (r.stop_steps == 0) as usize;
        base_critical += (b.critical_steps >= 1) as usize;
        rmpc_collisions += r.collision_count;
    }
    let n = seeds.len() as f64;
    let (mr, mb) = (median(tr), median(tb));
    let gain = 1.0 - mr / mb;
    let win_rate = wins as f64 / n;
    let no_stop = rmpc_no_stop as f64 / n;
    let critical = base_critical as f64 / n;
    Outcome {
        pass: win_rate >= 0.8 && gain >= 0.15 && no_stop >= 0.9 && critical >= 0.5 && rmpc_collisions == 0,
        detail: format!(
            "25 seeds: RMPC faster in {:.0}%, median {mr:.1} s vs {mb:.1} s ({:.1}% lower), RMPC stop-free {:.0}%, \
             baseline Critical stop {:.0}%, RMPC collisions {rmpc_collisions}",
            100.0 * win_rate,
            100.0 * gain,
            100.0 * no_stop,
            100.0 * critical
        ),
    }
}

// 7. height adaptation

/// First time the true footprint of `id` covers the end-effector, or the
/// time of closest planar approach if it never does.
fn crossing_time(out: &RunOutput, id: usize, radius: f64) -> f64 {
    let mut best = (f64::INFINITY, f64::INFINITY);
    let mut row = 0;
    for o in out.obstacles.iter().filter(|o| o.id == id) {
        while row + 1 < out.log.rows.len() && out.log.rows[row].t < o.t - 1e-9 {
            row += 1;
        }
        let r = &out.log.rows[row];
        if (r.t - o.t).abs() > 1e-9 {
            continue;
        }
        let d = (r.p4[0] - o.x).hypot(r.p4[1] - o.y);
        if d <= radius {
            return o.t;
        }
        if d < best.0 {
            best = (d, o.t);
        }
    }
    best.1
}

/// Sign changes of the z4 increments between the last sample below `h`
/// and the first sample at or above `target`.
fn raise_reversals(t: &[f64], z: &[f64], h: f64, target: f64, before: f64) -> Option<(usize, f64)> {
    let end = (0..z.len()).find(|&i| z[i] >= target && t[i] < before)?;
    let begin = (0..end).rev().find(|&i| z[i] < h).unwrap_or(0);
    let dz: Vec<f64> = (begin..end).map(|i| z[i + 1] - z[i]).filter(|d| *d != 0.0).collect();
    let reversals = dz.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    Some((reversals, t[end]))
}

fn criterion_7() -> Outcome {
    let sc = scenario("height_adaptation");
    let dz = sc.disturbance.delta_z;
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in 0..3 {
        let out = run(&sc, ControllerKind::Rmpc, seed).expect("run");
        let t: Vec<f64> = out.log.rows.iter().map(|r| r.t).collect();
        let z: Vec<f64> = out.log.rows.iter().map(|r| r.p4[2]).collect();
        let mut parts = Vec::new();
        for (id, o) in sc.world.obstacles.iter().enumerate() {
            let cross = crossing_time(&out, id, o.radius);
            // the second level may be met within the reported slack
            let target = o.height + dz;
            let reached = (0..z.len()).find(|&i| {
                let eps = if id == 0 { 0.0 } else { out.log.rows[i].eps_max_step.unwrap_or(0.0) };
                t[i] < cross && z[i] > target - eps
            });
            match (reached, raise_reversals(&t, &z, o.height, target, cross)) {
                (Some(i), Some((rev, _))) => {
                    pass &= rev <= 3;
                    parts.push(format!("h {:.1}: above at {:.1} s, crossing {:.1} s, {rev} reversals", o.height, t[i], cross));
                }
                _ => {
                    pass = false;
                    parts.push(format!("h {:.1}: not above {target:.1} before crossing at {cross:.1} s", o.height));
                }
            }
        }
        pass &= out.metrics.collision_count == 0;
        lines.push(format!("seed {seed} [{}; collisions {}]", parts.join("; "), out.metrics.collision_count));
    }
    Outcome {
        pass,
        detail: lines.join(" "),
    }
}

// 8. mode-switching hygiene

fn criterion_8() -> Outcome {
    let sc = scenario("flyby");
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let out = run(&sc, ControllerKind::Rmpc, seed).expect("run");
        let events: Vec<&str> = out.log.rows.iter().filter_map(|r| r.switch_event.as_deref()).collect();
        let clean = events == ["nominal->rmpc", "rmpc->blending", "blending->nominal"]
            || events == ["nominal->rmpc", "rmpc->nominal"];
        let close_nominal = out
            .log
            .rows
            .iter()
            .filter(|r| r.mode == "nominal" && r.d_min < sc.supervisor.d_act)
            .count();
        pass &= clean && close_nominal == 0;
        lines.push(format!("seed {seed}: [{}] nominal steps inside d_act {close_nominal}", events.join(", ")));
    }
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

// 9. determinism

fn criterion_9() -> Outcome {
    let cases = [
        ("flyby", ControllerKind::Rmpc, 0),
        ("height_adaptation", ControllerKind::Rmpc, 4),
        ("paper_comparison", ControllerKind::Baseline, 3),
        ("dynamic", ControllerKind::Rmpc, 11),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, c, seed) in cases {
        let mut sc = scenario(name);
        sc.run.max_time = sc.run.max_time.min(40.0);
        let a = run(&sc, c, seed).expect("run");
        let b = run(&sc, c, seed).expect("run");
        let (ta, tb) = (a.log.to_csv_string(), b.log.to_csv_string());
        let same = mask_wall_clock(&ta) == mask_wall_clock(&tb) && a.obstacles == b.obstacles;
        // wall-clock columns: same header, same filled cells
        let schema = ta.lines().next() == tb.lines().next()
            && ta.lines().count() == tb.lines().count()
            && a.log.rows.iter().zip(&b.log.rows).all(|(x, y)| x.solve_time_s.is_some() == y.solve_time_s.is_some());
        pass &= same && schema;
        lines.push(format!("{name}/{c}/{seed}: {} rows {}", a.log.len(), if same && schema { "identical" } else { "DIFFER" }));
    }
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn main() -> ExitCode {
    let mut failed = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        let verdict = match (o.pass, n == 6) {
            (true, _) => "PASS",
            (false, true) => "OVER BUDGET (reported)",
            (false, false) => "FAIL",
        };
        println!("criterion {n}: {verdict}: {}", o.detail);
        if !o.pass && n != 6 {
            failed.push(n);
        }
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    let (c4, c6) = criteria_4_and_6();
    report(4, c4);
    report(5, criterion_5());
    report(6, c6);
    report(7, criterion_7());
    report(8, criterion_8());
    report(9, criterion_9());

    if failed.is_empty() {
        println!("acceptance: all criteria met");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
