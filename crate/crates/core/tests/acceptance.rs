//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails. Runs without the libtest harness so
//! the lines are never captured.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use viscodamage::audit::{audit, AuditReport};
use viscodamage::config::Config;
use viscodamage::convergence::{oracle_small, sweep_delta, sweep_tau};
use viscodamage::stepper::{gradient_check, Simulation, Trajectory};

const ACTIVE: f64 = 1e-10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn config(value: serde_json::Value) -> Config {
    Config::from_value(&value).expect("valid acceptance config")
}

fn simulate(cfg: &Config) -> (Simulation, Trajectory, AuditReport) {
    let sim = cfg.build().unwrap();
    let traj = sim.run().unwrap();
    let report = audit(&sim, &traj, &cfg.audit_settings()).unwrap();
    (sim, traj, report)
}

fn stretching(rate: f64) -> Config {
    config(json!({
        "mesh": {"L": 1.0, "N": 32},
        "time": {"T": 1.0, "M": 100},
        "material": {"preset": "quadratic", "delta": 1e-3},
        "scenario": {"boundary": {"family": "ramp", "rate": rate}}
    }))
}

fn full_damage() -> Config {
    config(json!({
        "mesh": {"N": 32},
        "time": {"T": 1.0, "M": 100},
        "material": {"preset": "linear"},
        "scenario": {
            "boundary": {"family": "ramp", "rate": 2.0},
            "z0": {"family": "notch", "depth": 0.3, "center": 0.5, "width": 0.1}
        }
    }))
}

/// Slack recomputed from the ledger columns.
fn energy_inequality(report: &AuditReport) -> Outcome {
    let r0 = &report.rows[0];
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for r in &report.rows[1..] {
        let rhs = r0.stored + r0.kinetic + r.wext.iter().sum::<f64>();
        let slack = rhs - (r.stored + r.kinetic + r.dissipated + r.e1 + r.e2);
        ok &= (slack - r.slack).abs() <= 1e-12 * (1.0 + rhs.abs());
        ok &= slack >= -1e-7 * (1.0 + rhs.abs());
        worst = worst.min(slack);
    }
    outcome(ok && report.check("energy_inequality").unwrap().passed, format!("min slack {worst:.3e}"))
}

/// Exact, tolerance-free box and monotonicity over every node and step.
fn box_violations(traj: &Trajectory) -> usize {
    let mut bad = 0;
    for (k, s) in traj.states.iter().enumerate() {
        for (i, &z) in s.z.iter().enumerate() {
            if !(0.0..=1.0).contains(&z) || (k > 0 && z > traj.states[k - 1].z[i]) {
                bad += 1;
            }
        }
    }
    bad
}

fn oracle() -> Outcome {
    let cfg = config(json!({
        "mesh": {"N": 2},
        "time": {"T": 0.3, "M": 3},
        "scenario": {
            "boundary": {"family": "ramp", "rate": 5.0},
            "v0": {"family": "affine", "slope": 5.0}
        }
    }));
    let sim = cfg.build().unwrap();
    let rep = oracle_small(&sim).unwrap();
    let damaged = rep.steps.iter().any(|s| s.z_solver.iter().any(|&z| z < 1.0));
    let gap_v = rep.steps.iter().map(|s| (s.value_solver - s.value_brute).abs()).fold(0.0, f64::max);
    let gap_z = rep.steps.iter().map(|s| s.z_gap).fold(0.0, f64::max);
    outcome(
        rep.convex && rep.passed && damaged && gap_v <= 1e-6 && gap_z <= 1e-3,
        format!("max |ΔF| {gap_v:.2e}, max |Δz| {gap_z:.2e}, damage active: {damaged}"),
    )
}

/// Random admissible points strictly inside the damage box of the first
/// steps of a damaging run.
fn gradients() -> Outcome {
    let cfg = config(json!({
        "mesh": {"N": 8},
        "time": {"T": 1.0, "M": 10},
        "scenario": {"boundary": {"family": "ramp", "rate": 1.0}}
    }));
    let sim = cfg.build().unwrap();
    let traj = sim.run().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let m = 1 + k % sim.grid.steps;
        let ctx = sim.context(&traj, &traj.data[m], m);
        let free = sim.spaces.free_dofs();
        let mut u = ctx.boundary.to_vec();
        for &d in free {
            u[d] = rng.random_range(-1.0..1.0);
        }
        let z: Vec<f64> = ctx
            .z_prev
            .iter()
            .map(|&zp| rng.random_range(0.05..0.95) * zp)
            .collect();
        worst = worst.max(gradient_check(&ctx, &u, &z, h).unwrap().max());
    }
    outcome(worst <= 1e-6, format!("worst relative error {worst:.2e} over 100 points"))
}

/// Recomputes ξ from central difference quotients of the damage
/// functional and a hand-built lumped mass, then checks sign, support and
/// orthogonality.
fn subgradient(sim: &Simulation, traj: &Trajectory, report: &AuditReport) -> Outcome {
    let n = sim.spaces.mesh.n_nodes();
    let hx = sim.spaces.h();
    let weight = |i: usize| if i == 0 || i + 1 == n { 0.5 * hx } else { hx };
    let fd = 1e-7;
    let (mut orth, mut scale, mut xi_max, mut xi_min_gap) = (0.0, 0.0, f64::NEG_INFINITY, 0.0_f64);
    let mut active_nodes = 0;
    for m in 1..traj.states.len() {
        let ctx = sim.context(traj, &traj.data[m], m);
        let (z, z_prev) = (&traj.states[m].z, &traj.states[m - 1].z);
        let prob = ctx.damage_problem(&traj.states[m].u);
        let mut xi_min: f64 = 0.0;
        for i in 0..n {
            if z[i] > ACTIVE {
                continue;
            }
            let mut zp = z.clone();
            zp[i] += fd;
            let mut zm = z.clone();
            zm[i] -= fd;
            let g = (prob.value(&zp) - prob.value(&zm)) / (2.0 * fd);
            let xi = -g.max(0.0) / weight(i);
            xi_min = xi_min.min(xi);
            xi_max = xi_max.max(xi);
            scale += weight(i) * xi.abs();
            if z_prev[i] <= ACTIVE {
                orth += weight(i) * xi * (z[i] - z_prev[i]);
            }
        }
        xi_min_gap = xi_min_gap.max((xi_min - report.rows[m].xi_min).abs() / (1.0 + xi_min.abs()));
        active_nodes = active_nodes.max(z.iter().filter(|&&v| v <= ACTIVE).count());
    }
    let tol = 1e-8 * (1.0 + scale);
    let passed = active_nodes >= 1
        && xi_max <= 0.0
        && orth.abs() <= tol
        && xi_min_gap <= 1e-5
        && report.check("xi_sign").unwrap().passed
        && report.check("xi_orthogonality").unwrap().passed
        && report.check("xi_consolidated").unwrap().passed;
    outcome(
        passed,
        format!(
            "{active_nodes} fully damaged nodes, max ξ {xi_max:.2e}, |∫∫ξ ∂z| {:.2e} ≤ {tol:.2e}, transition term {:.2e} reported",
            orth.abs(),
            report.xi_transition
        ),
    )
}

fn variational_inequality(runs: &[(&Simulation, &Trajectory, &AuditReport)], cfg: &Config) -> Outcome {
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for (_, _, rep) in runs {
        let c = rep.check("variational_inequality").unwrap();
        ok &= c.passed;
        worst = worst.min(c.value);
    }
    // Negative control: lift the damage of one node by 1e-3 where it
    // decreased the most.
    let (sim, traj, _) = runs.last().unwrap();
    let mut bad = (*traj).clone();
    let (mut m_star, mut i_star, mut drop) = (1, 0, f64::NEG_INFINITY);
    for m in 1..bad.states.len() {
        for i in 0..bad.states[m].z.len() {
            let d = bad.states[m - 1].z[i] - bad.states[m].z[i];
            if d > drop {
                (m_star, i_star, drop) = (m, i, d);
            }
        }
    }
    bad.states[m_star].z[i_star] += 1e-3;
    let control = audit(sim, &bad, &cfg.audit_settings()).unwrap();
    let control_fails = !control.check("variational_inequality").unwrap().passed;
    outcome(
        ok && control_fails,
        format!("worst scaled minimum {worst:.2e}; perturbed control rejected: {control_fails}"),
    )
}

fn onset() -> Outcome {
    let cfg = config(json!({
        "mesh": {"N": 1},
        "time": {"T": 1.0, "M": 100},
        "scenario": {
            "boundary": {"family": "ramp", "rate": 1.0},
            "v0": {"family": "affine", "slope": 1.0}
        }
    }));
    let sim = cfg.build().unwrap();
    let traj = sim.run().unwrap();
    // e* from one-sided difference quotients of h and f at z = 1.
    let m = &sim.material;
    let eps = 1e-6;
    let dh = (m.h(1.0) - m.h(1.0 - eps)) / eps;
    let df = (m.f(1.0) - m.f(1.0 - eps)) / eps;
    let e_star = (2.0 * -df / (dh * m.c0)).sqrt();
    // The strain equals the ramp rate times t.
    let crossing = e_star / 1.0 / sim.grid.tau();
    let first = traj.states.iter().find(|s| s.z.iter().any(|&z| z < 1.0)).map(|s| s.m);
    match first {
        Some(k) => outcome(
            (k as f64 - crossing).abs() <= 1.0,
            format!("e* = {e_star:.6}, crossing at step {crossing:.3}, first damage at step {k}"),
        ),
        None => outcome(false, format!("no damage; e* = {e_star:.6}")),
    }
}

fn cli_run(config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_viscodamage"))
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(
        &cfg,
        json!({"mesh": {"N": 16}, "time": {"M": 40}, "scenario": {"boundary": {"family": "ramp", "rate": 1.0}}}).to_string(),
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let codes = (cli_run(&cfg, &a), cli_run(&cfg, &b));
    let la = fs::read(a.join("ledger.csv")).unwrap_or_default();
    let lb = fs::read(b.join("ledger.csv")).unwrap_or_default();
    outcome(
        codes == (0, 0) && !la.is_empty() && la == lb,
        format!("exit codes {codes:?}, ledgers {} bytes, identical: {}", la.len(), la == lb),
    )
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn timed(budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(b) = budget {
        if elapsed > b {
            o.passed = false;
            o.detail.push_str(&format!("; over the {b:?} budget"));
        }
    }
    (o, elapsed)
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |n, name, (o, d): (Outcome, Duration)| results.push((n, name, o, d));

    let base = stretching(0.5);
    let mut c1 = None;
    record(
        1,
        "energy-dissipation inequality",
        timed(Some(Duration::from_secs(10)), || {
            let run = simulate(&base);
            let o = energy_inequality(&run.2);
            c1 = Some(run);
            o
        }),
    );
    let c1 = c1.unwrap();

    let damaging_cfg = stretching(1.0);
    let damaging = simulate(&damaging_cfg);
    let notch = simulate(&full_damage());

    record(
        3,
        "oracle equivalence",
        timed(Some(Duration::from_secs(60)), oracle),
    );
    record(4, "gradient correctness", timed(Some(Duration::from_secs(5)), gradients));
    record(
        5,
        "subgradient conditions",
        timed(None, || subgradient(&notch.0, &notch.1, &notch.2)),
    );
    record(
        6,
        "variational inequality",
        timed(None, || {
            variational_inequality(
                &[(&c1.0, &c1.1, &c1.2), (&notch.0, &notch.1, &notch.2), (&damaging.0, &damaging.1, &damaging.2)],
                &damaging_cfg,
            )
        }),
    );
    record(
        7,
        "time-step refinement",
        timed(Some(Duration::from_secs(60)), || {
            let mut cfg = stretching(1.0);
            cfg.time.steps = 50;
            let rep = sweep_tau(&cfg, 3).unwrap();
            let dz: Vec<f64> = rep.levels.iter().filter_map(|l| l.diff_z).collect();
            let lin: Vec<f64> = rep.levels.iter().map(|l| l.linearization_error).collect();
            let ok = dz.windows(2).all(|w| w[1] < w[0]) && lin.windows(2).all(|w| w[1] <= w[0]);
            outcome(rep.passed && ok, format!("d_k {}, |E| {}", sci(&dz), sci(&lin)))
        }),
    );
    record(
        8,
        "regularization study",
        timed(Some(Duration::from_secs(60)), || {
            let mut cfg = stretching(1.0);
            cfg.material.delta = 1e-2;
            let rep = sweep_delta(&cfg, 3).unwrap();
            let mon: Vec<f64> = rep.levels.iter().map(|l| l.regularization_monitor).collect();
            let spread = mon.iter().copied().fold(0.0, f64::max) / mon.iter().copied().fold(f64::INFINITY, f64::min);
            let dz: Vec<f64> = rep.levels.iter().filter_map(|l| l.diff_z).collect();
            outcome(rep.passed && spread <= 10.0, format!("monitor spread {spread:.3}, d_z {}", sci(&dz)))
        }),
    );
    record(9, "damage onset", timed(Some(Duration::from_secs(1)), onset));
    record(10, "determinism", timed(None, determinism));

    let trajectories = [&c1.1, &damaging.1, &notch.1];
    let bad: usize = trajectories.iter().map(|t| box_violations(t)).sum();
    let steps: usize = trajectories.iter().map(|t| t.states.len()).sum();
    let c2 = outcome(
        bad == 0 && c1.2.check("irreversibility").unwrap().passed,
        format!("{bad} violations over {steps} states"),
    );
    record(2, "irreversibility and box", (c2, Duration::ZERO));

    results.sort_by_key(|r| r.0);
    for (n, name, o, d) in &results {
        println!(
            "{} criterion {n:>2} {name}: {} ({:.2} s)",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            d.as_secs_f64()
        );
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
