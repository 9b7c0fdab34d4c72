//! Refinement studies and a brute-force oracle for tiny instances.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::audit::{audit, AuditReport};
use crate::config::Config;
use crate::discretization::{DiscreteSpaces, FieldRef, NormKind, NQ};
use crate::error::{Error, Result};
use crate::linalg::sub;
use crate::material::MaterialModel;
use crate::stepper::{Field, Interpolant, Simulation, StepContext, Trajectory};

/// Differences below this count as zero when judging monotonicity.
pub const DIFF_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub level: usize,
    pub steps: usize,
    pub tau: f64,
    pub delta: f64,
    /// Distance of the damage to the reference (finest) level.
    pub diff_z: Option<f64>,
    /// Distance of the displacement to the reference level.
    pub diff_u: Option<f64>,
    /// `max_m |E1 + E2|` of the cumulative linearization errors.
    pub linearization_error: f64,
    /// `√δ sup_m |u^m|_{H²}`.
    pub regularization_monitor: f64,
    pub audit_passed: bool,
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub kind: &'static str,
    pub levels: Vec<LevelResult>,
    /// Observed orders `log2(d_l / d_{l+1})` of the damage differences
    /// (`log_r` for δ-sweeps with ratio `r`).
    pub rates: Vec<Option<f64>>,
    pub passed: bool,
    pub reasons: Vec<String>,
}

/// Uniform a-priori quantities of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriBounds {
    pub sup_u_h1: f64,
    pub sup_v_l2: f64,
    pub sqrt_delta_sup_u_h2: f64,
    pub sup_z_w1p: f64,
    pub total_dissipation: f64,
}

pub fn apriori_monitor(sim: &Simulation, traj: &Trajectory) -> Result<AprioriBounds> {
    let sp = &sim.spaces;
    let p = sim.material.p;
    let mut b = AprioriBounds {
        sup_u_h1: 0.0,
        sup_v_l2: 0.0,
        sqrt_delta_sup_u_h2: 0.0,
        sup_z_w1p: 0.0,
        total_dissipation: 0.0,
    };
    let mut sup_h2: f64 = 0.0;
    for (k, s) in traj.states.iter().enumerate() {
        b.sup_u_h1 = b.sup_u_h1.max(sp.norm(FieldRef::Displacement(&s.u), NormKind::H1, p)?);
        b.sup_v_l2 = b.sup_v_l2.max(sp.norm(FieldRef::Displacement(&s.v), NormKind::L2, p)?);
        sup_h2 = sup_h2.max(sp.norm(FieldRef::Displacement(&s.u), NormKind::H2Seminorm, p)?);
        b.sup_z_w1p = b.sup_z_w1p.max(sp.norm(FieldRef::Damage(&s.z), NormKind::W1p, p)?);
        if k > 0 {
            let dz = sub(&s.z, &traj.states[k - 1].z);
            b.total_dissipation += sp.mass_z.bilinear(&dz, &dz) / traj.grid.tau();
        }
    }
    b.sqrt_delta_sup_u_h2 = sim.material.delta.sqrt() * sup_h2;
    Ok(b)
}

fn level_summary(
    level: usize,
    sim: &Simulation,
    traj: &Trajectory,
    report: &AuditReport,
) -> Result<LevelResult> {
    Ok(LevelResult {
        level,
        steps: sim.grid.steps,
        tau: sim.grid.tau(),
        delta: sim.material.delta,
        diff_z: None,
        diff_u: None,
        linearization_error: report
            .rows
            .iter()
            .map(|r| (r.e1 + r.e2).abs())
            .fold(0.0, f64::max),
        regularization_monitor: apriori_monitor(sim, traj)?.sqrt_delta_sup_u_h2,
        audit_passed: report.passed(),
        min_slack: report.min_slack(),
    })
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[1] < w[0] || (w[0] <= DIFF_FLOOR && w[1] <= DIFF_FLOOR))
}

/// Observed orders; `None` where a difference vanishes.
fn rates(values: &[f64], ratio: f64) -> Vec<Option<f64>> {
    values
        .windows(2)
        .map(|w| (w[0] > DIFF_FLOOR && w[1] > DIFF_FLOOR).then(|| (w[0] / w[1]).ln() / ratio.ln()))
        .collect()
}

fn run_level(cfg: &Config, level: usize) -> Result<(Simulation, Trajectory, AuditReport)> {
    let wrap = |e: Error| Error::LevelFailed { level, source: Box::new(e) };
    let sim = cfg.build().map_err(wrap)?;
    let traj = sim.run().map_err(wrap)?;
    let report = audit(&sim, &traj, &cfg.audit_settings()).map_err(wrap)?;
    Ok((sim, traj, report))
}

/// Runs `levels` time-step refinements (`M, 2M, 4M, …`) and compares the
/// linear interpolants of each level with the finest one on its grid: the
/// damage in discrete `L^p(W^{1,p})`, the displacement in `L²(H¹)`.
///
/// Passes when the damage differences decrease strictly and the
/// linearization error decreases strictly.
pub fn sweep_tau(cfg: &Config, levels: usize) -> Result<SweepReport> {
    if levels < 2 {
        return Err(Error::Usage("a τ-sweep needs at least two levels".into()));
    }
    let mut runs = Vec::with_capacity(levels);
    for l in 0..levels {
        let mut c = cfg.clone();
        c.time.steps = cfg.time.steps << l;
        runs.push(run_level(&c, l)?);
    }
    let (fine_sim, fine, _) = runs.last().expect("at least two levels");
    let sp = &fine_sim.spaces;
    let p = fine_sim.material.p;
    let fine_tau = fine_sim.grid.tau();
    let mut out = Vec::with_capacity(levels);
    for (l, (sim, traj, report)) in runs.iter().enumerate() {
        let mut res = level_summary(l, sim, traj, report)?;
        if l + 1 < levels {
            let (mut dz, mut du) = (0.0, 0.0);
            for k in 1..=fine_sim.grid.steps {
                let t = fine_sim.grid.time(k);
                let z = traj.interpolant(t, Interpolant::Linear, Field::Damage)?;
                let u = traj.interpolant(t, Interpolant::Linear, Field::Displacement)?;
                let ez = sub(&z, &fine.states[k].z);
                let eu = sub(&u, &fine.states[k].u);
                dz += fine_tau * w1p_difference(sp, &ez, p)?.powf(p);
                du += fine_tau * sp.norm(FieldRef::Displacement(&eu), NormKind::H1, p)?.powi(2);
            }
            res.diff_z = Some(dz.powf(1.0 / p));
            res.diff_u = Some(du.sqrt());
        }
        out.push(res);
    }
    let dz: Vec<f64> = out.iter().filter_map(|r| r.diff_z).collect();
    let lin: Vec<f64> = out.iter().map(|r| r.linearization_error).collect();
    let mut reasons = Vec::new();
    if !strictly_decreasing(&dz) {
        reasons.push(format!("damage differences not strictly decreasing: {dz:?}"));
    }
    if !strictly_decreasing(&lin) {
        reasons.push(format!("linearization errors not strictly decreasing: {lin:?}"));
    }
    if let Some(r) = out.iter().find(|r| !r.audit_passed) {
        reasons.push(format!("audit failed on level {}", r.level));
    }
    Ok(SweepReport {
        kind: "tau",
        rates: rates(&dz, 2.0),
        passed: reasons.is_empty(),
        levels: out,
        reasons,
    })
}

/// `W^{1,p}` norm of a nodal difference, which may leave `[0, 1]`.
fn w1p_difference(sp: &DiscreteSpaces, e: &[f64], p: f64) -> Result<f64> {
    let h = sp.h();
    let mut acc = 0.0;
    for el in 0..sp.n_elements() {
        for q in 0..NQ {
            let phi = sp.hat(q);
            let val = e[el] * phi[0] + e[el + 1] * phi[1];
            acc += sp.weight(q) * val.abs().powf(p);
        }
        acc += h * ((e[el + 1] - e[el]) / h).abs().powf(p);
    }
    Ok(acc.powf(1.0 / p))
}

/// Runs `levels` regularizations `δ, δ/r, δ/r², …` on the same grids. The
/// monitor `√δ sup_m |u|_{H²}` must stay within `sweep.monitor_factor`
/// (max/min) and the differences to the smallest δ, in `L^∞(H¹)` for the
/// displacement and `L^∞(W^{1,p})` for the damage, must decrease.
pub fn sweep_delta(cfg: &Config, levels: usize) -> Result<SweepReport> {
    if levels < 2 {
        return Err(Error::Usage("a δ-sweep needs at least two levels".into()));
    }
    let ratio = cfg.sweep.delta_ratio;
    let mut runs = Vec::with_capacity(levels);
    for l in 0..levels {
        let mut c = cfg.clone();
        c.material.delta = cfg.material.delta / ratio.powi(l as i32);
        runs.push(run_level(&c, l)?);
    }
    let (ref_sim, reference, _) = runs.last().expect("at least two levels");
    let sp = &ref_sim.spaces;
    let p = ref_sim.material.p;
    let mut out = Vec::with_capacity(levels);
    for (l, (sim, traj, report)) in runs.iter().enumerate() {
        let mut res = level_summary(l, sim, traj, report)?;
        if l + 1 < levels {
            let (mut dz, mut du): (f64, f64) = (0.0, 0.0);
            for (a, b) in traj.states.iter().zip(&reference.states) {
                dz = dz.max(w1p_difference(sp, &sub(&a.z, &b.z), p)?);
                du = du.max(sp.norm(FieldRef::Displacement(&sub(&a.u, &b.u)), NormKind::H1, p)?);
            }
            res.diff_z = Some(dz);
            res.diff_u = Some(du);
        }
        out.push(res);
    }
    let monitors: Vec<f64> = out.iter().map(|r| r.regularization_monitor).collect();
    let max = monitors.iter().copied().fold(0.0, f64::max);
    let min = monitors.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if max == 0.0 { 1.0 } else { max / min };
    let dz: Vec<f64> = out.iter().filter_map(|r| r.diff_z).collect();
    let du: Vec<f64> = out.iter().filter_map(|r| r.diff_u).collect();
    let mut reasons = Vec::new();
    if !(spread <= cfg.sweep.monitor_factor) {
        reasons.push(format!(
            "regularization monitor spread {spread} exceeds {}",
            cfg.sweep.monitor_factor
        ));
    }
    if !strictly_decreasing(&dz) {
        reasons.push(format!("damage differences not strictly decreasing: {dz:?}"));
    }
    if !strictly_decreasing(&du) {
        reasons.push(format!("displacement differences not strictly decreasing: {du:?}"));
    }
    if let Some(r) = out.iter().find(|r| !r.audit_passed) {
        reasons.push(format!("audit failed on level {}", r.level));
    }
    Ok(SweepReport {
        kind: "delta",
        rates: rates(&dz, ratio),
        passed: reasons.is_empty(),
        levels: out,
        reasons,
    })
}

/// Largest instance the oracle accepts.
pub const ORACLE_MAX_NODES: usize = 3;
pub const ORACLE_MAX_STEPS: usize = 5;
/// Grid points per coordinate in each brute-force pass.
pub const ORACLE_GRID: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleStep {
    pub m: usize,
    pub value_solver: f64,
    pub value_brute: f64,
    pub z_solver: Vec<f64>,
    pub z_brute: Vec<f64>,
    pub z_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub steps: Vec<OracleStep>,
    /// Whether the damage subproblem is convex, so that the comparison is
    /// meaningful as a pass/fail criterion.
    pub convex: bool,
    pub passed: bool,
}

pub const ORACLE_VALUE_TOL: f64 = 1e-6;
pub const ORACLE_Z_TOL: f64 = 1e-3;

/// `h'' ≥ 0` and `f'' ≥ 0` on a grid of `[0, 1]`.
pub fn is_convex(m: &MaterialModel) -> bool {
    (0..=1000).all(|i| {
        let z = i as f64 / 1000.0;
        m.d2h(z) >= -1e-14 && m.d2f(z) >= -1e-14
    })
}

/// Step functional minimized over `u` for fixed `z` with a dense solve.
fn reduced_value(ctx: &StepContext<'_>, z: &[f64]) -> Result<f64> {
    let sp = ctx.spaces;
    let s = ctx.momentum_matrix(z)?;
    let rhs = ctx.momentum_rhs();
    let free = sp.free_dofs();
    let mut u = vec![0.0; sp.n_udofs()];
    for &d in sp.dirichlet_dofs() {
        u[d] = ctx.boundary[d];
    }
    let lift = s.matvec(&u);
    let n = free.len();
    let a = DMatrix::from_fn(n, n, |i, j| s.get(free[i], free[j]));
    let b = DVector::from_iterator(n, free.iter().map(|&d| rhs[d] - lift[d]));
    let x = a
        .lu()
        .solve(&b)
        .ok_or(Error::NotPositiveDefinite { row: 0, pivot: 0.0 })?;
    for (k, &d) in free.iter().enumerate() {
        u[d] = x[k];
    }
    Ok(ctx.terms(&u, z).total())
}

fn grid_search(ctx: &StepContext<'_>, axes: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let n = axes.len();
    let total: usize = axes.iter().map(Vec::len).product();
    let point = |mut k: usize| -> Vec<f64> {
        let mut z = vec![0.0; n];
        for (i, axis) in axes.iter().enumerate() {
            z[i] = axis[k % axis.len()];
            k /= axis.len();
        }
        z
    };
    // Ties resolve to the smallest index so the result does not depend on
    // the thread schedule.
    let (value, index) = (0..total)
        .into_par_iter()
        .map(|k| reduced_value(ctx, &point(k)).map(|v| (v, k)))
        .try_reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| Ok(if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
        )?;
    Ok((value, point(index)))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

/// Brute-force minimization of one step over the damage box (the
/// displacement is solved exactly for every grid point): a uniform pass
/// with [`ORACLE_GRID`] values per node, then a second pass of the same
/// size on one cell around the best point.
pub fn brute_force_step(ctx: &StepContext<'_>) -> Result<(f64, Vec<f64>)> {
    let coarse: Vec<Vec<f64>> = ctx.z_prev.iter().map(|&hi| linspace(0.0, hi, ORACLE_GRID)).collect();
    let (_, best) = grid_search(ctx, &coarse)?;
    let fine: Vec<Vec<f64>> = best
        .iter()
        .zip(ctx.z_prev)
        .map(|(&b, &hi)| {
            let cell = hi / (ORACLE_GRID - 1) as f64;
            linspace((b - cell).max(0.0), (b + cell).min(hi), ORACLE_GRID)
        })
        .collect();
    grid_search(ctx, &fine)
}

/// Compares every step of the incremental solver with a brute-force
/// minimization started from the same previous states.
pub fn oracle_small(sim: &Simulation) -> Result<OracleReport> {
    let n = sim.spaces.n_znodes();
    if n > ORACLE_MAX_NODES || sim.grid.steps > ORACLE_MAX_STEPS {
        return Err(Error::Usage(format!(
            "the oracle handles at most {ORACLE_MAX_NODES} damage nodes and {ORACLE_MAX_STEPS} steps, got {n} and {}",
            sim.grid.steps
        )));
    }
    let traj = sim.run()?;
    let convex = is_convex(&sim.material);
    let mut steps = Vec::new();
    for m in 1..traj.states.len() {
        let ctx = sim.context(&traj, &traj.data[m], m);
        let state = &traj.states[m];
        let value_solver = ctx.terms(&state.u, &state.z).total();
        let (value_brute, z_brute) = brute_force_step(&ctx)?;
        let z_gap = z_brute
            .iter()
            .zip(&state.z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        steps.push(OracleStep {
            m,
            value_solver,
            value_brute,
            z_solver: state.z.clone(),
            z_brute,
            z_gap,
        });
    }
    let passed = steps
        .iter()
        .all(|s| (s.value_solver - s.value_brute).abs() <= ORACLE_VALUE_TOL && s.z_gap <= ORACLE_Z_TOL);
    Ok(OracleReport { steps, convex, passed })
}
