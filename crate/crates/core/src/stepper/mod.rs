//! Time stepping by incremental minimization.
//!
//! Each step minimizes the discrete functional over `(u, z)` with the
//! Dirichlet trace fixed and `0 ≤ z ≤ z^{m-1}`. The minimization alternates
//! an exact displacement solve (a banded SPD system) with a box-constrained
//! damage solve until the functional stalls and the damage KKT residual is
//! small.

mod damage_solver;
mod functional;

pub use damage_solver::{
    build_damage_solver, damage_solver_registry, DamageSolution, DamageSolver, DamageSolverSettings,
    ProjectedGradient, ProjectedNewton,
};
pub use functional::{DamageProblem, FunctionalTerms, StepContext, CONSTRAINT_TOL};

use serde::{Deserialize, Serialize};

use crate::discretization::{check_damage_field, DiscreteSpaces};
use crate::error::{Error, Result};
use crate::linalg::{norm2, norm_inf};
use crate::material::MaterialModel;
use crate::scenarios::{DataSample, Scenario};

/// Relative slack allowed when checking that sweep values never increase.
pub const HISTORY_SLACK: f64 = 1e-12;

/// Uniform partition of `[0, T]` into `M` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub final_time: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, steps: usize) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::config("time.T", "final time must be positive"));
        }
        if steps == 0 {
            return Err(Error::config("time.M", "number of steps must be at least 1"));
        }
        Ok(TimeGrid { final_time, steps })
    }

    pub fn tau(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        if m == self.steps {
            self.final_time
        } else {
            m as f64 * self.tau()
        }
    }

    /// Step index `m` with `t ∈ ((m-1)τ, mτ]` (`m = 0` at `t = 0`) and the
    /// local coordinate `β = (t - (m-1)τ)/τ`. Times within `1e-9 τ` of a
    /// grid point snap to it.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let tau = self.tau();
        let s = t / tau;
        if !(s >= -1e-9 && s <= self.steps as f64 + 1e-9) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.final_time)));
        }
        let nearest = s.round();
        if (s - nearest).abs() <= 1e-9 {
            return Ok((nearest as usize, 1.0));
        }
        let m = s.ceil() as usize;
        Ok((m, s - (m as f64 - 1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSettings {
    /// Stop when the projected damage gradient is below this (∞-norm).
    pub tol_z: f64,
    /// Stop when one sweep lowers the functional by less than
    /// `tol_alt (1 + |F|)`.
    pub tol_alt: f64,
    pub max_sweeps: usize,
}

impl Default for StepSettings {
    fn default() -> Self {
        StepSettings {
            tol_z: 1e-9,
            tol_alt: 1e-10,
            max_sweeps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub sweeps: usize,
    /// Functional value after the initial displacement solve and after each
    /// sweep.
    pub history: Vec<f64>,
    pub damage_residual: f64,
    pub momentum_residual: f64,
    pub damage_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub m: usize,
    pub t: f64,
    pub u: Vec<f64>,
    /// Backward difference `(u^m - u^{m-1})/τ`; the initial velocity at `m = 0`.
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub diagnostics: Option<StepDiagnostics>,
}

/// Result of one incremental step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    pub value: f64,
    pub diagnostics: StepDiagnostics,
}

/// Exact minimizer in `u` for fixed `z`.
pub fn solve_momentum(ctx: &StepContext<'_>, z: &[f64]) -> Result<Vec<f64>> {
    let sp = ctx.spaces;
    let s = ctx.momentum_matrix(z)?;
    let rhs = ctx.momentum_rhs();
    let mut u = vec![0.0; sp.n_udofs()];
    for &d in sp.dirichlet_dofs() {
        u[d] = ctx.boundary[d];
    }
    let lift = s.matvec(&u);
    let free = sp.free_dofs();
    let rhs_free: Vec<f64> = free.iter().map(|&d| rhs[d] - lift[d]).collect();
    let sol = s.restrict(free).cholesky()?.solve(&rhs_free);
    for (k, &d) in free.iter().enumerate() {
        u[d] = sol[k];
    }
    Ok(u)
}

/// Alternating minimization of the step functional, starting from
/// `z = z^{m-1}`. Always ends with a displacement solve, so the momentum
/// residual is at round-off level.
pub fn incremental_step(ctx: &StepContext<'_>, solver: &dyn DamageSolver, settings: &StepSettings) -> Result<StepOutcome> {
    let mut z = ctx.z_prev.to_vec();
    let mut u = solve_momentum(ctx, &z)?;
    let mut value = ctx.terms(&u, &z).total();
    let mut history = vec![value];
    let mut damage_iterations = 0;
    let mut damage_residual = f64::INFINITY;
    for sweep in 1..=settings.max_sweeps {
        let sol = solver.solve(&ctx.damage_problem(&u), &z)?;
        damage_iterations += sol.iterations;
        z = sol.z;
        u = solve_momentum(ctx, &z)?;
        let next = ctx.terms(&u, &z).total();
        history.push(next);
        let decrease = value - next;
        value = next;
        let pb = ctx.damage_problem(&u);
        damage_residual = pb.kkt_residual(&z, &pb.grad(&z));
        if decrease <= settings.tol_alt * (1.0 + value.abs()) && damage_residual <= settings.tol_z {
            let momentum_residual = norm2(&ctx.momentum_residual(&u, &z)?);
            return Ok(StepOutcome {
                u,
                z,
                value,
                diagnostics: StepDiagnostics {
                    sweeps: sweep,
                    history,
                    damage_residual,
                    momentum_residual,
                    damage_iterations,
                },
            });
        }
    }
    Err(Error::SolverNonConvergence {
        solver: "alternating minimization".into(),
        iterations: settings.max_sweeps,
        residual: damage_residual,
    })
}

/// Everything needed to march a scenario through time.
#[derive(Debug)]
pub struct Simulation {
    pub spaces: DiscreteSpaces,
    pub material: MaterialModel,
    pub scenario: Scenario,
    pub grid: TimeGrid,
    pub settings: StepSettings,
    pub solver: Box<dyn DamageSolver>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// States `m = 0, …, M`.
    pub states: Vec<StepState>,
    /// Boundary data and loads at `t = mτ`.
    pub data: Vec<DataSample>,
    /// `u^{-1} = u⁰ - τ v⁰`.
    pub u_minus1: Vec<f64>,
}

/// Which field an interpolant is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Displacement,
    Velocity,
    Damage,
}

/// Time interpolants of a step sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolant {
    /// `x̄(t) = x^m` on `((m-1)τ, mτ]`.
    PiecewiseConstant,
    /// `x̲(t) = x^{m-1}` on `((m-1)τ, mτ]`.
    BackwardShifted,
    /// `x̂(t) = x^{m-1} + β (x^m - x^{m-1})`.
    Linear,
}

impl Trajectory {
    pub fn final_state(&self) -> &StepState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    fn field(&self, m: usize, field: Field) -> &[f64] {
        let s = &self.states[m];
        match field {
            Field::Displacement => &s.u,
            Field::Velocity => &s.v,
            Field::Damage => &s.z,
        }
    }

    /// Coefficient vector of an interpolant at time `t`.
    pub fn interpolant(&self, t: f64, kind: Interpolant, field: Field) -> Result<Vec<f64>> {
        let (m, beta) = self.grid.locate(t)?;
        let prev = m.saturating_sub(1);
        Ok(match kind {
            Interpolant::PiecewiseConstant => self.field(m, field).to_vec(),
            Interpolant::BackwardShifted => self.field(prev, field).to_vec(),
            Interpolant::Linear => {
                if m == 0 {
                    self.field(0, field).to_vec()
                } else {
                    self.field(prev, field)
                        .iter()
                        .zip(self.field(m, field))
                        .map(|(a, b)| a + beta * (b - a))
                        .collect()
                }
            }
        })
    }
}

impl Simulation {
    /// Context of step `m ≥ 1` given the already computed states.
    pub fn context<'a>(&'a self, traj: &'a Trajectory, data: &'a DataSample, m: usize) -> StepContext<'a> {
        StepContext {
            spaces: &self.spaces,
            material: &self.material,
            tau: self.grid.tau(),
            u_prev: &traj.states[m - 1].u,
            u_prevprev: if m == 1 { &traj.u_minus1 } else { &traj.states[m - 2].u },
            z_prev: &traj.states[m - 1].z,
            boundary: &data.b,
            load: &data.load,
        }
    }

    /// Initial state and the fictitious `u^{-1}`.
    pub fn initial(&self) -> Result<Trajectory> {
        let sp = &self.spaces;
        let tau = self.grid.tau();
        let u0 = self.scenario.initial_displacement(sp);
        let v0 = self.scenario.initial_velocity(sp);
        let z0 = self.scenario.initial_damage(sp);
        check_damage_field(&z0, sp.n_znodes())?;
        let u_minus1 = u0.iter().zip(&v0).map(|(u, v)| u - tau * v).collect();
        Ok(Trajectory {
            grid: self.grid,
            states: vec![StepState {
                m: 0,
                t: 0.0,
                u: u0,
                v: v0,
                z: z0,
                diagnostics: None,
            }],
            data: vec![self.scenario.eval_data(sp, 0.0)?],
            u_minus1,
        })
    }

    /// Performs step `m = traj.states.len()` and appends it.
    pub fn advance(&self, traj: &mut Trajectory) -> Result<()> {
        let m = traj.states.len();
        let t = self.grid.time(m);
        let wrap = |e: Error| Error::StepFailed { step: m, source: Box::new(e) };
        let data = self.scenario.eval_data(&self.spaces, t).map_err(wrap)?;
        let outcome = {
            let ctx = self.context(traj, &data, m);
            incremental_step(&ctx, self.solver.as_ref(), &self.settings).map_err(wrap)?
        };
        let tau = self.grid.tau();
        let v = outcome
            .u
            .iter()
            .zip(&traj.states[m - 1].u)
            .map(|(a, b)| (a - b) / tau)
            .collect();
        traj.states.push(StepState {
            m,
            t,
            u: outcome.u,
            v,
            z: outcome.z,
            diagnostics: Some(outcome.diagnostics),
        });
        traj.data.push(data);
        Ok(())
    }

    pub fn run(&self) -> Result<Trajectory> {
        let mut traj = self.initial()?;
        for _ in 0..self.grid.steps {
            self.advance(&mut traj)?;
        }
        Ok(traj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub rel_error_u: f64,
    pub rel_error_z: f64,
}

impl GradientCheck {
    pub fn max(&self) -> f64 {
        self.rel_error_u.max(self.rel_error_z)
    }
}

/// Compares analytic gradients with central differences of step `h`.
/// Only free displacement DoFs are perturbed; `z` must sit strictly inside
/// `(0, z^{m-1})` by more than `h`. Errors are `‖fd - g‖_∞ / max(1, ‖g‖_∞)`.
pub fn gradient_check(ctx: &StepContext<'_>, u: &[f64], z: &[f64], h: f64) -> Result<GradientCheck> {
    ctx.check_admissible(u, z)?;
    if let Some(i) = (0..z.len()).find(|&i| z[i] - h <= 0.0 || z[i] + h >= ctx.z_prev[i]) {
        return Err(Error::Usage(format!(
            "gradient check needs z strictly inside the box; node {i} is within {h:e} of a bound"
        )));
    }
    let value = |u: &[f64], z: &[f64]| ctx.terms(u, z).total();
    let gu = ctx.grad_u(u, z)?;
    let free = ctx.spaces.free_dofs();
    let mut err_u: f64 = 0.0;
    let mut up = u.to_vec();
    for &d in free {
        up[d] = u[d] + h;
        let fp = value(&up, z);
        up[d] = u[d] - h;
        let fm = value(&up, z);
        up[d] = u[d];
        err_u = err_u.max(((fp - fm) / (2.0 * h) - gu[d]).abs());
    }
    let scale_u = free.iter().map(|&d| gu[d].abs()).fold(1.0, f64::max);
    let gz = ctx.grad_z(u, z);
    let mut err_z: f64 = 0.0;
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        zp[i] = z[i] + h;
        let fp = value(u, &zp);
        zp[i] = z[i] - h;
        let fm = value(u, &zp);
        zp[i] = z[i];
        err_z = err_z.max(((fp - fm) / (2.0 * h) - gz[i]).abs());
    }
    Ok(GradientCheck {
        rel_error_u: err_u / scale_u,
        rel_error_z: err_z / norm_inf(&gz).max(1.0),
    })
}

/// True when the sweep history never increases beyond round-off.
pub fn history_nonincreasing(history: &[f64]) -> bool {
    history
        .windows(2)
        .all(|w| w[1] <= w[0] + HISTORY_SLACK * (1.0 + w[0].abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{Endpoint, Mesh1D};
    use crate::scenarios::{AffineField, RampBoundary};

    fn simulation(scenario: Scenario, n: usize, steps: usize, solver: &str) -> Simulation {
        let mesh = Mesh1D::new(1.0, n, vec![Endpoint::Left, Endpoint::Right]).unwrap();
        Simulation {
            spaces: DiscreteSpaces::new(mesh),
            material: MaterialModel::default(),
            grid: TimeGrid::new(scenario.final_time, steps).unwrap(),
            scenario,
            settings: StepSettings::default(),
            solver: build_damage_solver(solver, DamageSolverSettings::default()).unwrap(),
        }
    }

    fn damaging(rate: f64) -> Scenario {
        let mut sc = Scenario::stretching(rate, 1.0);
        sc.v0 = Box::new(AffineField { offset: 0.0, slope: rate });
        sc
    }

    #[test]
    fn quiescent_state_is_a_fixed_point() {
        let sim = simulation(Scenario::quiescent(1.0), 8, 5, "projected-newton");
        let traj = sim.run().unwrap();
        for s in &traj.states {
            assert!(s.u.iter().all(|v| *v == 0.0));
            assert!(s.z.iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn locate_examples() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let (m, b) = g.locate(0.25).unwrap();
        assert_eq!(m, 3);
        assert!((b - 0.5).abs() < 1e-12);
        assert_eq!(g.locate(0.3).unwrap(), (3, 1.0));
        assert_eq!(g.locate(0.0).unwrap(), (0, 1.0));
        assert_eq!(g.locate(1.0).unwrap(), (10, 1.0));
        assert!(matches!(g.locate(1.2), Err(Error::Domain(_))));
        assert!(matches!(g.locate(-0.1), Err(Error::Domain(_))));
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn interpolants_on_a_ramp() {
        let sim = simulation(damaging(0.3), 4, 10, "projected-newton");
        let traj = sim.run().unwrap();
        let lin = traj.interpolant(0.25, Interpolant::Linear, Field::Displacement).unwrap();
        let bar = traj.interpolant(0.25, Interpolant::PiecewiseConstant, Field::Displacement).unwrap();
        let under = traj.interpolant(0.25, Interpolant::BackwardShifted, Field::Displacement).unwrap();
        for k in 0..lin.len() {
            assert!((lin[k] - 0.5 * (traj.states[2].u[k] + traj.states[3].u[k])).abs() < 1e-14);
            assert_eq!(bar[k], traj.states[3].u[k]);
            assert_eq!(under[k], traj.states[2].u[k]);
        }
        assert!(traj.interpolant(1.5, Interpolant::Linear, Field::Damage).is_err());
    }

    #[test]
    fn damaging_steps_are_consistent() {
        let sim = simulation(damaging(5.0), 8, 6, "projected-newton");
        let traj = sim.run().unwrap();
        let last = traj.final_state();
        assert!(last.z.iter().any(|z| *z < 0.99), "ramp should damage the bar");
        for w in traj.states.windows(2) {
            for (a, b) in w[1].z.iter().zip(&w[0].z) {
                assert!(a <= b && *a >= 0.0);
            }
            let d = w[1].diagnostics.as_ref().unwrap();
            assert!(history_nonincreasing(&d.history), "{:?}", d.history);
            assert!(d.momentum_residual <= 1e-9);
            assert!(d.damage_residual <= 1e-9);
        }
    }

    #[test]
    fn solvers_agree() {
        let a = simulation(damaging(5.0), 6, 3, "projected-newton").run().unwrap();
        let mut sim = simulation(damaging(5.0), 6, 3, "projected-gradient");
        sim.solver = build_damage_solver(
            "projected-gradient",
            DamageSolverSettings { tol: 1e-10, max_iter: 100_000 },
        )
        .unwrap();
        let b = sim.run().unwrap();
        for (x, y) in a.final_state().z.iter().zip(&b.final_state().z) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn unknown_solver_suggests_name() {
        let err = build_damage_solver("projected-newtn", DamageSolverSettings::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("did you mean `projected-newton`"), "{err}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let sim = simulation(damaging(2.0), 5, 4, "projected-newton");
        let traj = sim.initial().unwrap();
        let data = sim.scenario.eval_data(&sim.spaces, sim.grid.time(1)).unwrap();
        let mut z_prev = traj.states[0].z.clone();
        z_prev.iter_mut().for_each(|z| *z = 0.9);
        let mut traj = traj;
        traj.states[0].z = z_prev;
        let ctx = sim.context(&traj, &data, 1);
        let mut u = solve_momentum(&ctx, &ctx.z_prev.to_vec()).unwrap();
        for (k, v) in u.iter_mut().enumerate() {
            if !sim.spaces.dirichlet_dofs().contains(&k) {
                *v += 0.01 * (k as f64).sin();
            }
        }
        let z: Vec<f64> = (0..6).map(|i| 0.3 + 0.1 * i as f64).collect();
        let chk = gradient_check(&ctx, &u, &z, 1e-6).unwrap();
        assert!(chk.max() < 1e-6, "{chk:?}");
    }

    #[test]
    fn gradient_check_rejects_boundary_points() {
        let sim = simulation(damaging(2.0), 3, 2, "projected-newton");
        let traj = sim.initial().unwrap();
        let data = sim.scenario.eval_data(&sim.spaces, sim.grid.time(1)).unwrap();
        let ctx = sim.context(&traj, &data, 1);
        let u = solve_momentum(&ctx, ctx.z_prev).unwrap();
        assert!(matches!(
            gradient_check(&ctx, &u, ctx.z_prev, 1e-6),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn momentum_solve_respects_trace() {
        let sc = Scenario {
            boundary: Box::new(RampBoundary { rate: 1.0 }),
            ..Scenario::quiescent(1.0)
        };
        let sim = simulation(sc, 4, 2, "projected-newton");
        let traj = sim.run().unwrap();
        let s = &traj.states[2];
        assert!((s.u[8] - 1.0).abs() < 1e-15 && s.u[0] == 0.0);
    }

    #[test]
    fn invalid_initial_damage_is_rejected() {
        let mut sc = Scenario::quiescent(1.0);
        sc.z0 = Box::new(crate::scenarios::UniformDamage { value: 1.2 });
        let sim = simulation(sc, 4, 2, "projected-newton");
        assert!(matches!(sim.run(), Err(Error::Domain(_))));
    }
}
