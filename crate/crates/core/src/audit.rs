//! Energy bookkeeping and a-posteriori checks of a computed trajectory.
//!
//! The auditor only trusts the displacement and damage coefficients of each
//! step. Velocities are rebuilt from backward differences, the data are
//! re-evaluated from the scenario, and every residual is recomputed.
//!
//! For an exact stationary point of every step functional the discrete
//! energy balance
//!
//! `F(m) + K(m) + D(m) + E1(m) + E2(m) ≤ F(0) + K(0) + Wext(m)`
//!
//! holds with a nonnegative slack made of convexity gaps, so a negative
//! slack beyond round-off means the steps were not solved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretization::{DiscreteSpaces, NQ};
use crate::error::Result;
use crate::linalg::{dot, norm2, sub};
use crate::material::MaterialModel;
use crate::scenarios::DataSample;
use crate::stepper::{Simulation, StepContext, Trajectory, CONSTRAINT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditSettings {
    /// Nodes with `z ≤ eps_act` count as fully damaged.
    pub eps_act: f64,
    /// Relative tolerance of the energy inequality.
    pub eps_audit: f64,
    /// Relative tolerance of the variational inequality.
    pub vi_tol: f64,
    /// Absolute bound on the momentum residual (Euclidean norm).
    pub momentum_tol: f64,
    pub telescoping_tol: f64,
    /// Random test functions per step in the variational inequality.
    pub vi_samples: usize,
    pub seed: u64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings {
            eps_act: 1e-10,
            eps_audit: 1e-7,
            vi_tol: 1e-8,
            momentum_tol: 1e-9,
            telescoping_tol: 1e-10,
            vi_samples: 8,
            seed: 0,
        }
    }
}

/// One line of the energy ledger. `D`, `Wext_1`, `Wext_2`, `Wext_4`,
/// `Wext_5`, `E1`, `E2` are cumulative; `Wext_3` is the boundary term
/// `v^m·M ḃ^m - v⁰·M ḃ⁰` of the summation by parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub m: usize,
    pub t: f64,
    pub stored: f64,
    pub kinetic: f64,
    pub dissipated: f64,
    pub wext: [f64; 5],
    pub e1: f64,
    pub e2: f64,
    pub slack: f64,
    pub xi_min: f64,
    pub vi_min: f64,
}

impl LedgerRow {
    pub fn work(&self) -> f64 {
        self.wext.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value.
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub rows: Vec<LedgerRow>,
    pub checks: Vec<CheckResult>,
    /// Slack of the balance without the regularization and the
    /// linearization errors; reported, not checked.
    pub limit_slack: Vec<f64>,
    pub momentum_residuals: Vec<f64>,
    /// `Σ w_i ξ_i (z^m_i - z^{m-1}_i)` over nodes that were already fully
    /// damaged at the start of the step.
    pub xi_orthogonality: f64,
    /// Same sum over nodes that reached full damage during the step.
    pub xi_transition: f64,
    pub transition_nodes: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Smallest slack over the steps `m ≥ 1` (zero without steps).
    pub fn min_slack(&self) -> f64 {
        if self.rows.len() < 2 {
            return 0.0;
        }
        self.rows[1..].iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }
}

/// `(1/p)∫|z'|^p + ∫W(u', z) + ∫f(z) + (δ/2)|u|²_B`.
pub fn stored_energy(sp: &DiscreteSpaces, m: &MaterialModel, u: &[f64], z: &[f64]) -> f64 {
    bulk_energy(sp, m, u, z) + 0.5 * m.delta * sp.bilaplacian.bilinear(u, u)
}

fn bulk_energy(sp: &DiscreteSpaces, m: &MaterialModel, u: &[f64], z: &[f64]) -> f64 {
    let mut acc = sp.p_laplacian_energy(z, m.p);
    for e in 0..sp.n_elements() {
        for q in 0..NQ {
            let zq = sp.damage_at(z, e, q);
            let eps = sp.strain(u, e, q);
            acc += sp.weight(q) * (0.5 * m.h(zq) * m.c0 * eps * eps + m.f(zq));
        }
    }
    acc
}

/// Linearization errors of one step: elastic part (`E1`) and potential
/// part (`E2`).
fn linearization_errors(
    sp: &DiscreteSpaces,
    m: &MaterialModel,
    u_prev: &[f64],
    u: &[f64],
    z_prev: &[f64],
    z: &[f64],
) -> (f64, f64) {
    let (mut e1, mut e2) = (0.0, 0.0);
    for e in 0..sp.n_elements() {
        for q in 0..NQ {
            let w = sp.weight(q);
            let zq = sp.damage_at(z, e, q);
            let zp = sp.damage_at(z_prev, e, q);
            let ep = sp.strain(u_prev, e, q);
            let ec = sp.strain(u, e, q);
            e1 += w * 0.5 * m.c0 * ((m.h(zp) - m.h(zq)) * ep * ep + m.dh(zq) * ec * ec * (zq - zp));
            e2 += w * (-(m.f(zq) - m.f(zp)) + m.df(zq) * (zq - zp));
        }
    }
    (e1, e2)
}

struct Accumulators {
    dissipated: f64,
    wext: [f64; 5],
    e1: f64,
    e2: f64,
    telescoped: f64,
}

/// Audits `traj` against the data and material of `sim`.
pub fn audit(sim: &Simulation, traj: &Trajectory, settings: &AuditSettings) -> Result<AuditReport> {
    let sp = &sim.spaces;
    let mat = &sim.material;
    let grid = sim.grid;
    let tau = grid.tau();
    let n_steps = traj.states.len() - 1;
    let mass = &sp.mass_u;

    let data: Vec<DataSample> = (0..=n_steps)
        .map(|m| sim.scenario.eval_data(sp, grid.time(m)))
        .collect::<Result<_>>()?;
    let u: Vec<&[f64]> = traj.states.iter().map(|s| s.u.as_slice()).collect();
    let z: Vec<&[f64]> = traj.states.iter().map(|s| s.z.as_slice()).collect();
    let v0 = sim.scenario.initial_velocity(sp);
    let mut v: Vec<Vec<f64>> = vec![v0.clone()];
    for m in 1..=n_steps {
        v.push(sub(u[m], u[m - 1]).into_iter().map(|d| d / tau).collect());
    }
    let u_minus1: Vec<f64> = u[0].iter().zip(&v0).map(|(a, b)| a - tau * b).collect();
    // ḃ^0 is the interpolated data rate, ḃ^m the backward difference.
    let mut db: Vec<Vec<f64>> = vec![data[0].b_dot.clone()];
    for m in 1..=n_steps {
        db.push(sub(&data[m].b, &data[m - 1].b).into_iter().map(|d| d / tau).collect());
    }

    let f0 = stored_energy(sp, mat, u[0], z[0]);
    let k0 = 0.5 * mass.bilinear(&v[0], &v[0]);
    let reg = |x: &[f64]| 0.5 * mat.delta * sp.bilaplacian.bilinear(x, x);
    let f0_lim = f0 - reg(u[0]);
    let boundary0 = dot(&mass.matvec(&v[0]), &db[0]);

    let mut rows = vec![LedgerRow {
        m: 0,
        t: 0.0,
        stored: f0,
        kinetic: k0,
        dissipated: 0.0,
        wext: [0.0; 5],
        e1: 0.0,
        e2: 0.0,
        slack: 0.0,
        xi_min: 0.0,
        vi_min: 0.0,
    }];
    let mut limit_slack = vec![0.0];
    let mut momentum_residuals = vec![0.0];
    let mut acc = Accumulators {
        dissipated: 0.0,
        wext: [0.0; 5],
        e1: 0.0,
        e2: 0.0,
        telescoped: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let (mut energy_worst, mut energy_ok) = (f64::INFINITY, true);
    let mut tele_err: f64 = 0.0;
    let mut tele_ok = true;
    let mut irreversible_worst: f64 = 0.0;
    let (mut vi_worst, mut vi_ok) = (f64::INFINITY, true);
    let (mut consolidated_worst, mut consolidated_ok) = (f64::INFINITY, true);
    let mut xi_max: f64 = f64::NEG_INFINITY;
    let (mut orth, mut orth_scale, mut transition, mut transition_nodes) = (0.0, 0.0, 0.0, 0);
    let lumped = &sp.lumped_z;

    for m in 1..=n_steps {
        let ctx = StepContext {
            spaces: sp,
            material: mat,
            tau,
            u_prev: u[m - 1],
            u_prevprev: if m == 1 { &u_minus1 } else { u[m - 2] },
            z_prev: z[m - 1],
            boundary: &data[m].b,
            load: &data[m].load,
        };
        let delta_b = sub(&data[m].b, &data[m - 1].b);
        let du = sub(u[m], u[m - 1]);

        // Feasibility: a broken box invalidates the remaining checks.
        for i in 0..z[m].len() {
            let over = z[m][i] - z[m - 1][i];
            let under = -z[m][i];
            irreversible_worst = irreversible_worst.max(over).max(under);
        }
        let feasible = ctx.check_admissible(u[m], z[m]).is_ok();

        let stiffness = sp.assemble_stiffness(z[m], mat)?;
        acc.wext[0] += dot(&stiffness.matvec(u[m]), &delta_b);
        acc.wext[1] -= dot(&mass.matvec(&v[m - 1]), &sub(&db[m], &db[m - 1]));
        acc.wext[2] = dot(&mass.matvec(&v[m]), &db[m]) - boundary0;
        acc.wext[3] += dot(&data[m].load, &sub(&du, &delta_b));
        acc.wext[4] += mat.delta * dot(&sp.bilaplacian.matvec(u[m]), &delta_b);
        let dz = sub(z[m], z[m - 1]);
        acc.dissipated += sp.mass_z.bilinear(&dz, &dz) / tau;
        let (e1, e2) = linearization_errors(sp, mat, u[m - 1], u[m], z[m - 1], z[m]);
        acc.e1 += e1;
        acc.e2 += e2;
        acc.telescoped += dot(&mass.matvec(&sub(&v[m], &v[m - 1])), &db[m]);

        let stored = stored_energy(sp, mat, u[m], z[m]);
        let kinetic = 0.5 * mass.bilinear(&v[m], &v[m]);
        let work: f64 = acc.wext.iter().sum();
        let rhs = f0 + k0 + work;
        let slack = rhs - (stored + kinetic + acc.dissipated + acc.e1 + acc.e2);
        let tol = settings.eps_audit * (1.0 + rhs.abs());
        energy_worst = energy_worst.min(slack);
        energy_ok &= slack >= -tol;
        limit_slack.push(
            f0_lim + k0 + work - acc.wext[4] - (stored - reg(u[m]) + kinetic + acc.dissipated),
        );

        let tele = acc.wext[1] + acc.wext[2];
        let err = (tele - acc.telescoped).abs();
        tele_err = tele_err.max(err);
        tele_ok &= err <= settings.telescoping_tol * (1.0 + acc.telescoped.abs());

        momentum_residuals.push(norm2(&ctx.momentum_residual(u[m], z[m])?));

        // Variational inequality `G(z^m)·(ζ - z^m) ≥ 0` on sampled ζ.
        let g = ctx.grad_z(u[m], z[m]);
        let scale = z[m].len() as f64 * (1.0 + g.iter().fold(0.0_f64, |a, x| a.max(x.abs())));
        let mut tests: Vec<Vec<f64>> = vec![vec![0.0; z[m].len()], z[m - 1].to_vec(), z[m].to_vec()];
        for _ in 0..settings.vi_samples {
            tests.push(z[m - 1].iter().map(|zp| rng.random::<f64>() * zp).collect());
        }
        let vi_min = tests
            .iter()
            .map(|zeta| dot(&g, &sub(zeta, z[m])))
            .fold(f64::INFINITY, f64::min);
        vi_worst = vi_worst.min(vi_min / scale);
        vi_ok &= feasible && vi_min >= -settings.vi_tol * scale;

        // Multiplier of `z ≥ 0` as a density: ξ_i = -max(0, G_i)/w_i on
        // fully damaged nodes.
        let xi: Vec<f64> = (0..g.len())
            .map(|i| if z[m][i] <= settings.eps_act { -g[i].max(0.0) / lumped[i] } else { 0.0 })
            .collect();
        let xi_min = xi.iter().copied().fold(0.0, f64::min);
        xi_max = xi_max.max(xi.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        for i in 0..xi.len() {
            let term = lumped[i] * xi[i] * dz[i];
            if z[m - 1][i] > settings.eps_act && z[m][i] <= settings.eps_act {
                transition += term;
                transition_nodes += 1;
            } else {
                orth += term;
            }
            orth_scale += lumped[i] * xi[i].abs();
        }
        // `G·ζ + Σ w ξ ζ ≥ 0` for directions ζ ≤ 0.
        for _ in 0..settings.vi_samples.max(1) {
            let zeta: Vec<f64> = (0..g.len()).map(|_| -rng.random::<f64>()).collect();
            let val: f64 = (0..g.len()).map(|i| (g[i] + lumped[i] * xi[i]) * zeta[i]).sum();
            let s = scale / z[m].len() as f64 * norm2(&zeta).max(1.0);
            consolidated_worst = consolidated_worst.min(val / s);
            consolidated_ok &= feasible && val >= -settings.vi_tol * scale;
        }

        rows.push(LedgerRow {
            m,
            t: grid.time(m),
            stored,
            kinetic,
            dissipated: acc.dissipated,
            wext: acc.wext,
            e1: acc.e1,
            e2: acc.e2,
            slack,
            xi_min,
            vi_min,
        });
    }

    let momentum_worst = momentum_residuals.iter().copied().fold(0.0, f64::max);
    let orth_tol = 1e-8 * (1.0 + orth_scale);
    let checks = vec![
        CheckResult {
            name: "energy_inequality".into(),
            passed: energy_ok,
            value: if n_steps == 0 { 0.0 } else { energy_worst },
            threshold: -settings.eps_audit,
        },
        CheckResult {
            name: "momentum_residual".into(),
            passed: momentum_worst <= settings.momentum_tol,
            value: momentum_worst,
            threshold: settings.momentum_tol,
        },
        CheckResult {
            name: "irreversibility".into(),
            passed: irreversible_worst <= CONSTRAINT_TOL,
            value: irreversible_worst,
            threshold: CONSTRAINT_TOL,
        },
        CheckResult {
            name: "variational_inequality".into(),
            passed: vi_ok,
            value: if n_steps == 0 { 0.0 } else { vi_worst },
            threshold: -settings.vi_tol,
        },
        CheckResult {
            name: "xi_sign".into(),
            passed: xi_max <= 0.0 || n_steps == 0,
            value: if n_steps == 0 { 0.0 } else { xi_max },
            threshold: 0.0,
        },
        CheckResult {
            name: "xi_orthogonality".into(),
            passed: orth.abs() <= orth_tol,
            value: orth.abs(),
            threshold: orth_tol,
        },
        CheckResult {
            name: "xi_consolidated".into(),
            passed: consolidated_ok,
            value: if n_steps == 0 { 0.0 } else { consolidated_worst },
            threshold: -settings.vi_tol,
        },
        CheckResult {
            name: "telescoping".into(),
            passed: tele_ok,
            value: tele_err,
            threshold: settings.telescoping_tol,
        },
    ];
    Ok(AuditReport {
        rows,
        checks,
        limit_slack,
        momentum_residuals,
        xi_orthogonality: orth,
        xi_transition: transition,
        transition_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{Endpoint, Mesh1D};
    use crate::scenarios::{AffineField, Scenario};
    use crate::stepper::{build_damage_solver, DamageSolverSettings, StepSettings, TimeGrid};

    fn sim(scenario: Scenario, material: MaterialModel, n: usize, steps: usize) -> Simulation {
        Simulation {
            spaces: DiscreteSpaces::new(Mesh1D::new(1.0, n, vec![Endpoint::Left, Endpoint::Right]).unwrap()),
            material,
            grid: TimeGrid::new(scenario.final_time, steps).unwrap(),
            scenario,
            settings: StepSettings::default(),
            solver: build_damage_solver("projected-newton", DamageSolverSettings::default()).unwrap(),
        }
    }

    fn damaging(rate: f64) -> Scenario {
        let mut sc = Scenario::stretching(rate, 1.0);
        sc.v0 = Box::new(AffineField { offset: 0.0, slope: rate });
        sc
    }

    #[test]
    fn quiescent_ledger_is_zero() {
        let s = sim(Scenario::quiescent(1.0), MaterialModel::default(), 4, 3);
        let traj = s.run().unwrap();
        let rep = audit(&s, &traj, &AuditSettings::default()).unwrap();
        assert!(rep.passed());
        for r in &rep.rows {
            assert_eq!(r.kinetic, 0.0);
            assert_eq!(r.dissipated, 0.0);
            assert_eq!(r.slack, 0.0);
            assert_eq!(r.work(), 0.0);
        }
    }

    #[test]
    fn damaging_run_passes_all_checks() {
        let s = sim(damaging(4.0), MaterialModel::default(), 8, 10);
        let traj = s.run().unwrap();
        let rep = audit(&s, &traj, &AuditSettings::default()).unwrap();
        assert!(rep.passed(), "{:#?}", rep.checks);
        assert!(rep.rows.last().unwrap().dissipated > 0.0);
    }

    #[test]
    fn wave_run_passes_all_checks() {
        let s = sim(Scenario::stretching(1.5, 1.0), MaterialModel::default(), 8, 16);
        let traj = s.run().unwrap();
        let rep = audit(&s, &traj, &AuditSettings::default()).unwrap();
        assert!(rep.passed(), "{:#?}", rep.checks);
    }

    #[test]
    fn perturbed_damage_fails() {
        let s = sim(damaging(4.0), MaterialModel::default(), 8, 6);
        let mut traj = s.run().unwrap();
        let frozen = (0..traj.states[3].z.len()).find(|&i| traj.states[3].z[i] == traj.states[2].z[i]);
        traj.states[3].z[frozen.unwrap_or(0)] += 1e-3;
        let rep = audit(&s, &traj, &AuditSettings::default()).unwrap();
        assert!(!rep.passed());
        assert!(!rep.check("variational_inequality").unwrap().passed);
        if frozen.is_some() {
            assert!(!rep.check("irreversibility").unwrap().passed);
        }
    }

    #[test]
    fn unsolved_step_breaks_the_energy_balance() {
        let s = sim(damaging(4.0), MaterialModel::default(), 8, 6);
        let mut traj = s.run().unwrap();
        // undo all damage evolution: the balance must notice
        let z0 = traj.states[0].z.clone();
        for st in traj.states.iter_mut() {
            st.z = z0.clone();
        }
        let rep = audit(&s, &traj, &AuditSettings::default()).unwrap();
        assert!(!rep.check("variational_inequality").unwrap().passed);
    }
}
