//! Box-constrained minimizers for the damage subproblem.

use std::sync::OnceLock;

use serde::Deserialize;
use serde_json::{Map, Value};

use super::functional::DamageProblem;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::registry::{params, Registry};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Relative size below which a predicted decrease is lost in the
/// round-off of the objective.
const ROUNDOFF: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct DamageSolution {
    pub z: Vec<f64>,
    pub iterations: usize,
    /// Projected-gradient residual at `z`.
    pub residual: f64,
}

pub trait DamageSolver: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Minimizes `problem` starting from `start` (projected onto the box
    /// first). Never returns a point with a larger objective than the
    /// projected start.
    fn solve(&self, problem: &DamageProblem<'_>, start: &[f64]) -> Result<DamageSolution>;
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamageSolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DamageSolverSettings {
    fn default() -> Self {
        DamageSolverSettings {
            tol: 1e-9,
            max_iter: 500,
        }
    }
}

pub fn damage_solver_registry() -> &'static Registry<dyn DamageSolver> {
    static REG: OnceLock<Registry<dyn DamageSolver>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("damage solver");
        r.register("projected-newton", projected_newton)
            .register("projected-gradient", projected_gradient);
        r
    })
}

fn projected_newton(m: &Map<String, Value>, path: &str) -> Result<Box<dyn DamageSolver>> {
    Ok(Box::new(ProjectedNewton::new(settings(m, path)?)))
}

fn projected_gradient(m: &Map<String, Value>, path: &str) -> Result<Box<dyn DamageSolver>> {
    Ok(Box::new(ProjectedGradient::new(settings(m, path)?)))
}

fn settings(map: &Map<String, Value>, path: &str) -> Result<DamageSolverSettings> {
    let s: DamageSolverSettings = params(map, path)?;
    if !(s.tol > 0.0) {
        return Err(Error::config(format!("{path}.tol"), "must be positive"));
    }
    Ok(s)
}

/// Builds a registered solver by name.
pub fn build_damage_solver(name: &str, settings: DamageSolverSettings) -> Result<Box<dyn DamageSolver>> {
    let entry = serde_json::json!({
        "family": name,
        "tol": settings.tol,
        "max_iter": settings.max_iter,
    });
    damage_solver_registry().build(&entry, "solver.damage_solver")
}

/// Projected Newton with active-set freezing: variables within `ε` of a
/// bound whose gradient points outward are moved by a scaled gradient step,
/// the rest by a Newton step on the free block. Falls back to a projected
/// gradient step whenever the Newton direction does not produce descent.
#[derive(Debug, Clone)]
pub struct ProjectedNewton {
    pub settings: DamageSolverSettings,
}

impl ProjectedNewton {
    pub fn new(settings: DamageSolverSettings) -> Self {
        ProjectedNewton { settings }
    }

    fn newton_step(&self, pb: &DamageProblem<'_>, z: &[f64], g: &[f64], f: f64, r: f64) -> Option<(Vec<f64>, f64)> {
        let n = z.len();
        let eps = r.min(1e-3);
        let active: Vec<bool> = (0..n)
            .map(|i| {
                let (lo, hi) = (pb.lower(i), pb.upper(i));
                hi - lo <= 0.0 || (z[i] <= lo + eps && g[i] > 0.0) || (z[i] >= hi - eps && g[i] < 0.0)
            })
            .collect();
        let hess = pb.hess(z);
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let mut d = vec![0.0; n];
        if !free.is_empty() {
            let chol = hess.restrict(&free).cholesky().ok()?;
            let gf: Vec<f64> = free.iter().map(|&i| -g[i]).collect();
            for (k, v) in chol.solve(&gf).into_iter().enumerate() {
                d[free[k]] = v;
            }
        }
        for i in (0..n).filter(|&i| active[i]) {
            d[i] = -g[i] / hess.get(i, i).max(1e-12);
        }
        let free_decrease: f64 = free.iter().map(|&i| -g[i] * d[i]).sum();
        if free_decrease < 0.0 {
            return None;
        }
        let mut alpha = 1.0;
        let mut first: Option<(Vec<f64>, f64)> = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            pb.project(&mut trial);
            let ft = pb.value(&trial);
            let active_decrease: f64 = (0..n)
                .filter(|&i| active[i])
                .map(|i| g[i] * (z[i] - trial[i]))
                .sum();
            if first.is_none() && free_decrease + active_decrease <= ROUNDOFF * (1.0 + f.abs()) {
                return accept_at_roundoff(pb, z, g, f, (trial, ft));
            }
            if ft <= f - ARMIJO * (alpha * free_decrease + active_decrease) {
                return Some((trial, ft));
            }
            if first.is_none() {
                first = Some((trial, ft));
            }
            alpha *= 0.5;
        }
        accept_at_roundoff(pb, z, g, f, first?)
    }
}

impl DamageSolver for ProjectedNewton {
    fn name(&self) -> &'static str {
        "projected-newton"
    }

    fn solve(&self, pb: &DamageProblem<'_>, start: &[f64]) -> Result<DamageSolution> {
        let mut z = start.to_vec();
        pb.project(&mut z);
        let mut f = pb.value(&z);
        let mut residual = f64::INFINITY;
        for it in 0..self.settings.max_iter {
            let g = pb.grad(&z);
            residual = pb.kkt_residual(&z, &g);
            if residual <= self.settings.tol {
                return Ok(DamageSolution { z, iterations: it, residual });
            }
            let step = self
                .newton_step(pb, &z, &g, f, residual)
                .or_else(|| projected_gradient_step(pb, &z, &g, f));
            match step {
                Some((zn, fnew)) => {
                    z = zn;
                    f = fnew;
                }
                None => return Err(stalled(self.name(), it, residual)),
            }
        }
        Err(stalled(self.name(), self.settings.max_iter, residual))
    }
}

fn stalled(solver: &str, iterations: usize, residual: f64) -> Error {
    Error::SolverNonConvergence {
        solver: solver.into(),
        iterations,
        residual,
    }
}

/// Projected gradient with Armijo backtracking along the projection arc.
#[derive(Debug, Clone)]
pub struct ProjectedGradient {
    pub settings: DamageSolverSettings,
}

impl ProjectedGradient {
    pub fn new(settings: DamageSolverSettings) -> Self {
        ProjectedGradient { settings }
    }
}

fn projected_gradient_step(pb: &DamageProblem<'_>, z: &[f64], g: &[f64], f: f64) -> Option<(Vec<f64>, f64)> {
    // Gershgorin bound on the Hessian gives a first step length.
    let hess = pb.hess(z);
    let n = z.len();
    let lip = (0..n)
        .map(|i| {
            (i.saturating_sub(1)..(i + 2).min(n))
                .map(|j| hess.get(i, j).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut alpha = 1.0 / lip;
    let mut first: Option<(Vec<f64>, f64)> = None;
    for _ in 0..MAX_BACKTRACKS {
        let mut trial: Vec<f64> = z.iter().zip(g).map(|(a, b)| a - alpha * b).collect();
        pb.project(&mut trial);
        let ft = pb.value(&trial);
        let step: Vec<f64> = trial.iter().zip(z).map(|(a, b)| a - b).collect();
        let predicted = -dot(g, &step);
        if first.is_none() && predicted <= ROUNDOFF * (1.0 + f.abs()) {
            return accept_at_roundoff(pb, z, g, f, (trial, ft));
        }
        if ft <= f - ARMIJO * predicted {
            return Some((trial, ft));
        }
        if first.is_none() {
            first = Some((trial, ft));
        }
        alpha *= 0.5;
    }
    accept_at_roundoff(pb, z, g, f, first?)
}

/// Near a solution the predicted decrease drops below round-off in `f`.
/// Accepts a trial point that does not measurably increase `f` and improves
/// stationarity.
fn accept_at_roundoff(
    pb: &DamageProblem<'_>,
    z: &[f64],
    g: &[f64],
    f: f64,
    (trial, ft): (Vec<f64>, f64),
) -> Option<(Vec<f64>, f64)> {
    let gt = pb.grad(&trial);
    if ft <= f + 0.1 * ROUNDOFF * (1.0 + f.abs()) && pb.kkt_residual(&trial, &gt) < pb.kkt_residual(z, g) {
        Some((trial, ft.min(f)))
    } else {
        None
    }
}

impl DamageSolver for ProjectedGradient {
    fn name(&self) -> &'static str {
        "projected-gradient"
    }

    fn solve(&self, pb: &DamageProblem<'_>, start: &[f64]) -> Result<DamageSolution> {
        let mut z = start.to_vec();
        pb.project(&mut z);
        let mut f = pb.value(&z);
        let mut residual = f64::INFINITY;
        for it in 0..self.settings.max_iter {
            let g = pb.grad(&z);
            residual = pb.kkt_residual(&z, &g);
            if residual <= self.settings.tol {
                return Ok(DamageSolution { z, iterations: it, residual });
            }
            match projected_gradient_step(pb, &z, &g, f) {
                Some((zn, fnew)) => {
                    z = zn;
                    f = fnew;
                }
                None => return Err(stalled(self.name(), it, residual)),
            }
        }
        Err(stalled(self.name(), self.settings.max_iter, residual))
    }
}
