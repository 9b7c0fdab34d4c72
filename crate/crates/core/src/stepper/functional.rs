//! The per-step incremental functional and its derivatives.

use crate::discretization::{check_damage_field, DiscreteSpaces, NQ};
use crate::error::{Error, Result};
use crate::linalg::{dot, SymBand};
use crate::material::MaterialModel;

/// Tolerance for the Dirichlet trace and the damage box when a point is
/// checked for admissibility.
pub const CONSTRAINT_TOL: f64 = 1e-12;

/// Everything step `m` needs from the past and from the data.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub spaces: &'a DiscreteSpaces,
    pub material: &'a MaterialModel,
    pub tau: f64,
    pub u_prev: &'a [f64],
    pub u_prevprev: &'a [f64],
    pub z_prev: &'a [f64],
    /// Hermite interpolant of `b(mτ)`; only its Dirichlet values matter.
    pub boundary: &'a [f64],
    /// Load vector of `ℓ(mτ)`.
    pub load: &'a [f64],
}

/// The seven contributions to the step functional.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FunctionalTerms {
    pub gradient: f64,
    pub elastic: f64,
    pub potential: f64,
    pub load: f64,
    pub regularization: f64,
    pub damage_rate: f64,
    pub inertia: f64,
}

impl FunctionalTerms {
    pub fn total(&self) -> f64 {
        self.gradient
            + self.elastic
            + self.potential
            + self.load
            + self.regularization
            + self.damage_rate
            + self.inertia
    }
}

impl<'a> StepContext<'a> {
    /// `2u^{m-1} - u^{m-2}`.
    pub fn predictor(&self) -> Vec<f64> {
        self.u_prev
            .iter()
            .zip(self.u_prevprev)
            .map(|(a, b)| 2.0 * a - b)
            .collect()
    }

    pub fn check_admissible(&self, u: &[f64], z: &[f64]) -> Result<()> {
        let sp = self.spaces;
        if u.len() != sp.n_udofs() {
            return Err(Error::Usage(format!(
                "displacement has {} DoFs, expected {}",
                u.len(),
                sp.n_udofs()
            )));
        }
        for &d in sp.dirichlet_dofs() {
            if (u[d] - self.boundary[d]).abs() > CONSTRAINT_TOL * (1.0 + self.boundary[d].abs()) {
                return Err(Error::Domain(format!(
                    "displacement {} violates the Dirichlet value {} at DoF {d}",
                    u[d], self.boundary[d]
                )));
            }
        }
        check_damage_field(z, sp.n_znodes())?;
        if let Some(i) = (0..z.len()).find(|&i| z[i] > self.z_prev[i] + CONSTRAINT_TOL || z[i] < -CONSTRAINT_TOL) {
            return Err(Error::Domain(format!(
                "damage {} at node {i} outside [0, z_prev = {}]",
                z[i], self.z_prev[i]
            )));
        }
        Ok(())
    }

    /// Value of the step functional after checking admissibility.
    pub fn functional_value(&self, u: &[f64], z: &[f64]) -> Result<f64> {
        self.check_admissible(u, z)?;
        Ok(self.terms(u, z).total())
    }

    pub fn terms(&self, u: &[f64], z: &[f64]) -> FunctionalTerms {
        let sp = self.spaces;
        let m = self.material;
        let mut elastic = 0.0;
        let mut potential = 0.0;
        for e in 0..sp.n_elements() {
            for q in 0..NQ {
                let w = sp.weight(q);
                let zq = sp.damage_at(z, e, q);
                let eps = sp.strain(u, e, q);
                elastic += w * 0.5 * m.h(zq) * m.c0 * eps * eps;
                potential += w * m.f(zq);
            }
        }
        let dz: Vec<f64> = z.iter().zip(self.z_prev).map(|(a, b)| a - b).collect();
        let pred = self.predictor();
        let acc: Vec<f64> = u.iter().zip(&pred).map(|(a, b)| a - b).collect();
        FunctionalTerms {
            gradient: sp.p_laplacian_energy(z, m.p),
            elastic,
            potential,
            load: -dot(self.load, u),
            regularization: 0.5 * m.delta * sp.bilaplacian.bilinear(u, u),
            damage_rate: sp.mass_z.bilinear(&dz, &dz) / (2.0 * self.tau),
            inertia: sp.mass_u.bilinear(&acc, &acc) / (2.0 * self.tau * self.tau),
        }
    }

    /// System matrix `M_u/τ² + K(z) + δB` of the momentum balance.
    pub fn momentum_matrix(&self, z: &[f64]) -> Result<SymBand> {
        let sp = self.spaces;
        let mut s = sp.assemble_stiffness(z, self.material)?;
        s.axpy(1.0 / (self.tau * self.tau), &sp.mass_u);
        s.axpy(self.material.delta, &sp.bilaplacian);
        Ok(s)
    }

    /// Right-hand side `M_u(2u^{m-1} - u^{m-2})/τ² + ℓ`.
    pub fn momentum_rhs(&self) -> Vec<f64> {
        let inv = 1.0 / (self.tau * self.tau);
        self.spaces
            .mass_u
            .matvec(&self.predictor())
            .into_iter()
            .zip(self.load)
            .map(|(a, l)| a * inv + l)
            .collect()
    }

    /// Gradient in the displacement DoFs (all of them, Dirichlet included).
    pub fn grad_u(&self, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let s = self.momentum_matrix(z)?;
        Ok(s.matvec(u)
            .into_iter()
            .zip(self.momentum_rhs())
            .map(|(a, b)| a - b)
            .collect())
    }

    /// Momentum residual restricted to the free DoFs.
    pub fn momentum_residual(&self, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let g = self.grad_u(u, z)?;
        Ok(self.spaces.free_dofs().iter().map(|&d| g[d]).collect())
    }

    pub fn damage_problem(&self, u: &[f64]) -> DamageProblem<'a> {
        DamageProblem {
            spaces: self.spaces,
            material: self.material,
            strains: self.spaces.strains(u),
            z_prev: self.z_prev,
            tau: self.tau,
        }
    }

    /// Gradient in the damage nodes.
    pub fn grad_z(&self, u: &[f64], z: &[f64]) -> Vec<f64> {
        self.damage_problem(u).grad(z)
    }
}

/// The damage part of the step functional for a frozen displacement:
/// `(1/p)∫|z'|^p + ∫(W(ε(u), z) + f(z)) + (1/2τ)‖z - z^{m-1}‖²`
/// over the box `0 ≤ z ≤ z^{m-1}`.
#[derive(Debug, Clone)]
pub struct DamageProblem<'a> {
    pub spaces: &'a DiscreteSpaces,
    pub material: &'a MaterialModel,
    pub strains: Vec<[f64; NQ]>,
    pub z_prev: &'a [f64],
    pub tau: f64,
}

impl DamageProblem<'_> {
    pub fn dim(&self) -> usize {
        self.z_prev.len()
    }

    pub fn lower(&self, _i: usize) -> f64 {
        0.0
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.z_prev[i]
    }

    pub fn project(&self, z: &mut [f64]) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.max(self.lower(i)).min(self.upper(i));
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let sp = self.spaces;
        let m = self.material;
        let mut acc = sp.p_laplacian_energy(z, m.p);
        for e in 0..sp.n_elements() {
            for q in 0..NQ {
                let zq = sp.damage_at(z, e, q);
                let eps = self.strains[e][q];
                acc += sp.weight(q) * (0.5 * m.h(zq) * m.c0 * eps * eps + m.f(zq));
            }
        }
        let dz: Vec<f64> = z.iter().zip(self.z_prev).map(|(a, b)| a - b).collect();
        acc + sp.mass_z.bilinear(&dz, &dz) / (2.0 * self.tau)
    }

    /// Pointwise driving force `W_{,z} + f'` tested against each hat
    /// function, `∫ (W_{,z}(ε(u), z) + f'(z)) φ_i dx`.
    pub fn drive_vector(&self, z: &[f64]) -> Vec<f64> {
        let sp = self.spaces;
        let m = self.material;
        let mut g = vec![0.0; z.len()];
        for e in 0..sp.n_elements() {
            for q in 0..NQ {
                let zq = sp.damage_at(z, e, q);
                let eps = self.strains[e][q];
                let d = sp.weight(q) * (0.5 * m.dh(zq) * m.c0 * eps * eps + m.df(zq));
                let phi = sp.hat(q);
                g[e] += d * phi[0];
                g[e + 1] += d * phi[1];
            }
        }
        g
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let sp = self.spaces;
        let mut g = self.drive_vector(z);
        for (gi, pi) in g.iter_mut().zip(sp.p_laplacian_grad(z, self.material.p)) {
            *gi += pi;
        }
        let dz: Vec<f64> = z.iter().zip(self.z_prev).map(|(a, b)| a - b).collect();
        for (gi, mi) in g.iter_mut().zip(sp.mass_z.matvec(&dz)) {
            *gi += mi / self.tau;
        }
        g
    }

    pub fn hess(&self, z: &[f64]) -> SymBand {
        let sp = self.spaces;
        let m = self.material;
        let mut hs = sp.p_laplacian_hess(z, m.p);
        hs.axpy(1.0 / self.tau, &sp.mass_z);
        for e in 0..sp.n_elements() {
            for q in 0..NQ {
                let zq = sp.damage_at(z, e, q);
                let eps = self.strains[e][q];
                let c = sp.weight(q) * (0.5 * m.d2h(zq) * m.c0 * eps * eps + m.d2f(zq));
                let phi = sp.hat(q);
                hs.add(e, e, c * phi[0] * phi[0]);
                hs.add(e + 1, e + 1, c * phi[1] * phi[1]);
                hs.add(e + 1, e, c * phi[0] * phi[1]);
            }
        }
        hs
    }

    /// `‖z - Π(z - g)‖_∞`, zero exactly at KKT points of the box problem.
    pub fn kkt_residual(&self, z: &[f64], g: &[f64]) -> f64 {
        (0..z.len())
            .map(|i| {
                let trial = (z[i] - g[i]).max(self.lower(i)).min(self.upper(i));
                (z[i] - trial).abs()
            })
            .fold(0.0, f64::max)
    }
}
