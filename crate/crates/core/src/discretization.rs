//! One-dimensional finite element spaces.
//!
//! Displacements live in the C¹ piecewise-cubic Hermite space (value and
//! slope per node) so that `∫ u'' ζ'' dx` is a conforming bilinear form.
//! Damage lives in the continuous piecewise-linear space, where `z'` is
//! constant per element and the p-Laplacian energy has a closed form.
//!
//! Displacement DoFs are ordered `[u_0, u'_0, u_1, u'_1, ...]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymBand;
use crate::material::{MaterialModel, DAMAGE_DOMAIN_TOL};

/// Quadrature points per element.
pub const NQ: usize = 4;

/// Half-bandwidth of the displacement matrices.
pub const U_BANDWIDTH: usize = 3;

/// Smoothing of `|z'|` used when `p < 2`.
pub const P_SMOOTHING: f64 = 1e-12;

/// Gauss–Legendre rule on `[0, 1]`, exact for polynomials of degree 7.
pub fn gauss_rule() -> ([f64; NQ], [f64; NQ]) {
    let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
    let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
    let pts = [-b, -a, a, b].map(|x| 0.5 * (x + 1.0));
    let wts = [wb, wa, wa, wb].map(|w| 0.5 * w);
    (pts, wts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    pub length: f64,
    pub n_elements: usize,
    pub dirichlet: Vec<Endpoint>,
}

impl Mesh1D {
    pub fn new(length: f64, n_elements: usize, dirichlet: Vec<Endpoint>) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::config("mesh.L", "length must be positive"));
        }
        if n_elements == 0 {
            return Err(Error::config("mesh.N", "need at least one element"));
        }
        let mut dirichlet = dirichlet;
        dirichlet.sort_by_key(|e| *e as u8);
        dirichlet.dedup();
        if dirichlet.is_empty() {
            return Err(Error::config(
                "mesh.dirichlet",
                "at least one endpoint must carry a Dirichlet condition",
            ));
        }
        Ok(Mesh1D {
            length,
            n_elements,
            dirichlet,
        })
    }

    pub fn h(&self) -> f64 {
        self.length / self.n_elements as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    pub fn node(&self, i: usize) -> f64 {
        self.length * i as f64 / self.n_elements as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        self.dirichlet
            .iter()
            .map(|e| match e {
                Endpoint::Left => 0,
                Endpoint::Right => self.n_elements,
            })
            .collect()
    }

    /// True when no endpoint carries a traction condition, which departs
    /// from the mixed boundary setting of the continuous model.
    pub fn neumann_part_empty(&self) -> bool {
        self.dirichlet.len() == 2
    }
}

/// Field handed to [`DiscreteSpaces::norm`].
#[derive(Debug, Clone, Copy)]
pub enum FieldRef<'a> {
    Displacement(&'a [f64]),
    Damage(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
    W1p,
    H2Seminorm,
}

#[derive(Debug, Clone)]
pub struct DiscreteSpaces {
    pub mesh: Mesh1D,
    pub qp: [f64; NQ],
    pub qw: [f64; NQ],
    // reference Hermite shape functions at quadrature points; slope shapes
    // already carry the factor h, derivatives are with respect to x
    herm: [[f64; 4]; NQ],
    herm_dx: [[f64; 4]; NQ],
    herm_dxx: [[f64; 4]; NQ],
    hat: [[f64; 2]; NQ],
    pub mass_u: SymBand,
    pub laplace_u: SymBand,
    pub bilaplacian: SymBand,
    pub mass_z: SymBand,
    pub laplace_z: SymBand,
    /// Row sums of `mass_z`; nodal weights for pointwise fields.
    pub lumped_z: Vec<f64>,
    dirichlet_dofs: Vec<usize>,
    free_dofs: Vec<usize>,
}

/// Hermite shape functions on `[0, 1]` scaled to an element of size `h`:
/// values, first and second derivatives in `x`.
pub fn hermite_shapes(xi: f64, h: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    let n = [
        1.0 - 3.0 * x2 + 2.0 * x3,
        h * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        h * (x3 - x2),
    ];
    let d = [
        (-6.0 * xi + 6.0 * x2) / h,
        1.0 - 4.0 * xi + 3.0 * x2,
        (6.0 * xi - 6.0 * x2) / h,
        3.0 * x2 - 2.0 * xi,
    ];
    let dd = [
        (-6.0 + 12.0 * xi) / (h * h),
        (-4.0 + 6.0 * xi) / h,
        (6.0 - 12.0 * xi) / (h * h),
        (6.0 * xi - 2.0) / h,
    ];
    (n, d, dd)
}

impl DiscreteSpaces {
    pub fn new(mesh: Mesh1D) -> Self {
        let (qp, qw) = gauss_rule();
        let h = mesh.h();
        let mut herm = [[0.0; 4]; NQ];
        let mut herm_dx = [[0.0; 4]; NQ];
        let mut herm_dxx = [[0.0; 4]; NQ];
        let mut hat = [[0.0; 2]; NQ];
        for q in 0..NQ {
            let (n, d, dd) = hermite_shapes(qp[q], h);
            herm[q] = n;
            herm_dx[q] = d;
            herm_dxx[q] = dd;
            hat[q] = [1.0 - qp[q], qp[q]];
        }
        let nn = mesh.n_nodes();
        let ndof = 2 * nn;
        let mut mass_u = SymBand::zeros(ndof, U_BANDWIDTH);
        let mut laplace_u = SymBand::zeros(ndof, U_BANDWIDTH);
        let mut bilaplacian = SymBand::zeros(ndof, U_BANDWIDTH);
        let mut mass_z = SymBand::zeros(nn, 1);
        let mut laplace_z = SymBand::zeros(nn, 1);
        for e in 0..mesh.n_elements {
            let base = 2 * e;
            for q in 0..NQ {
                let w = qw[q] * h;
                for a in 0..4 {
                    for b in 0..=a {
                        mass_u.add(base + a, base + b, w * herm[q][a] * herm[q][b]);
                        laplace_u.add(base + a, base + b, w * herm_dx[q][a] * herm_dx[q][b]);
                        bilaplacian.add(base + a, base + b, w * herm_dxx[q][a] * herm_dxx[q][b]);
                    }
                }
                for a in 0..2 {
                    for b in 0..=a {
                        mass_z.add(e + a, e + b, w * hat[q][a] * hat[q][b]);
                    }
                }
            }
            let k = 1.0 / h;
            laplace_z.add(e, e, k);
            laplace_z.add(e + 1, e + 1, k);
            laplace_z.add(e + 1, e, -k);
        }
        let lumped_z = mass_z.matvec(&vec![1.0; nn]);
        let dirichlet_dofs: Vec<usize> = mesh.dirichlet_nodes().iter().map(|&n| 2 * n).collect();
        let free_dofs = (0..ndof).filter(|d| !dirichlet_dofs.contains(d)).collect();
        DiscreteSpaces {
            mesh,
            qp,
            qw,
            herm,
            herm_dx,
            herm_dxx,
            hat,
            mass_u,
            laplace_u,
            bilaplacian,
            mass_z,
            laplace_z,
            lumped_z,
            dirichlet_dofs,
            free_dofs,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements
    }

    pub fn n_udofs(&self) -> usize {
        2 * self.mesh.n_nodes()
    }

    pub fn n_znodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }

    /// Value DoFs of the Dirichlet nodes.
    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet_dofs
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Quadrature weight of point `q` including the element Jacobian.
    #[inline]
    pub fn weight(&self, q: usize) -> f64 {
        self.qw[q] * self.h()
    }

    #[inline]
    pub fn hat(&self, q: usize) -> [f64; 2] {
        self.hat[q]
    }

    #[inline]
    fn element_dofs(u: &[f64], e: usize) -> [f64; 4] {
        [u[2 * e], u[2 * e + 1], u[2 * e + 2], u[2 * e + 3]]
    }

    /// Strain `u'` at quadrature point `q` of element `e`.
    #[inline]
    pub fn strain(&self, u: &[f64], e: usize, q: usize) -> f64 {
        let d = Self::element_dofs(u, e);
        (0..4).map(|k| d[k] * self.herm_dx[q][k]).sum()
    }

    /// Strains at all quadrature points, `[element][q]`.
    pub fn strains(&self, u: &[f64]) -> Vec<[f64; NQ]> {
        (0..self.n_elements())
            .map(|e| std::array::from_fn(|q| self.strain(u, e, q)))
            .collect()
    }

    #[inline]
    pub fn curvature(&self, u: &[f64], e: usize, q: usize) -> f64 {
        let d = Self::element_dofs(u, e);
        (0..4).map(|k| d[k] * self.herm_dxx[q][k]).sum()
    }

    #[inline]
    pub fn displacement_at_qp(&self, u: &[f64], e: usize, q: usize) -> f64 {
        let d = Self::element_dofs(u, e);
        (0..4).map(|k| d[k] * self.herm[q][k]).sum()
    }

    /// Damage at quadrature point `q` of element `e`.
    #[inline]
    pub fn damage_at(&self, z: &[f64], e: usize, q: usize) -> f64 {
        self.hat[q][0] * z[e] + self.hat[q][1] * z[e + 1]
    }

    /// Evaluates the displacement and its first two derivatives at `x`.
    pub fn eval_displacement(&self, u: &[f64], x: f64) -> (f64, f64, f64) {
        let h = self.h();
        let e = ((x / h).floor() as usize).min(self.n_elements() - 1);
        let xi = (x - e as f64 * h) / h;
        let (n, d, dd) = hermite_shapes(xi, h);
        let dofs = Self::element_dofs(u, e);
        let mut out = (0.0, 0.0, 0.0);
        for k in 0..4 {
            out.0 += dofs[k] * n[k];
            out.1 += dofs[k] * d[k];
            out.2 += dofs[k] * dd[k];
        }
        out
    }

    /// Hermite interpolant from a value and its `x`-derivative.
    pub fn interpolate_displacement(&self, value: impl Fn(f64) -> f64, slope: impl Fn(f64) -> f64) -> Vec<f64> {
        self.mesh
            .nodes()
            .into_iter()
            .flat_map(|x| [value(x), slope(x)])
            .collect()
    }

    pub fn interpolate_damage(&self, value: impl Fn(f64) -> f64) -> Vec<f64> {
        self.mesh.nodes().into_iter().map(value).collect()
    }

    /// Load vector `∫ ℓ ζ dx` for every displacement basis function.
    pub fn load_vector(&self, load: impl Fn(f64) -> f64) -> Vec<f64> {
        let h = self.h();
        let mut out = vec![0.0; self.n_udofs()];
        for e in 0..self.n_elements() {
            for q in 0..NQ {
                let x = (e as f64 + self.qp[q]) * h;
                let wl = self.weight(q) * load(x);
                for k in 0..4 {
                    out[2 * e + k] += wl * self.herm[q][k];
                }
            }
        }
        out
    }

    /// Matrix of `∫ h(z) c0 u' ζ' dx` with `z` interpolated linearly.
    pub fn assemble_stiffness(&self, z: &[f64], m: &MaterialModel) -> Result<SymBand> {
        check_damage_field(z, self.n_znodes())?;
        let mut k = SymBand::zeros(self.n_udofs(), U_BANDWIDTH);
        for e in 0..self.n_elements() {
            let base = 2 * e;
            for q in 0..NQ {
                let w = self.weight(q) * m.h(self.damage_at(z, e, q)) * m.c0;
                let d = &self.herm_dx[q];
                for a in 0..4 {
                    for b in 0..=a {
                        k.add(base + a, base + b, w * d[a] * d[b]);
                    }
                }
            }
        }
        Ok(k)
    }

    #[inline]
    fn element_slope(&self, z: &[f64], e: usize) -> f64 {
        (z[e + 1] - z[e]) / self.h()
    }

    #[inline]
    fn p_norm(s: f64, p: f64) -> f64 {
        if p < 2.0 {
            (s * s + P_SMOOTHING * P_SMOOTHING).sqrt()
        } else {
            s.abs()
        }
    }

    /// `(1/p) ∫ |z'|^p dx`.
    pub fn p_laplacian_energy(&self, z: &[f64], p: f64) -> f64 {
        let h = self.h();
        (0..self.n_elements())
            .map(|e| Self::p_norm(self.element_slope(z, e), p).powf(p) / p * h)
            .sum()
    }

    /// Gradient of [`Self::p_laplacian_energy`] in the nodal basis.
    pub fn p_laplacian_grad(&self, z: &[f64], p: f64) -> Vec<f64> {
        let mut g = vec![0.0; z.len()];
        for e in 0..self.n_elements() {
            let s = self.element_slope(z, e);
            let flux = Self::p_norm(s, p).powf(p - 2.0) * s;
            g[e] -= flux;
            g[e + 1] += flux;
        }
        g
    }

    pub fn p_laplacian_hess(&self, z: &[f64], p: f64) -> SymBand {
        let h = self.h();
        let mut hess = SymBand::zeros(z.len(), 1);
        for e in 0..self.n_elements() {
            let s = self.element_slope(z, e);
            let c = if p < 2.0 {
                let r2 = s * s + P_SMOOTHING * P_SMOOTHING;
                r2.powf((p - 4.0) / 2.0) * ((p - 1.0) * s * s + P_SMOOTHING * P_SMOOTHING)
            } else if p == 2.0 {
                1.0
            } else {
                (p - 1.0) * s.abs().powf(p - 2.0)
            } / h;
            hess.add(e, e, c);
            hess.add(e + 1, e + 1, c);
            hess.add(e + 1, e, -c);
        }
        hess
    }

    /// Norms used by the a priori monitors. `p` only matters for
    /// [`NormKind::W1p`].
    pub fn norm(&self, field: FieldRef<'_>, kind: NormKind, p: f64) -> Result<f64> {
        match field {
            FieldRef::Displacement(u) => {
                if u.len() != self.n_udofs() {
                    return Err(Error::Usage(format!(
                        "displacement field has {} entries, space has {}",
                        u.len(),
                        self.n_udofs()
                    )));
                }
                let sq = match kind {
                    NormKind::L2 => self.mass_u.bilinear(u, u),
                    NormKind::H1 => self.mass_u.bilinear(u, u) + self.laplace_u.bilinear(u, u),
                    NormKind::H2Seminorm => self.bilaplacian.bilinear(u, u),
                    NormKind::W1p => {
                        return Err(Error::Usage(
                            "W^{1,p} norm is defined for the damage space".into(),
                        ))
                    }
                };
                Ok(sq.max(0.0).sqrt())
            }
            FieldRef::Damage(z) => {
                if z.len() != self.n_znodes() {
                    return Err(Error::Usage(format!(
                        "damage field has {} entries, space has {}",
                        z.len(),
                        self.n_znodes()
                    )));
                }
                match kind {
                    NormKind::L2 => Ok(self.mass_z.bilinear(z, z).max(0.0).sqrt()),
                    NormKind::H1 => Ok((self.mass_z.bilinear(z, z) + self.laplace_z.bilinear(z, z))
                        .max(0.0)
                        .sqrt()),
                    NormKind::W1p => {
                        let h = self.h();
                        let mut acc = 0.0;
                        for e in 0..self.n_elements() {
                            for q in 0..NQ {
                                acc += self.weight(q) * self.damage_at(z, e, q).abs().powf(p);
                            }
                            acc += self.element_slope(z, e).abs().powf(p) * h;
                        }
                        Ok(acc.powf(1.0 / p))
                    }
                    NormKind::H2Seminorm => Err(Error::Usage(
                        "the damage space has no second derivatives".into(),
                    )),
                }
            }
        }
    }
}

pub(crate) fn check_damage_field(z: &[f64], n: usize) -> Result<()> {
    if z.len() != n {
        return Err(Error::Usage(format!(
            "damage field has {} entries, expected {n}",
            z.len()
        )));
    }
    if let Some((i, v)) = z
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= -DAMAGE_DOMAIN_TOL && **v <= 1.0 + DAMAGE_DOMAIN_TOL))
    {
        return Err(Error::Domain(format!("damage {v} at node {i} outside [0, 1]")));
    }
    Ok(())
}
