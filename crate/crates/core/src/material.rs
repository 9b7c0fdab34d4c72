//! Constitutive functions of the damage model.
//!
//! The elastic energy density is `W(e, z) = ½ h(z) c0 e²`, the damage
//! potential is `f(z)`, and the damage gradient enters through the
//! p-Laplacian energy `(1/p)|z'|^p`. Both `h` and `f` are polynomials on
//! `[0, 1]` so that the coefficient assumptions can be checked on a grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking `z ∈ [0, 1]`.
pub const DAMAGE_DOMAIN_TOL: f64 = 1e-12;

/// Number of sample points used by [`validate`].
pub const VALIDATION_GRID: usize = 1001;

/// Polynomial with coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.0.len() <= 1 {
            return Polynomial(vec![0.0]);
        }
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn add_constant(&self, c: f64) -> Polynomial {
        let mut coeffs = self.0.clone();
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        coeffs[0] += c;
        Polynomial(coeffs)
    }
}

/// Coefficients of the damage model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaterialModel {
    /// Lower bound of `h`.
    pub eta: f64,
    /// Stiffness degradation `h(z)`.
    pub h: Polynomial,
    /// Damage potential `f(z)`.
    pub f: Polynomial,
    /// Scalar stiffness.
    pub c0: f64,
    /// Exponent of the damage gradient energy.
    pub p: f64,
    /// Weight of the fourth-order regularization of the displacement.
    pub delta: f64,
    /// Activation threshold carried by the default potential `f = κ(1 - z)`.
    pub kappa: f64,
    #[serde(skip)]
    dh: Polynomial,
    #[serde(skip)]
    d2h: Polynomial,
    #[serde(skip)]
    df: Polynomial,
    #[serde(skip)]
    d2f: Polynomial,
}

/// One violated coefficient assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Violation {
    #[serde(rename = "h >= eta")]
    HBelowEta,
    #[serde(rename = "h' >= 0")]
    HDecreasing,
    #[serde(rename = "f >= 0")]
    FNegative,
    #[serde(rename = "c0 > 0")]
    NonPositiveStiffness,
    #[serde(rename = "p > 1")]
    ExponentTooSmall,
    #[serde(rename = "delta >= 0")]
    NegativeDelta,
    #[serde(rename = "eta > 0")]
    NonPositiveEta,
}

impl Violation {
    /// Name of the configuration field responsible for the violation.
    pub fn field(&self) -> &'static str {
        match self {
            Violation::HBelowEta | Violation::HDecreasing => "h",
            Violation::FNegative => "f",
            Violation::NonPositiveStiffness => "c0",
            Violation::ExponentTooSmall => "p",
            Violation::NegativeDelta => "delta",
            Violation::NonPositiveEta => "eta",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Violation::HBelowEta => "h >= eta",
            Violation::HDecreasing => "h' >= 0",
            Violation::FNegative => "f >= 0",
            Violation::NonPositiveStiffness => "c0 > 0",
            Violation::ExponentTooSmall => "p > 1",
            Violation::NegativeDelta => "delta >= 0",
            Violation::NonPositiveEta => "eta > 0",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl MaterialModel {
    pub fn new(
        eta: f64,
        h: Polynomial,
        f: Polynomial,
        c0: f64,
        p: f64,
        delta: f64,
        kappa: f64,
    ) -> Self {
        let dh = h.derivative();
        let d2h = dh.derivative();
        let df = f.derivative();
        let d2f = df.derivative();
        MaterialModel {
            eta,
            h,
            f,
            c0,
            p,
            delta,
            kappa,
            dh,
            d2h,
            df,
            d2f,
        }
    }

    /// `h(z) = η + (1-η) z²`, `f(z) = κ(1-z)`, `c0 = 1`, `p = 2`.
    pub fn quadratic(eta: f64, kappa: f64, delta: f64) -> Self {
        Self::new(
            eta,
            Polynomial(vec![eta, 0.0, 1.0 - eta]),
            Polynomial(vec![kappa, -kappa]),
            1.0,
            2.0,
            delta,
            kappa,
        )
    }

    /// `h(z) = η + (1-η) z`: the driving force stays positive at `z = 0`,
    /// so full damage is reachable in finite time.
    pub fn linear(eta: f64, kappa: f64, delta: f64) -> Self {
        Self::new(
            eta,
            Polynomial(vec![eta, 1.0 - eta]),
            Polynomial(vec![kappa, -kappa]),
            1.0,
            2.0,
            delta,
            kappa,
        )
    }

    /// Smoothstep degradation `h(z) = η + (1-η)(3z² - 2z³)`; concave on
    /// `(½, 1]`, so the per-step damage problem is not convex.
    pub fn smoothstep(eta: f64, kappa: f64, delta: f64) -> Self {
        Self::new(
            eta,
            Polynomial(vec![eta, 0.0, 3.0 * (1.0 - eta), -2.0 * (1.0 - eta)]),
            Polynomial(vec![kappa, -kappa]),
            1.0,
            2.0,
            delta,
            kappa,
        )
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        let mut m = self.clone();
        m.delta = delta;
        m
    }

    pub fn with_p(&self, p: f64) -> Self {
        let mut m = self.clone();
        m.p = p;
        m
    }

    pub fn with_f(&self, f: Polynomial) -> Self {
        Self::new(self.eta, self.h.clone(), f, self.c0, self.p, self.delta, self.kappa)
    }

    #[inline]
    pub fn h(&self, z: f64) -> f64 {
        self.h.eval(z)
    }
    #[inline]
    pub fn dh(&self, z: f64) -> f64 {
        self.dh.eval(z)
    }
    #[inline]
    pub fn d2h(&self, z: f64) -> f64 {
        self.d2h.eval(z)
    }
    #[inline]
    pub fn f(&self, z: f64) -> f64 {
        self.f.eval(z)
    }
    #[inline]
    pub fn df(&self, z: f64) -> f64 {
        self.df.eval(z)
    }
    #[inline]
    pub fn d2f(&self, z: f64) -> f64 {
        self.d2f.eval(z)
    }

    /// `W(e, z) = ½ h(z) c0 e²`.
    pub fn elastic_density(&self, e: f64, z: f64) -> Result<f64> {
        check_damage(z)?;
        Ok(0.5 * self.h(z) * self.c0 * e * e)
    }

    /// `W_{,e}(e, z) = h(z) c0 e`.
    pub fn stress(&self, e: f64, z: f64) -> Result<f64> {
        check_damage(z)?;
        Ok(self.h(z) * self.c0 * e)
    }

    /// `W_{,z}(e, z) = ½ h'(z) c0 e²`.
    pub fn damage_drive(&self, e: f64, z: f64) -> Result<f64> {
        check_damage(z)?;
        Ok(0.5 * self.dh(z) * self.c0 * e * e)
    }

    /// Strain at which the undamaged state stops being stationary,
    /// `½ h'(1) c0 e*² = -f'(1)`.
    pub fn onset_strain(&self) -> Result<f64> {
        let slope = self.dh(1.0) * self.c0;
        if slope <= 0.0 {
            return Err(Error::Domain(
                "h'(1) c0 = 0: damage never activates from the undamaged state".into(),
            ));
        }
        let threshold = -self.df(1.0);
        if threshold < 0.0 {
            return Ok(0.0);
        }
        Ok((2.0 * threshold / slope).sqrt())
    }
}

impl Default for MaterialModel {
    fn default() -> Self {
        MaterialModel::quadratic(0.1, 0.5, 1e-3)
    }
}

fn check_damage(z: f64) -> Result<()> {
    if !(z >= -DAMAGE_DOMAIN_TOL && z <= 1.0 + DAMAGE_DOMAIN_TOL) {
        return Err(Error::Domain(format!("damage value {z} outside [0, 1]")));
    }
    Ok(())
}

/// Checks the coefficient assumptions on a uniform grid of
/// [`VALIDATION_GRID`] points in `[0, 1]`.
pub fn validate(m: &MaterialModel) -> ValidationReport {
    let mut violations = Vec::new();
    let grid = (0..VALIDATION_GRID).map(|i| i as f64 / (VALIDATION_GRID - 1) as f64);
    let tol = 1e-14;
    if !(m.eta > 0.0) {
        violations.push(Violation::NonPositiveEta);
    }
    if grid.clone().any(|z| m.h(z) < m.eta - tol) {
        violations.push(Violation::HBelowEta);
    }
    if grid.clone().any(|z| m.dh(z) < -tol) {
        violations.push(Violation::HDecreasing);
    }
    if grid.clone().any(|z| m.f(z) < -tol) {
        violations.push(Violation::FNegative);
    }
    if !(m.c0 > 0.0) {
        violations.push(Violation::NonPositiveStiffness);
    }
    if !(m.p > 1.0) {
        violations.push(Violation::ExponentTooSmall);
    }
    if !(m.delta >= 0.0) {
        violations.push(Violation::NegativeDelta);
    }
    ValidationReport { violations }
}
