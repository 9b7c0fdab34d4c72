use std::f64::consts::PI;

use serde::Deserialize;
use serde_json::{Map, Value};

use super::{BoundaryData, InitialDamage, InitialDisplacement, LoadData};
use crate::error::{Error, Result};
use crate::registry::params;

/// `b(x, t) = s x`, constant in time.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantBoundary {
    pub strain: f64,
}

impl BoundaryData for ConstantBoundary {
    fn eval(&self, x: f64, _t: f64, order: usize) -> (f64, f64) {
        match order {
            0 => (self.strain * x, self.strain),
            _ => (0.0, 0.0),
        }
    }
}

/// `b(x, t) = a t x`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampBoundary {
    pub rate: f64,
}

impl BoundaryData for RampBoundary {
    fn eval(&self, x: f64, t: f64, order: usize) -> (f64, f64) {
        match order {
            0 => (self.rate * t * x, self.rate * t),
            1 => (self.rate * x, self.rate),
            _ => (0.0, 0.0),
        }
    }
}

/// `b(x, t) = A x sin⁴(π t / d)` on `[0, d]`, zero afterwards. The fourth
/// power keeps the second time derivative Lipschitz across `t = d`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinePulseBoundary {
    pub amplitude: f64,
    pub duration: f64,
}

impl SinePulseBoundary {
    fn profile(&self, t: f64, order: usize) -> f64 {
        if t <= 0.0 || t >= self.duration {
            return 0.0;
        }
        let w = PI / self.duration;
        let (s, c) = (w * t).sin_cos();
        match order {
            0 => s.powi(4),
            1 => 4.0 * w * s.powi(3) * c,
            _ => w * w * (12.0 * s * s * c * c - 4.0 * s.powi(4)),
        }
    }
}

impl BoundaryData for SinePulseBoundary {
    fn eval(&self, x: f64, t: f64, order: usize) -> (f64, f64) {
        let g = self.amplitude * self.profile(t, order);
        (g * x, g)
    }
}

#[derive(Debug, Clone)]
pub struct ZeroLoad;

impl LoadData for ZeroLoad {
    fn eval(&self, _x: f64, _t: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantLoad {
    pub value: f64,
}

impl LoadData for ConstantLoad {
    fn eval(&self, _x: f64, _t: f64) -> f64 {
        self.value
    }
}

/// Gaussian bump `A exp(-((x - x0 - c t)/w)²)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TravelingPulseLoad {
    pub amplitude: f64,
    pub center: f64,
    pub speed: f64,
    pub width: f64,
}

impl LoadData for TravelingPulseLoad {
    fn eval(&self, x: f64, t: f64) -> f64 {
        let s = (x - self.center - self.speed * t) / self.width;
        self.amplitude * (-s * s).exp()
    }
}

/// `offset + slope x`; used for `u⁰` and `v⁰`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineField {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub slope: f64,
}

impl AffineField {
    pub fn zero() -> Self {
        AffineField { offset: 0.0, slope: 0.0 }
    }
}

impl InitialDisplacement for AffineField {
    fn eval(&self, x: f64) -> (f64, f64) {
        (self.offset + self.slope * x, self.slope)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformDamage {
    pub value: f64,
}

impl InitialDamage for UniformDamage {
    fn eval(&self, _x: f64) -> f64 {
        self.value
    }
}

/// `1 - depth · exp(-((x - center)/width)²)`: a weakened zone.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotchDamage {
    pub depth: f64,
    pub center: f64,
    pub width: f64,
}

impl InitialDamage for NotchDamage {
    fn eval(&self, x: f64) -> f64 {
        let s = (x - self.center) / self.width;
        1.0 - self.depth * (-s * s).exp()
    }
}

fn positive(value: f64, path: String) -> Result<()> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, "must be positive"))
    }
}

pub(super) fn constant_boundary(m: &Map<String, Value>, path: &str) -> Result<Box<dyn BoundaryData>> {
    Ok(Box::new(params::<ConstantBoundary>(m, path)?))
}

pub(super) fn ramp_boundary(m: &Map<String, Value>, path: &str) -> Result<Box<dyn BoundaryData>> {
    Ok(Box::new(params::<RampBoundary>(m, path)?))
}

pub(super) fn sine_pulse_boundary(m: &Map<String, Value>, path: &str) -> Result<Box<dyn BoundaryData>> {
    let p: SinePulseBoundary = params(m, path)?;
    positive(p.duration, format!("{path}.duration"))?;
    Ok(Box::new(p))
}

pub(super) fn zero_load(m: &Map<String, Value>, path: &str) -> Result<Box<dyn LoadData>> {
    if let Some(k) = m.keys().next() {
        return Err(Error::config(format!("{path}.{k}"), "the zero load takes no parameters"));
    }
    Ok(Box::new(ZeroLoad))
}

pub(super) fn constant_load(m: &Map<String, Value>, path: &str) -> Result<Box<dyn LoadData>> {
    Ok(Box::new(params::<ConstantLoad>(m, path)?))
}

pub(super) fn traveling_pulse_load(m: &Map<String, Value>, path: &str) -> Result<Box<dyn LoadData>> {
    let p: TravelingPulseLoad = params(m, path)?;
    positive(p.width, format!("{path}.width"))?;
    Ok(Box::new(p))
}

pub(super) fn zero_field(m: &Map<String, Value>, path: &str) -> Result<Box<dyn InitialDisplacement>> {
    if let Some(k) = m.keys().next() {
        return Err(Error::config(format!("{path}.{k}"), "the zero field takes no parameters"));
    }
    Ok(Box::new(AffineField::zero()))
}

pub(super) fn affine_field(m: &Map<String, Value>, path: &str) -> Result<Box<dyn InitialDisplacement>> {
    Ok(Box::new(params::<AffineField>(m, path)?))
}

pub(super) fn uniform_damage(m: &Map<String, Value>, path: &str) -> Result<Box<dyn InitialDamage>> {
    Ok(Box::new(params::<UniformDamage>(m, path)?))
}

pub(super) fn notch_damage(m: &Map<String, Value>, path: &str) -> Result<Box<dyn InitialDamage>> {
    let p: NotchDamage = params(m, path)?;
    positive(p.width, format!("{path}.width"))?;
    Ok(Box::new(p))
}
