//! Time-dependent data of a run: Dirichlet displacement `b`, volume load
//! `ℓ`, and the initial fields `u⁰`, `v⁰`, `z⁰`.
//!
//! All data come from closed-form families, so `b` is `C^{2,1}` and `ℓ`
//! is Lipschitz in time by construction.

mod families;

use std::sync::OnceLock;

use serde_json::Value;

use crate::discretization::DiscreteSpaces;
use crate::error::{Error, Result};
use crate::material::MaterialModel;
use crate::registry::Registry;

pub use families::{
    AffineField, ConstantBoundary, ConstantLoad, NotchDamage, RampBoundary, SinePulseBoundary,
    TravelingPulseLoad, UniformDamage, ZeroLoad,
};

/// Prescribed displacement `b(x, t)`.
pub trait BoundaryData: Send + Sync + std::fmt::Debug {
    /// `(∂_t^k b, ∂_x ∂_t^k b)` at `(x, t)` for `k = order ∈ {0, 1, 2}`.
    fn eval(&self, x: f64, t: f64, order: usize) -> (f64, f64);
}

/// Volume load `ℓ(x, t)`.
pub trait LoadData: Send + Sync + std::fmt::Debug {
    fn eval(&self, x: f64, t: f64) -> f64;
}

/// Initial displacement or velocity: value and slope at `x`.
pub trait InitialDisplacement: Send + Sync + std::fmt::Debug {
    fn eval(&self, x: f64) -> (f64, f64);
}

pub trait InitialDamage: Send + Sync + std::fmt::Debug {
    fn eval(&self, x: f64) -> f64;
}

/// Time at which the homogeneous ramp `b = a t x` reaches the onset strain
/// of `material`.
pub fn onset_time(material: &MaterialModel, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("ramp rate {rate} must be positive")));
    }
    Ok(material.onset_strain()? / rate)
}

pub fn boundary_registry() -> &'static Registry<dyn BoundaryData> {
    static REG: OnceLock<Registry<dyn BoundaryData>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("boundary family");
        r.register("constant", families::constant_boundary)
            .register("ramp", families::ramp_boundary)
            .register("sine_pulse", families::sine_pulse_boundary);
        r
    })
}

pub fn load_registry() -> &'static Registry<dyn LoadData> {
    static REG: OnceLock<Registry<dyn LoadData>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("load family");
        r.register("zero", families::zero_load)
            .register("constant", families::constant_load)
            .register("traveling_pulse", families::traveling_pulse_load);
        r
    })
}

pub fn initial_displacement_registry() -> &'static Registry<dyn InitialDisplacement> {
    static REG: OnceLock<Registry<dyn InitialDisplacement>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("initial displacement family");
        r.register("zero", families::zero_field)
            .register("affine", families::affine_field);
        r
    })
}

pub fn initial_damage_registry() -> &'static Registry<dyn InitialDamage> {
    static REG: OnceLock<Registry<dyn InitialDamage>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("initial damage family");
        r.register("uniform", families::uniform_damage)
            .register("notch", families::notch_damage);
        r
    })
}

#[derive(Debug)]
pub struct Scenario {
    pub boundary: Box<dyn BoundaryData>,
    pub load: Box<dyn LoadData>,
    pub u0: Box<dyn InitialDisplacement>,
    pub v0: Box<dyn InitialDisplacement>,
    pub z0: Box<dyn InitialDamage>,
    pub final_time: f64,
}

/// Data projected onto the discrete spaces at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSample {
    /// Hermite interpolant of `b(·, t)`.
    pub b: Vec<f64>,
    pub b_dot: Vec<f64>,
    pub b_ddot: Vec<f64>,
    /// Load vector `∫ ℓ(·, t) ζ dx`.
    pub load: Vec<f64>,
}

impl Scenario {
    /// Builds a scenario from its JSON description
    /// `{"boundary": {...}, "load": {...}, "u0": {...}, "v0": {...}, "z0": {...}}`.
    pub fn from_json(entry: &Value, final_time: f64, path: &str) -> Result<Self> {
        let obj = entry
            .as_object()
            .ok_or_else(|| Error::config(path, "expected an object"))?;
        const KEYS: [&str; 5] = ["boundary", "load", "u0", "v0", "z0"];
        if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
            let hint = crate::registry::suggest(k, &KEYS)
                .map(|s| format!(" (did you mean `{s}`?)"))
                .unwrap_or_default();
            return Err(Error::config(format!("{path}.{k}"), format!("unknown key{hint}")));
        }
        let get = |k: &str, default: Value| obj.get(k).cloned().unwrap_or(default);
        Ok(Scenario {
            boundary: boundary_registry().build(
                &get("boundary", serde_json::json!({"family": "ramp", "rate": 0.5})),
                &format!("{path}.boundary"),
            )?,
            load: load_registry().build(&get("load", serde_json::json!({"family": "zero"})), &format!("{path}.load"))?,
            u0: initial_displacement_registry()
                .build(&get("u0", serde_json::json!({"family": "zero"})), &format!("{path}.u0"))?,
            v0: initial_displacement_registry()
                .build(&get("v0", serde_json::json!({"family": "zero"})), &format!("{path}.v0"))?,
            z0: initial_damage_registry()
                .build(&get("z0", serde_json::json!({"family": "uniform", "value": 1.0})), &format!("{path}.z0"))?,
            final_time,
        })
    }

    /// No load, no motion, undamaged.
    pub fn quiescent(final_time: f64) -> Self {
        Scenario {
            boundary: Box::new(ConstantBoundary { strain: 0.0 }),
            load: Box::new(ZeroLoad),
            u0: Box::new(AffineField::zero()),
            v0: Box::new(AffineField::zero()),
            z0: Box::new(UniformDamage { value: 1.0 }),
            final_time,
        }
    }

    /// `b(x, t) = a t x` from rest, undamaged.
    pub fn stretching(rate: f64, final_time: f64) -> Self {
        Scenario {
            boundary: Box::new(RampBoundary { rate }),
            load: Box::new(ZeroLoad),
            u0: Box::new(AffineField::zero()),
            v0: Box::new(AffineField::zero()),
            z0: Box::new(UniformDamage { value: 1.0 }),
            final_time,
        }
    }

    pub fn eval_data(&self, spaces: &DiscreteSpaces, t: f64) -> Result<DataSample> {
        let tol = 1e-12 * self.final_time.max(1.0);
        if !(t >= -tol && t <= self.final_time + tol) {
            return Err(Error::Domain(format!(
                "time {t} outside [0, {}]",
                self.final_time
            )));
        }
        let b = &self.boundary;
        Ok(DataSample {
            b: spaces.interpolate_displacement(|x| b.eval(x, t, 0).0, |x| b.eval(x, t, 0).1),
            b_dot: spaces.interpolate_displacement(|x| b.eval(x, t, 1).0, |x| b.eval(x, t, 1).1),
            b_ddot: spaces.interpolate_displacement(|x| b.eval(x, t, 2).0, |x| b.eval(x, t, 2).1),
            load: spaces.load_vector(|x| self.load.eval(x, t)),
        })
    }

    pub fn initial_displacement(&self, spaces: &DiscreteSpaces) -> Vec<f64> {
        spaces.interpolate_displacement(|x| self.u0.eval(x).0, |x| self.u0.eval(x).1)
    }

    pub fn initial_velocity(&self, spaces: &DiscreteSpaces) -> Vec<f64> {
        spaces.interpolate_displacement(|x| self.v0.eval(x).0, |x| self.v0.eval(x).1)
    }

    pub fn initial_damage(&self, spaces: &DiscreteSpaces) -> Vec<f64> {
        spaces.interpolate_damage(|x| self.z0.eval(x))
    }

    /// Numerical re-check of the data assumptions; returns a list of
    /// human-readable problems (empty when consistent).
    pub fn check(&self, spaces: &DiscreteSpaces) -> Vec<String> {
        let mut issues = Vec::new();
        let z0 = self.initial_damage(spaces);
        if let Some((i, z)) = z0.iter().enumerate().find(|(_, z)| !(**z >= 0.0 && **z <= 1.0)) {
            issues.push(format!("z0 = {z} at node {i} outside [0, 1]"));
        }
        let u0 = self.initial_displacement(spaces);
        for &dof in spaces.dirichlet_dofs() {
            let x = spaces.mesh.node(dof / 2);
            let b0 = self.boundary.eval(x, 0.0, 0).0;
            if (u0[dof] - b0).abs() > 1e-12 * (1.0 + b0.abs()) {
                issues.push(format!(
                    "u0 = {} differs from b(0) = {b0} at Dirichlet node x = {x}",
                    u0[dof]
                ));
            }
        }
        // time derivatives must be consistent with central differences
        let length = spaces.mesh.length;
        let step = 1e-5 * self.final_time;
        for k in 1..8 {
            let t = self.final_time * k as f64 / 8.0;
            for x in [0.0, 0.37 * length, length] {
                for order in 0..2 {
                    let fd = (self.boundary.eval(x, t + step, order).0
                        - self.boundary.eval(x, t - step, order).0)
                        / (2.0 * step);
                    let exact = self.boundary.eval(x, t, order + 1).0;
                    if (fd - exact).abs() > 1e-6 * (1.0 + exact.abs()) {
                        issues.push(format!(
                            "boundary time derivative of order {} inconsistent at (x={x}, t={t})",
                            order + 1
                        ));
                    }
                }
            }
        }
        issues
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{Endpoint, Mesh1D};

    fn spaces() -> DiscreteSpaces {
        DiscreteSpaces::new(Mesh1D::new(1.0, 4, vec![Endpoint::Left, Endpoint::Right]).unwrap())
    }

    #[test]
    fn constant_boundary_has_no_time_derivatives() {
        let sc = Scenario::from_json(
            &serde_json::json!({"boundary": {"family": "constant", "strain": 0.2}}),
            1.0,
            "scenario",
        )
        .unwrap();
        let d = sc.eval_data(&spaces(), 0.4).unwrap();
        assert!(d.b_dot.iter().chain(&d.b_ddot).all(|v| *v == 0.0));
        assert!((d.b[8] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ramp_derivatives() {
        let sc = Scenario::stretching(0.5, 1.0);
        let sp = spaces();
        let d = sc.eval_data(&sp, 0.6).unwrap();
        for (i, x) in sp.mesh.nodes().into_iter().enumerate() {
            assert!((d.b[2 * i] - 0.3 * x).abs() < 1e-15);
            assert!((d.b[2 * i + 1] - 0.3).abs() < 1e-15);
            assert!((d.b_dot[2 * i] - 0.5 * x).abs() < 1e-15);
            assert!((d.b_dot[2 * i + 1] - 0.5).abs() < 1e-15);
        }
        assert!(d.b_ddot.iter().all(|v| *v == 0.0));
        assert!(d.load.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sine_pulse_matches_finite_differences() {
        let b = SinePulseBoundary { amplitude: 0.3, duration: 0.7 };
        let step = 1e-5;
        for &t in &[0.05, 0.2, 0.35, 0.61, 0.69, 0.9] {
            for &x in &[0.25, 1.0] {
                for order in 0..2 {
                    let fd = (b.eval(x, t + step, order).0 - b.eval(x, t - step, order).0) / (2.0 * step);
                    let exact = b.eval(x, t, order + 1).0;
                    assert!((fd - exact).abs() < 1e-7, "t={t} order={order}: {fd} vs {exact}");
                    let fds = (b.eval(x, t + step, order).1 - b.eval(x, t - step, order).1) / (2.0 * step);
                    assert!((fds - b.eval(x, t, order + 1).1).abs() < 1e-7);
                }
            }
        }
        // pulse is over: everything vanishes
        assert_eq!(b.eval(0.5, 0.8, 0), (0.0, 0.0));
        assert_eq!(b.eval(0.5, 0.8, 2), (0.0, 0.0));
    }

    #[test]
    fn out_of_range_time_is_rejected() {
        let sc = Scenario::stretching(0.5, 1.0);
        assert!(matches!(sc.eval_data(&spaces(), 1.5), Err(Error::Domain(_))));
        assert!(matches!(sc.eval_data(&spaces(), -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn traveling_pulse_load_moves() {
        let l = TravelingPulseLoad { amplitude: 2.0, center: 0.2, speed: 0.5, width: 0.1 };
        assert!((l.eval(0.2, 0.0) - 2.0).abs() < 1e-15);
        assert!((l.eval(0.45, 0.5) - 2.0).abs() < 1e-15);
        assert!(l.eval(0.9, 0.0) < 1e-10);
    }

    #[test]
    fn builtin_scenarios_pass_checks() {
        let sp = spaces();
        assert!(Scenario::quiescent(1.0).check(&sp).is_empty());
        assert!(Scenario::stretching(0.5, 1.0).check(&sp).is_empty());
        let pulse = Scenario::from_json(
            &serde_json::json!({
                "boundary": {"family": "sine_pulse", "amplitude": 0.1, "duration": 0.5},
                "load": {"family": "traveling_pulse", "amplitude": 1.0, "center": 0.0, "speed": 1.0, "width": 0.2},
                "z0": {"family": "notch", "depth": 0.3, "center": 0.5, "width": 0.1}
            }),
            1.0,
            "scenario",
        )
        .unwrap();
        assert!(pulse.check(&sp).is_empty());
    }

    #[test]
    fn inconsistent_initial_data_is_flagged() {
        let sp = spaces();
        let sc = Scenario::from_json(
            &serde_json::json!({
                "u0": {"family": "affine", "offset": 0.1, "slope": 0.0},
                "z0": {"family": "uniform", "value": 1.2}
            }),
            1.0,
            "scenario",
        )
        .unwrap();
        let issues = sc.check(&sp);
        assert_eq!(issues.len(), 3, "{issues:?}");
    }

    #[test]
    fn unknown_family_parameter_names_path() {
        let err = Scenario::from_json(
            &serde_json::json!({"boundary": {"family": "ramp", "rat": 1.0}}),
            1.0,
            "scenario",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("scenario.boundary"), "{err}");
        assert!(err.contains("did you mean `rate`"), "{err}");
        let err = Scenario::from_json(&serde_json::json!({"lod": {}}), 1.0, "scenario")
            .unwrap_err()
            .to_string();
        assert!(err.contains("scenario.lod") && err.contains("`load`"), "{err}");
    }
}
