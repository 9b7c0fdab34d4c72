//! Run configuration. Every section and field has a default, so `{}` is a
//! valid configuration.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audit::AuditSettings;
use crate::discretization::{DiscreteSpaces, Endpoint, Mesh1D};
use crate::error::{Error, Result};
use crate::material::{self, MaterialModel, Polynomial};
use crate::registry::with_suggestion;
use crate::scenarios::Scenario;
use crate::stepper::{build_damage_solver, DamageSolverSettings, Simulation, StepSettings, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub material: MaterialConfig,
    pub scenario: Value,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            mesh: MeshConfig::default(),
            time: TimeConfig::default(),
            material: MaterialConfig::default(),
            scenario: Value::Object(Default::default()),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
            sweep: SweepConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "N")]
    pub elements: usize,
    pub dirichlet: Vec<Endpoint>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            length: 1.0,
            elements: 32,
            dirichlet: vec![Endpoint::Left, Endpoint::Right],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub final_time: f64,
    #[serde(rename = "M")]
    pub steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            final_time: 1.0,
            steps: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Quadratic,
    Linear,
    Smoothstep,
}

/// Material coefficients. `h` and `f`, when given as ascending
/// coefficient lists, replace the preset's polynomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub preset: Preset,
    pub eta: f64,
    pub kappa: f64,
    pub c0: f64,
    pub p: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<f64>>,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        MaterialConfig {
            preset: Preset::Quadratic,
            eta: 0.1,
            kappa: 0.5,
            c0: 1.0,
            p: 2.0,
            delta: 1e-3,
            h: None,
            f: None,
        }
    }
}

impl MaterialConfig {
    pub fn build(&self) -> Result<MaterialModel> {
        let base = match self.preset {
            Preset::Quadratic => MaterialModel::quadratic(self.eta, self.kappa, self.delta),
            Preset::Linear => MaterialModel::linear(self.eta, self.kappa, self.delta),
            Preset::Smoothstep => MaterialModel::smoothstep(self.eta, self.kappa, self.delta),
        };
        let model = MaterialModel::new(
            self.eta,
            self.h.clone().map(Polynomial::new).unwrap_or(base.h),
            self.f.clone().map(Polynomial::new).unwrap_or(base.f),
            self.c0,
            self.p,
            self.delta,
            self.kappa,
        );
        let report = material::validate(&model);
        if let Some(v) = report.violations.first() {
            let all: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::config(
                format!("material.{}", v.field()),
                all.join("; "),
            ));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damage_solver: String,
    pub tol_z: f64,
    pub tol_alt: f64,
    pub max_sweeps: usize,
    pub max_iter: usize,
    pub eps_act: f64,
    pub eps_audit: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let step = StepSettings::default();
        let audit = AuditSettings::default();
        SolverConfig {
            damage_solver: "projected-newton".into(),
            tol_z: step.tol_z,
            tol_alt: step.tol_alt,
            max_sweeps: step.max_sweeps,
            max_iter: DamageSolverSettings::default().max_iter,
            eps_act: audit.eps_act,
            eps_audit: audit.eps_audit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub ledger: String,
    pub report: String,
    pub snapshot_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            ledger: "ledger.csv".into(),
            report: "summary.json".into(),
            snapshot_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub levels: usize,
    /// Bound on max/min of the regularization monitor across a δ-sweep.
    pub monitor_factor: f64,
    /// Ratio between consecutive δ in a δ-sweep.
    pub delta_ratio: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            levels: 4,
            monitor_factor: 10.0,
            delta_ratio: 10.0,
        }
    }
}

fn positive(value: f64, path: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {value}")))
    }
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let message = with_suggestion(&e.inner().to_string());
            let mut path = e.path().to_string();
            if path == "." {
                path = unknown_field(&message).unwrap_or_else(|| "<root>".into());
            }
            Error::config(path, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        Self::from_json_str(&value.to_string())
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        positive(self.mesh.length, "mesh.L")?;
        if self.mesh.elements == 0 {
            return Err(Error::config("mesh.N", "need at least one element"));
        }
        positive(self.time.final_time, "time.T")?;
        if self.time.steps == 0 {
            return Err(Error::config("time.M", "need at least one time step"));
        }
        self.material.build()?;
        positive(self.solver.tol_z, "solver.tol_z")?;
        positive(self.solver.tol_alt, "solver.tol_alt")?;
        positive(self.solver.eps_act, "solver.eps_act")?;
        positive(self.solver.eps_audit, "solver.eps_audit")?;
        if self.solver.max_sweeps == 0 {
            return Err(Error::config("solver.max_sweeps", "must be at least 1"));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::config("solver.max_iter", "must be at least 1"));
        }
        if self.output.snapshot_stride == 0 {
            return Err(Error::config("output.snapshot_stride", "must be at least 1"));
        }
        positive(self.sweep.monitor_factor, "sweep.monitor_factor")?;
        if !(self.sweep.delta_ratio > 1.0) {
            return Err(Error::config("sweep.delta_ratio", "must exceed 1"));
        }
        self.damage_solver()?;
        let sim = self.build()?;
        let issues = sim.scenario.check(&sim.spaces);
        if let Some(first) = issues.first() {
            return Err(Error::config("scenario", first.clone()));
        }
        Ok(())
    }

    fn damage_solver(&self) -> Result<Box<dyn crate::stepper::DamageSolver>> {
        build_damage_solver(
            &self.solver.damage_solver,
            DamageSolverSettings {
                tol: (0.1 * self.solver.tol_z).max(1e-14),
                max_iter: self.solver.max_iter,
            },
        )
    }

    pub fn build(&self) -> Result<Simulation> {
        let mesh = Mesh1D::new(self.mesh.length, self.mesh.elements, self.mesh.dirichlet.clone())?;
        let grid = TimeGrid::new(self.time.final_time, self.time.steps)?;
        Ok(Simulation {
            spaces: DiscreteSpaces::new(mesh),
            material: self.material.build()?,
            scenario: Scenario::from_json(&self.scenario, self.time.final_time, "scenario")?,
            grid,
            settings: StepSettings {
                tol_z: self.solver.tol_z,
                tol_alt: self.solver.tol_alt,
                max_sweeps: self.solver.max_sweeps,
            },
            solver: self.damage_solver()?,
        })
    }

    pub fn audit_settings(&self) -> AuditSettings {
        AuditSettings {
            eps_act: self.solver.eps_act,
            eps_audit: self.solver.eps_audit,
            seed: self.seed,
            ..AuditSettings::default()
        }
    }

    /// The configuration with all defaults filled in, as JSON.
    pub fn effective(&self) -> Value {
        serde_json::to_value(self).expect("configuration is always serializable")
    }
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_valid() {
        let c = Config::from_json_str("{}").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.effective()["time"]["M"], 64);
    }

    #[test]
    fn zero_steps_names_the_key() {
        let err = Config::from_json_str(r#"{"time": {"M": 0}}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "time.M"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn misspelled_section_gets_a_suggestion() {
        let err = Config::from_json_str(r#"{"materail": {}}"#).unwrap_err().to_string();
        assert!(err.contains("materail") && err.contains("did you mean `material`"), "{err}");
    }

    #[test]
    fn type_errors_carry_the_path() {
        let err = Config::from_json_str(r#"{"mesh": {"N": "many"}}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "mesh.N"),
            other => panic!("{other}"),
        }
        let err = Config::from_json_str(r#"{"scenario": {"boundary": {"family": "ramp", "rat": 1}}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("scenario.boundary") && err.contains("did you mean `rate`"), "{err}");
    }

    #[test]
    fn invalid_material_is_rejected() {
        let err = Config::from_json_str(r#"{"material": {"p": 1.0}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path.starts_with("material")), "{err}");
        let err = Config::from_json_str(r#"{"material": {"f": [-1.0]}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
    }

    #[test]
    fn inconsistent_scenario_is_rejected() {
        let err = Config::from_json_str(r#"{"scenario": {"u0": {"family": "affine", "offset": 0.3}}}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "scenario"), "{err}");
    }

    #[test]
    fn unknown_solver_is_rejected() {
        let err = Config::from_json_str(r#"{"solver": {"damage_solver": "newton"}}"#).unwrap_err();
        assert!(err.to_string().contains("solver.damage_solver"), "{err}");
    }

    #[test]
    fn custom_polynomials_override_the_preset() {
        let c = Config::from_json_str(r#"{"material": {"h": [0.2, 0.0, 0.8], "eta": 0.2}}"#).unwrap();
        let m = c.material.build().unwrap();
        assert!((m.h(0.5) - 0.4).abs() < 1e-15);
    }
}
