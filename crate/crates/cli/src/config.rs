//! Run configuration: JSON in, validated `RunConfig` out.

use crate::error::CliError;
use holotwist_core::catalog::{CylinderSpec, LoopSpec};
use holotwist_core::families::{example, FamilySpec};
use holotwist_core::holonomy::HolonomyOptions;
use holotwist_core::reconstruct::ReconstructOptions;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    /// Name from the example registry; exclusive with `family`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub seed: u64,
    /// Comparison tolerance of the command; each command has its own default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Tolerance for the Čech identities checked by `validate`, `gauge` and `verify`.
    #[serde(default = "default_cech_tol")]
    pub cech_tol: f64,
    /// Random sample points per overlap region.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub holonomy: HolonomyOptions,
    #[serde(default, rename = "loop", skip_serializing_if = "Option::is_none")]
    pub loop_: Option<LoopSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cylinder: Option<CylinderSpec>,
    /// Cylinders for `verify` and `roundtrip`; defaults to the model's catalog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<Vec<CylinderSpec>>,
    #[serde(default)]
    pub gauge: GaugeConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeConfig {
    pub amplitude: f64,
    /// Number of random gauges tried by `gauge` and `verify`.
    pub count: usize,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        GaugeConfig { amplitude: 0.3, count: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub tol_rec: f64,
    pub fd_step: f64,
    pub rho: f64,
    pub curl_step: f64,
    /// Sample points per overlap for `reconstruct`.
    pub points: usize,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        let d = ReconstructOptions::default();
        ReconstructConfig { tol_rec: d.tol_rec, fd_step: d.fd_step, rho: d.rho, curl_step: d.curl_step, points: 1 }
    }
}

impl ReconstructConfig {
    pub fn options(&self) -> ReconstructOptions {
        ReconstructOptions { tol_rec: self.tol_rec, fd_step: self.fd_step, rho: self.rho, curl_step: self.curl_step }
    }
}

fn default_cech_tol() -> f64 {
    1e-8
}

fn default_samples() -> usize {
    20
}

impl RunConfig {
    /// Config used when a command is run without `--config`.
    pub fn for_example(name: &str) -> RunConfig {
        RunConfig {
            schema: SCHEMA_VERSION,
            example: Some(name.into()),
            family: None,
            seed: 0,
            tol: None,
            cech_tol: default_cech_tol(),
            samples: default_samples(),
            holonomy: HolonomyOptions::default(),
            loop_: None,
            cylinder: None,
            battery: None,
            gauge: GaugeConfig::default(),
            reconstruct: ReconstructConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config { path: if path == "." { String::new() } else { path }, message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
        RunConfig::parse(&text)
    }

    /// The selected family, from `family` or the registry.
    pub fn family_spec(&self) -> Result<FamilySpec, CliError> {
        match (&self.example, &self.family) {
            (Some(_), Some(_)) => Err(CliError::config("example", "give either `example` or `family`, not both")),
            (None, None) => Err(CliError::config("", "missing `example` or `family`")),
            (Some(name), None) => example(name).map_err(|e| CliError::config("example", e.to_string())),
            (None, Some(f)) => Ok(f.clone()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::config("schema", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        let positive = |path: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(CliError::config(path, format!("must be positive and finite, got {x}")))
            }
        };
        if let Some(t) = self.tol {
            positive("tol", t)?;
        }
        positive("cech_tol", self.cech_tol)?;
        positive("holonomy.cell_tol", self.holonomy.cell_tol)?;
        positive("holonomy.assign.margin", self.holonomy.assign.margin)?;
        positive("reconstruct.tol_rec", self.reconstruct.tol_rec)?;
        positive("reconstruct.fd_step", self.reconstruct.fd_step)?;
        positive("reconstruct.rho", self.reconstruct.rho)?;
        positive("reconstruct.curl_step", self.reconstruct.curl_step)?;
        if !(self.gauge.amplitude.is_finite() && self.gauge.amplitude >= 0.0) {
            return Err(CliError::config("gauge.amplitude", "must be non-negative and finite"));
        }
        let at_least = |path: &str, x: usize, min: usize| {
            if x >= min {
                Ok(())
            } else {
                Err(CliError::config(path, format!("must be at least {min}, got {x}")))
            }
        };
        at_least("samples", self.samples, 1)?;
        at_least("holonomy.steps_per_unit", self.holonomy.steps_per_unit, 1)?;
        at_least("holonomy.quad_order", self.holonomy.quad_order, 1)?;
        at_least("holonomy.panels_per_unit", self.holonomy.panels_per_unit, 1)?;
        at_least("holonomy.assign.density", self.holonomy.assign.density, 2)?;
        at_least("reconstruct.points", self.reconstruct.points, 1)?;
        self.family_spec()?;
        Ok(())
    }
}
