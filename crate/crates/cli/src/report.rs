//! Report schema and the matrix encoding used in it.

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::ErrorInfo;
use holotwist_core::lie::{CMat, C64};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Non-finite residuals are written as `null` and read back as infinity.
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_as_infinity")]
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tol: f64) -> Check {
        Check { name: name.into(), residual, tol, pass: residual <= tol }
    }
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub values: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    pub timings: Timings,
}

impl Report {
    pub fn new(command: &str, config: Option<RunConfig>) -> Report {
        Report {
            schema: SCHEMA_VERSION,
            command: command.into(),
            config,
            pass: true,
            checks: Vec::new(),
            values: json!({}),
            error: None,
            timings: Timings { total_secs: 0.0 },
        }
    }

    pub fn check(&mut self, name: impl Into<String>, residual: f64, tol: f64) {
        self.checks.push(Check::new(name, residual, tol));
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.values[key] = v;
    }

    pub fn finish(&mut self) {
        self.pass = self.error.is_none() && self.checks.iter().all(|c| c.pass);
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }

    /// Human-readable summary for standard output.
    pub fn summary(&self) -> String {
        let mut out = format!("{}: {}\n", self.command, if self.pass { "PASS" } else { "FAIL" });
        for c in &self.checks {
            out += &format!("  [{}] {}: {:.3e} (tol {:.0e})\n", if c.pass { "ok" } else { "FAIL" }, c.name, c.residual, c.tol);
        }
        if let Some(e) = &self.error {
            out += &format!("  error ({}): {}\n", e.variant, e.message);
        }
        out
    }
}

pub fn complex(z: C64) -> Value {
    json!([z.re, z.im])
}

/// Row-major nested arrays of `[re, im]` pairs.
pub fn matrix(m: &CMat) -> Value {
    Value::Array((0..m.nrows()).map(|r| Value::Array((0..m.ncols()).map(|c| complex(m[(r, c)])).collect())).collect())
}

pub fn vector(p: &holotwist_core::geometry::Vec3) -> Value {
    json!([p.x, p.y, p.z])
}
