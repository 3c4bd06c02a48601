//! Run configuration: JSON schema, strict key checking and validation.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lattice::Boundary;
use crate::symplectic::Region;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub region: RegionSpec,
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kms: Option<KmsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_sites: usize,
    pub mass: f64,
    pub coupling: f64,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSpec {
    Half {},
    Sites(Vec<usize>),
    Interval { start: usize, length: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Kernels,
    Flow,
    Kms,
    EntropyScan,
    Crosscheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub route_tol: f64,
    pub kms_tol: f64,
    pub quad_tol: f64,
    pub sing_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { route_tol: 1e-7, kms_tol: 1e-7, quad_tol: 1e-10, sing_tol: 1e-10, clip: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: "results".into(), formats: vec![Format::Json] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Lengths of intervals centered in the chain.
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmsConfig {
    pub t_grid: Vec<f64>,
}

enum Keys {
    Leaf,
    /// Object with fixed keys.
    Obj(&'static [(&'static str, Keys)]),
}

const SCHEMA: Keys = Keys::Obj(&[
    (
        "model",
        Keys::Obj(&[("n_sites", Keys::Leaf), ("mass", Keys::Leaf), ("coupling", Keys::Leaf), ("boundary", Keys::Leaf)]),
    ),
    (
        "region",
        Keys::Obj(&[
            ("half", Keys::Obj(&[])),
            ("sites", Keys::Leaf),
            ("interval", Keys::Obj(&[("start", Keys::Leaf), ("length", Keys::Leaf)])),
        ]),
    ),
    ("tasks", Keys::Leaf),
    (
        "tolerances",
        Keys::Obj(&[
            ("route_tol", Keys::Leaf),
            ("kms_tol", Keys::Leaf),
            ("quad_tol", Keys::Leaf),
            ("sing_tol", Keys::Leaf),
            ("clip", Keys::Leaf),
        ]),
    ),
    ("output", Keys::Obj(&[("directory", Keys::Leaf), ("formats", Keys::Leaf)])),
    ("scan", Keys::Obj(&[("lengths", Keys::Leaf)])),
    ("kms", Keys::Obj(&[("t_grid", Keys::Leaf)])),
]);

fn join(path: &str, key: &str) -> String {
    if path.is_empty() { key.to_string() } else { format!("{path}.{key}") }
}

fn check_keys(v: &Value, schema: &Keys, path: &str) -> Result<()> {
    let (Keys::Obj(fields), Value::Object(map)) = (schema, v) else { return Ok(()) };
    for (k, sub) in map {
        let p = join(path, k);
        match fields.iter().find(|(name, _)| name == k) {
            Some((_, s)) => check_keys(sub, s, &p)?,
            None => return Err(Error::Schema { path: p, message: "unknown key".into() }),
        }
    }
    Ok(())
}

fn schema_err(path: &str, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

pub fn parse_config_str(text: &str, lenient: bool) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema_err("", format!("invalid JSON: {e}")))?;
    if !lenient {
        check_keys(&value, &SCHEMA, "")?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        schema_err(&path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config from a file, or from stdin when `path` is `-`.
pub fn parse_config(path: &Path, lenient: bool) -> Result<RunConfig> {
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.display().to_string()),
            _ => Error::Io(format!("{}: {e}", path.display())),
        })?
    };
    parse_config_str(&text, lenient)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.n_sites < 1 {
            return Err(schema_err("model.n_sites", "must be at least 1"));
        }
        if !(m.coupling > 0.0 && m.coupling.is_finite()) {
            return Err(schema_err("model.coupling", "must be positive"));
        }
        if !(m.mass >= 0.0 && m.mass.is_finite()) {
            return Err(schema_err("model.mass", "must be nonnegative"));
        }
        self.resolve_region()?;
        if self.tasks.is_empty() {
            return Err(schema_err("tasks", "must not be empty"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("route_tol", t.route_tol),
            ("kms_tol", t.kms_tol),
            ("quad_tol", t.quad_tol),
            ("sing_tol", t.sing_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(schema_err(&format!("tolerances.{name}"), "must be positive"));
            }
        }
        if let Some(c) = t.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(schema_err("tolerances.clip", "must be positive"));
            }
        }
        if let Some(scan) = &self.scan {
            for (i, &l) in scan.lengths.iter().enumerate() {
                if l < 1 || l > m.n_sites {
                    return Err(schema_err(&format!("scan.lengths[{i}]"), format!("length {l} outside 1..={}", m.n_sites)));
                }
            }
        }
        if self.tasks.contains(&Task::EntropyScan) && self.scan.is_none() {
            return Err(schema_err("scan", "entropy_scan task needs a scan section"));
        }
        if let Some(k) = &self.kms {
            if let Some(i) = k.t_grid.iter().position(|t| !t.is_finite()) {
                return Err(schema_err(&format!("kms.t_grid[{i}]"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn resolve_region(&self) -> Result<Region> {
        let n = self.model.n_sites;
        match &self.region {
            RegionSpec::Half {} => Ok(Region::half(n)),
            RegionSpec::Sites(sites) => {
                let mut sorted = sites.clone();
                sorted.sort_unstable();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(schema_err("region.sites", "duplicate site index"));
                }
                if let Some(bad) = sorted.iter().find(|&&s| s >= n) {
                    return Err(schema_err("region.sites", format!("site {bad} out of range for {n} sites")));
                }
                Region::new(sorted, n).map_err(|e| schema_err("region.sites", e.to_string()))
            }
            RegionSpec::Interval { start, length } => {
                if *length == 0 || start + length > n {
                    return Err(schema_err(
                        "region.interval",
                        format!("interval [{start}, {}) out of range for {n} sites", start + length),
                    ));
                }
                Region::interval(*start, *length, n).map_err(|e| schema_err("region.interval", e.to_string()))
            }
        }
    }

    pub fn t_grid(&self) -> Vec<f64> {
        self.kms.as_ref().map(|k| k.t_grid.clone()).unwrap_or_else(|| crate::flow::DEFAULT_T_GRID.to_vec())
    }
}
