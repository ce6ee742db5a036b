//! Run configuration: JSON file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use nozzleflow::gas::GasModel;
use nozzleflow::grid::Grid;
use nozzleflow::nozzle::{NozzleProfile, ProfileSpec};
use nozzleflow::potentialflow::BoundaryData;
use nozzleflow::problem::SolverParams;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gas: GasConfig,
    pub nozzle: ProfileSpec,
    pub inflow: InflowConfig,
    #[serde(default)]
    pub boundary: BoundaryData,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shock: Option<ShockConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowConfig {
    pub rho0: f64,
    #[serde(default)]
    pub u0: InflowVelocity,
}

/// Entrance velocity: a number, or `"calibrate"` for the transonic value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InflowVelocity {
    #[default]
    Calibrate,
    Fixed(f64),
}

impl InflowVelocity {
    pub fn fixed(&self) -> Option<f64> {
        match *self {
            InflowVelocity::Calibrate => None,
            InflowVelocity::Fixed(u) => Some(u),
        }
    }
}

impl Serialize for InflowVelocity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            InflowVelocity::Calibrate => s.serialize_str("calibrate"),
            InflowVelocity::Fixed(u) => s.serialize_f64(u),
        }
    }
}

impl<'de> Deserialize<'de> for InflowVelocity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "calibrate" => Ok(InflowVelocity::Calibrate),
            Value::Number(n) => n.as_f64().map(InflowVelocity::Fixed).ok_or_else(|| serde::de::Error::custom("u0 out of range")),
            other => Err(serde::de::Error::custom(format!("u0 must be a number or \"calibrate\", got {other}"))),
        }
    }
}

/// Exit-pressure input of the `shock` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

/// `count` exit pressures evenly spaced from `from` to `to`, both included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.from];
        }
        let step = (self.to - self.from) / (self.count - 1) as f64;
        (0..self.count).map(|k| if k + 1 == self.count { self.to } else { self.from + step * k as f64 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: default_formats() }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Read { path: path.display().to_string(), source: e })?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }

    pub fn gas_model(&self) -> Result<GasModel, CliError> {
        GasModel::new(self.gas.gamma).map_err(|e| CliError::Invalid(e.to_string()))
    }

    pub fn profile(&self) -> Result<NozzleProfile, CliError> {
        NozzleProfile::from_spec(&self.nozzle).map_err(|e| CliError::Invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.gas_model()?;
        self.profile()?;
        let bad = |m: String| Err(CliError::Invalid(m));
        if !(self.inflow.rho0 > 0.0) || !self.inflow.rho0.is_finite() {
            return bad(format!("inflow.rho0 must be positive, got {}", self.inflow.rho0));
        }
        if let Some(u) = self.inflow.u0.fixed() {
            if !(u > 0.0) || !u.is_finite() {
                return bad(format!("inflow.u0 must be positive, got {u}"));
            }
        }
        let b = &self.boundary;
        if !(b.eps >= 0.0) || !b.eps.is_finite() {
            return bad(format!("boundary.eps must be finite and non-negative, got {}", b.eps));
        }
        if b.h1_sin.iter().chain(&b.bin_cos).any(|v| !v.is_finite()) {
            return bad("boundary coefficients must be finite".into());
        }
        self.solver.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        Grid::new(self.nozzle.l0, self.nozzle.l1, self.solver.n1).map_err(|e| CliError::Invalid(e.to_string()))?;
        if let Some(s) = &self.shock {
            if let Some(p) = s.p_e {
                if !(p > 0.0) || !p.is_finite() {
                    return bad(format!("shock.p_e must be positive, got {p}"));
                }
            }
            if let Some(w) = s.sweep {
                if w.count == 0 || !(w.from > 0.0 && w.to > 0.0) || !w.from.is_finite() || !w.to.is_finite() {
                    return bad("shock.sweep needs positive from/to and count >= 1".into());
                }
            }
        }
        if self.output.formats.is_empty() {
            return bad("output.formats must not be empty".into());
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Applies `key=value`. `key` is a dotted path (`solver.n1`) or a bare name
/// that occurs exactly once among the blocks (`n1`). The value is read as
/// JSON when it parses, otherwise as a string. Only scalars and arrays can be
/// replaced.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let err = |m: &str| CliError::Override(format!("{spec}: {m}"));
    let (key, raw) = spec.split_once('=').ok_or_else(|| err("expected key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(err("empty key"));
    }
    let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if value.is_object() {
        return Err(err("objects cannot be set"));
    }
    let path: Vec<String> = if key.contains('.') {
        key.split('.').map(str::to_string).collect()
    } else {
        let obj = root.as_object().ok_or_else(|| err("config is not an object"))?;
        let hits: Vec<String> = obj
            .iter()
            .filter(|(_, v)| v.as_object().is_some_and(|b| b.contains_key(key)))
            .map(|(k, _)| k.clone())
            .collect();
        match hits.as_slice() {
            [block] => vec![block.clone(), key.to_string()],
            [] => return Err(err("unknown key")),
            _ => return Err(err(&format!("ambiguous key, found in {}", hits.join(", ")))),
        }
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = root;
    for p in parents {
        let obj = node.as_object_mut().ok_or_else(|| err("path crosses a scalar"))?;
        node = obj.entry(p.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| err("path crosses a scalar"))?;
    if obj.get(last).is_some_and(Value::is_object) {
        return Err(err("cannot replace a block"));
    }
    obj.insert(last.clone(), value);
    Ok(())
}
