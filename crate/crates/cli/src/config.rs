//! Experiment configuration: TOML in, validated struct out.
//!
//! Only `horizon` and `steps` are required (plus `pipeline` when the file is
//! run directly); every other key has a default. Unknown keys are rejected so
//! typos fail loudly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use gsde_core::gprocess::{ControlGrid, ControlPolicy, VolMatrix, VolatilityUncertainty};
use gsde_core::rng::InstanceShape;
use gsde_core::solver::{builtin, Coefficients};
use gsde_core::TimeGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Metric,
    Integrals,
    Solve,
    Validate,
    ClassicalCheck,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pipeline::Metric => "metric",
            Pipeline::Integrals => "integrals",
            Pipeline::Solve => "solve",
            Pipeline::Validate => "validate",
            Pipeline::ClassicalCheck => "classical-check",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Static,
    PerStepConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    #[serde(default = "default_coefficient")]
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            name: default_coefficient(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub instances: usize,
    pub dim: usize,
    pub max_measures: usize,
    pub max_atoms: usize,
    pub pool: usize,
    pub range: f64,
    pub scales: Vec<f64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        let s = InstanceShape::default();
        Self {
            instances: 200,
            dim: s.dim,
            max_measures: s.max_measures,
            max_atoms: s.max_atoms,
            pool: s.pool,
            range: s.range,
            scales: vec![0.5, 2.0, 10.0],
        }
    }
}

impl MetricConfig {
    pub fn shape(&self) -> InstanceShape {
        InstanceShape {
            dim: self.dim,
            max_measures: self.max_measures,
            max_atoms: self.max_atoms,
            pool: self.pool,
            range: self.range,
        }
    }
}

/// Integrands known to the `integrals` pipeline.
pub const INTEGRANDS: &[&str] = &["one", "time", "sin-driver", "state"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegralsConfig {
    pub integrands: Vec<String>,
    pub exponents: Vec<f64>,
    /// Direction `a`; `e₁` when absent.
    pub a: Option<Vec<f64>>,
    /// Second direction `ā`; `e₁` when absent.
    pub abar: Option<Vec<f64>>,
}

impl Default for IntegralsConfig {
    fn default() -> Self {
        Self {
            integrands: vec!["one".into(), "time".into(), "sin-driver".into()],
            exponents: vec![1.0, 2.0],
            a: None,
            abar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub separations: Vec<f64>,
    /// Direction of `y − x`; `e₁` when absent.
    pub direction: Option<Vec<f64>>,
    /// Replicates for the coupled solves; the top-level count when absent.
    pub lipschitz_replicates: Option<usize>,
    /// `C_T` supplied to the rate check; the fitted value when absent.
    pub c_t: Option<f64>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            separations: gsde_core::validation::LIPSCHITZ_SEPARATIONS.to_vec(),
            direction: None,
            lipschitz_replicates: None,
            c_t: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub state_dim: usize,
    #[serde(default = "one")]
    pub driver_dim: usize,
    /// Initial state; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_sigma_min")]
    pub sigma_min: f64,
    #[serde(default = "default_sigma_max")]
    pub sigma_max: f64,
    /// Explicit volatility matrices, row-major `d×d`; overrides the interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_levels")]
    pub control_levels: usize,
    #[serde(default = "default_policy")]
    pub control_policy: PolicyName,
    #[serde(default = "one")]
    pub segments: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_max_particles")]
    pub max_particles: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_cp")]
    pub c_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub coefficient: CoefficientConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub integrals: IntegralsConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

fn one() -> usize {
    1
}
fn default_sigma_min() -> f64 {
    0.5
}
fn default_sigma_max() -> f64 {
    1.0
}
fn default_levels() -> usize {
    5
}
fn default_policy() -> PolicyName {
    PolicyName::Static
}
fn default_replicates() -> usize {
    1000
}
fn default_tol() -> f64 {
    1e-3
}
fn default_max_iter() -> usize {
    15
}
fn default_max_particles() -> usize {
    64
}
fn default_p() -> f64 {
    2.0
}
fn default_cp() -> f64 {
    gsde_core::validation::DEFAULT_CP
}
fn default_coefficient() -> String {
    "mean-field-ou".into()
}

/// Parses TOML text into a raw table, with line context on syntax errors.
pub fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .with_context(|| format!("failed to parse {origin}"))
}

/// Builds and validates a config from a raw table.
pub fn from_table(table: toml::Table) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    from_table(parse_table(&text, &path.display().to_string())?)
}

impl ExperimentConfig {
    /// Checks every invariant that can be checked before any computation.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.horizon > 0.0 && self.horizon.is_finite(), "horizon must be positive, got {}", self.horizon);
        ensure!(self.steps >= 1, "steps must be at least 1");
        ensure!(self.replicates >= 1, "replicates must be at least 1");
        ensure!(self.tol > 0.0, "tol must be positive, got {}", self.tol);
        ensure!(self.max_iter >= 1, "max_iter must be at least 1");
        ensure!(self.max_particles >= 1, "max_particles must be at least 1");
        ensure!(self.state_dim >= 1 && self.driver_dim >= 1, "dimensions must be positive");
        ensure!(self.control_levels >= 1, "control_levels must be at least 1");
        ensure!(self.p >= 1.0 && self.p.is_finite(), "p must be >= 1, got {}", self.p);
        ensure!(self.c_p >= 0.0 && self.c_p.is_finite(), "c_p must be >= 0");
        if let Some(x0) = &self.x0 {
            ensure!(x0.len() == self.state_dim, "x0 has {} entries, state_dim is {}", x0.len(), self.state_dim);
        }
        self.uncertainty()?;
        self.control_grid()?;
        self.coefficients()?;
        match self.pipeline {
            Pipeline::Metric => {
                let m = &self.metric;
                ensure!(m.instances >= 1, "metric.instances must be at least 1");
                ensure!(m.scales.iter().all(|r| *r > 0.0 && r.is_finite()), "metric.scales must be positive");
                ensure!(
                    m.dim >= 1 && m.max_measures >= 1 && m.max_atoms >= 1 && m.pool >= 1,
                    "metric shape entries must be positive"
                );
            }
            Pipeline::Integrals => {
                let i = &self.integrals;
                for name in &i.integrands {
                    ensure!(
                        INTEGRANDS.contains(&name.as_str()),
                        "unknown integrand '{name}', expected one of {}",
                        INTEGRANDS.join(", ")
                    );
                }
                ensure!(i.exponents.iter().all(|p| *p >= 1.0), "integrals.exponents must be >= 1");
                for v in [&i.a, &i.abar].into_iter().flatten() {
                    ensure!(v.len() == self.driver_dim, "integral direction has {} entries, driver_dim is {}", v.len(), self.driver_dim);
                }
            }
            Pipeline::Validate => {
                ensure!(self.p >= 2.0, "validate needs p >= 2, got {}", self.p);
                let v = &self.validate;
                ensure!(!v.separations.is_empty(), "validate.separations is empty");
                ensure!(v.separations.iter().all(|s| *s > 0.0), "validate.separations must be positive");
                if let Some(d) = &v.direction {
                    ensure!(d.len() == self.state_dim, "validate.direction has {} entries, state_dim is {}", d.len(), self.state_dim);
                }
                if let Some(c) = v.c_t {
                    ensure!(c >= 0.0 && c.is_finite(), "validate.c_t must be finite and >= 0");
                }
            }
            Pipeline::ClassicalCheck => {
                ensure!(self.sigma_min == self.sigma_max && self.theta.is_none(), "classical-check needs sigma_min = sigma_max");
                ensure!(self.state_dim == 1 && self.driver_dim == 1, "classical-check is one-dimensional");
                ensure!(self.coefficient.name == "mean-field-ou", "classical-check uses the mean-field-ou coefficient");
            }
            Pipeline::Solve => {}
        }
        Ok(())
    }

    pub fn x0(&self) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![1.0; self.state_dim])
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::uniform(self.horizon, self.steps)?)
    }

    pub fn uncertainty(&self) -> Result<VolatilityUncertainty> {
        Ok(match &self.theta {
            Some(list) => {
                let d = self.driver_dim;
                let ms = list
                    .iter()
                    .map(|m| VolMatrix::new(d, m.clone()))
                    .collect::<gsde_core::Result<Vec<_>>>()?;
                VolatilityUncertainty::matrices(ms)?
            }
            None => VolatilityUncertainty::interval(self.driver_dim, self.sigma_min, self.sigma_max)?,
        })
    }

    pub fn control_grid(&self) -> Result<ControlGrid> {
        let policy = match self.control_policy {
            PolicyName::Static => ControlPolicy::Static,
            PolicyName::PerStepConstant => ControlPolicy::PerStepConstant { segments: self.segments },
        };
        Ok(ControlGrid::uniform(&self.uncertainty()?, self.control_levels, policy)?)
    }

    pub fn coefficients(&self) -> Result<Coefficients> {
        Ok(builtin(&self.coefficient.name, &self.coefficient.params, self.state_dim, self.driver_dim)?)
    }

    /// The config as it affects results: `output_dir` dropped.
    pub fn canonical(&self) -> ExperimentConfig {
        ExperimentConfig {
            output_dir: None,
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical JSON form (sorted keys, shortest floats).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self.canonical()).expect("config serializes");
        let text = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&self.canonical())?)
    }
}

/// Inserts `value` at a dotted `key`, creating tables on the way.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("'{p}' in '{key}' is not a table"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses a command-line value as TOML (numbers, booleans, arrays), falling
/// back to a plain string.
pub fn parse_value(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}
