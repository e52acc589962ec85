//! Scenario files: parsing, validation and the field paths used in errors.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::control::{ControlError, EconomicParams, RateVariant};
use crate::domain::{validate_domain, DomainSpec, SpatialDomain};
use crate::oracles::Tolerances;
use crate::risk::{LocationScatterModel, PriorSet, RiskError, RiskPreferences};

pub const SCHEMA_VERSION: &str = "1";

const DEFAULT_SAMPLES: usize = 100_000;
const DEFAULT_GRID_POINTS: usize = 101;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
}

impl ScenarioError {
    /// Field path for schema and validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Io { .. } => None,
            ScenarioError::Schema { path, .. } => Some(path),
            ScenarioError::Validation { field, .. } => Some(field),
        }
    }

    fn validation(field: impl Into<String>, message: impl ToString) -> Self {
        ScenarioError::Validation {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

/// The scenario file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: String,
    pub domain: DomainSpec,
    pub economics: EconomicsSection,
    pub priors: Vec<PriorEntry>,
    pub preferences: PreferencesSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    /// Initial stock for `simulate` and `verify`; defaults to the barycenter
    /// location.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicsSection {
    pub r: f64,
    pub beta: f64,
    pub horizon: f64,
    /// Defaults to `⟨d, m_B⟩`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa0: Option<f64>,
    #[serde(default)]
    pub rate_variant: RateVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorEntry {
    pub mean: Vec<f64>,
    pub scatter: ScatterInput,
    pub weight: f64,
}

/// Either nested rows or a flat row-major list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScatterInput {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub no_aversion: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid: Option<TimeGridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum TimeGridSpec {
    /// `count` equally spaced points on `[0, T]`, endpoints included.
    Uniform { count: usize },
    Points(Vec<f64>),
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// Hex SHA-256 of the file bytes.
    pub hash: String,
    pub domain: SpatialDomain,
    pub params: EconomicParams,
    pub rate_variant: RateVariant,
    pub priors: PriorSet,
    pub prefs: RiskPreferences,
    pub seed: Option<u64>,
    pub samples: usize,
    pub times: Vec<f64>,
    pub tolerances: Tolerances,
    pub initial_state: Option<DVector<f64>>,
}

impl Scenario {
    pub fn n_regions(&self) -> usize {
        self.domain.n_regions()
    }

    /// Seed, or a validation error for subcommands that sample.
    pub fn require_seed(&self) -> Result<u64, ScenarioError> {
        self.seed.ok_or_else(|| {
            ScenarioError::validation("preferences.seed", "a seed is required for sampling")
        })
    }

    /// Switches to the no-aversion limit.
    pub fn set_no_aversion(&mut self) {
        self.prefs = RiskPreferences::NoAversion;
        self.file.preferences.no_aversion = true;
    }

    pub fn set_variant(&mut self, variant: RateVariant) {
        self.rate_variant = variant;
        self.file.economics.rate_variant = variant;
    }
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let bytes = std::fs::read(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_bytes(&bytes)
}

pub fn parse_scenario_bytes(bytes: &[u8]) -> Result<Scenario, ScenarioError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ScenarioError::Schema {
        path: String::new(),
        message: format!("file is not UTF-8: {e}"),
    })?;
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(schema_error)?;
    let hash = hex::encode(Sha256::digest(bytes));
    validate(file, hash)
}

fn schema_error(err: serde_path_to_error::Error<serde_json::Error>) -> ScenarioError {
    let mut path = err.path().to_string();
    if path == "." {
        path.clear();
    }
    let message = err.inner().to_string();
    // Missing fields are reported at their parent; name the field itself.
    if let Some(rest) = message.strip_prefix("missing field `") {
        if let Some(name) = rest.split('`').next() {
            path = if path.is_empty() {
                name.to_string()
            } else {
                format!("{path}.{name}")
            };
        }
    }
    ScenarioError::Schema { path, message }
}

fn validate(file: ScenarioFile, hash: String) -> Result<Scenario, ScenarioError> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::validation(
            "schema_version",
            format!("unsupported version `{}` (expected `{SCHEMA_VERSION}`)", file.schema_version),
        ));
    }
    let domain = validate_domain(file.domain.clone())
        .map_err(|e| ScenarioError::validation(format!("domain.{}", e.field()), &e))?;
    let n = domain.n_regions();

    let priors = build_priors(&file.priors, n)?;
    let kappa0 = match file.economics.kappa0 {
        Some(k) => k,
        None => domain.d_weights().dot(&priors.mean_location()),
    };
    let econ = &file.economics;
    let params = EconomicParams::new(econ.r, econ.beta, econ.horizon, kappa0).map_err(|e| match &e {
        ControlError::InvalidParameter { field, .. } => {
            ScenarioError::validation(format!("economics.{field}"), &e)
        }
        _ => ScenarioError::validation("economics", &e),
    })?;

    let pref = &file.preferences;
    let prefs = if pref.no_aversion {
        RiskPreferences::NoAversion
    } else {
        let gamma = pref.gamma.ok_or_else(|| {
            ScenarioError::validation("preferences.gamma", "required unless no_aversion is set")
        })?;
        RiskPreferences::averse(gamma)
            .map_err(|e| ScenarioError::validation("preferences.gamma", &e))?
    };
    let samples = pref.samples.unwrap_or(DEFAULT_SAMPLES);
    if samples < 2 {
        return Err(ScenarioError::validation("preferences.samples", "must be at least 2"));
    }
    let times = build_time_grid(pref.time_grid.as_ref(), params.horizon)?;

    let initial_state = match &file.initial_state {
        None => None,
        Some(v) if v.len() != n => {
            return Err(ScenarioError::validation(
                "initial_state",
                format!("expected {n} entries, got {}", v.len()),
            ))
        }
        Some(v) if v.iter().any(|x| !x.is_finite()) => {
            return Err(ScenarioError::validation("initial_state", "non-finite entry"))
        }
        Some(v) => Some(DVector::from_column_slice(v)),
    };

    Ok(Scenario {
        rate_variant: econ.rate_variant,
        tolerances: file.tolerances.unwrap_or_default(),
        seed: pref.seed,
        file,
        hash,
        domain,
        params,
        priors,
        prefs,
        samples,
        times,
        initial_state,
    })
}

fn build_priors(entries: &[PriorEntry], n: usize) -> Result<PriorSet, ScenarioError> {
    if entries.is_empty() {
        return Err(ScenarioError::validation("priors", "at least one prior is required"));
    }
    let mut models = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        if e.mean.len() != n {
            return Err(ScenarioError::validation(
                format!("priors[{i}].mean"),
                format!("expected {n} entries, got {}", e.mean.len()),
            ));
        }
        let scatter = match &e.scatter {
            ScatterInput::Flat(v) if v.len() == n * n => DMatrix::from_row_slice(n, n, v),
            ScatterInput::Rows(rows) if rows.len() == n && rows.iter().all(|r| r.len() == n) => {
                DMatrix::from_fn(n, n, |r, c| rows[r][c])
            }
            _ => {
                return Err(ScenarioError::validation(
                    format!("priors[{i}].scatter"),
                    format!("expected a {n}x{n} matrix"),
                ))
            }
        };
        let model = LocationScatterModel::new(DVector::from_column_slice(&e.mean), scatter)
            .map_err(|err| {
                let part = match err {
                    RiskError::NonFinite => "",
                    _ => ".scatter",
                };
                ScenarioError::validation(format!("priors[{i}]{part}"), &err)
            })?;
        models.push(model);
    }
    let weights = entries.iter().map(|e| e.weight).collect();
    PriorSet::new(models, weights).map_err(|e| ScenarioError::validation("priors.weights", &e))
}

fn build_time_grid(spec: Option<&TimeGridSpec>, horizon: f64) -> Result<Vec<f64>, ScenarioError> {
    let field = "preferences.time_grid";
    match spec {
        None => Ok(uniform_grid(DEFAULT_GRID_POINTS, horizon)),
        Some(TimeGridSpec::Uniform { count }) if *count >= 2 => Ok(uniform_grid(*count, horizon)),
        Some(TimeGridSpec::Uniform { .. }) => {
            Err(ScenarioError::validation(field, "uniform grid needs at least 2 points"))
        }
        Some(TimeGridSpec::Points(p)) => {
            if p.is_empty() {
                return Err(ScenarioError::validation(field, "no time points"));
            }
            if p.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t <= horizon)) {
                return Err(ScenarioError::validation(field, "time points must lie in [0, horizon]"));
            }
            if p.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ScenarioError::validation(field, "time points must be increasing"));
            }
            Ok(p.clone())
        }
    }
}

/// `count` points from 0 to `horizon`; the last is exactly `horizon`.
pub fn uniform_grid(count: usize, horizon: f64) -> Vec<f64> {
    let last = (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { horizon } else { horizon * i as f64 / last })
        .collect()
}
