//! Run configuration: one model, one contract, one pricing method.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc_oracle::{ModelConfig, MIN_PATHS};
use crate::models::{Contract, Settlement, SCHEMA_VERSION};
use crate::numeric::GaussHermite;
use crate::pricing_closed::MapKind;
use crate::pricing_series::{TruncationPolicy, DEFAULT_NODES};

fn default_merton_tail_tol() -> f64 {
    1e-12
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

fn default_map() -> MapKind {
    MapKind::Identity
}

/// Inner pricer of the two-asset series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    Kirk,
    #[default]
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Kirk,
    Margrabe,
    Bs,
    MertonSeries {
        #[serde(default = "default_merton_tail_tol")]
        tail_tol: f64,
    },
    LinearReduction {
        a: f64,
        b: f64,
        #[serde(default = "default_map")]
        map: MapKind,
    },
    Series {
        #[serde(default)]
        inner: InnerKind,
        #[serde(default)]
        truncation: TruncationPolicy,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    Mc {
        n_paths: usize,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Kirk => "kirk",
            Method::Margrabe => "margrabe",
            Method::Bs => "bs",
            Method::MertonSeries { .. } => "merton_series",
            Method::LinearReduction { .. } => "linear_reduction",
            Method::Series { .. } => "series",
            Method::Mc { .. } => "mc",
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Method::Mc { .. })
    }
}

fn default_result() -> String {
    "result.json".into()
}

fn default_report() -> String {
    "report.json".into()
}

fn default_paths() -> String {
    "paths".into()
}

/// Output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_result")]
    pub result: String,
    #[serde(default = "default_report")]
    pub report: String,
    /// Stem of path exports; `_electricity` / `_gas` and the extension are appended.
    #[serde(default = "default_paths")]
    pub paths: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            result: default_result(),
            report: default_report(),
            paths: default_paths(),
        }
    }
}

/// Settings for `simulate`. The grid is taken from the contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub model: ModelConfig,
    pub contract: Contract,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

impl RunConfig {
    /// Parses JSON and runs semantic validation.
    pub fn from_json(text: &str) -> Result<Self> {
        let config = parse_run_config(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config {
                path: "schema".into(),
                message: format!("expected {SCHEMA_VERSION:?}, got {:?}", self.schema),
            });
        }
        self.model.validate()?;
        self.contract.validate()?;
        for (field, name) in [
            ("output.result", &self.output.result),
            ("output.report", &self.output.report),
            ("output.paths", &self.output.paths),
        ] {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(Error::invalid(field, "must be a plain file name"));
            }
        }
        if let Some(sim) = &self.simulation {
            if sim.n_paths == 0 {
                return Err(Error::invalid("simulation.n_paths", "must be >= 1"));
            }
        }
        self.validate_method()
    }

    fn validate_method(&self) -> Result<()> {
        let method = &self.method;
        match method {
            Method::Mc { n_paths } => {
                if *n_paths < MIN_PATHS {
                    return Err(Error::invalid("method.n_paths", format!("must be >= {MIN_PATHS}")));
                }
                return Ok(());
            }
            Method::MertonSeries { tail_tol } => {
                if !(*tail_tol > 0.0 && *tail_tol < 1.0) {
                    return Err(Error::invalid("method.tail_tol", "must lie in (0, 1)"));
                }
            }
            Method::Series { truncation, nodes, .. } => {
                truncation.validate().map_err(|e| prefix("method", e))?;
                if *nodes < GaussHermite::MIN_NODES || *nodes > 400 {
                    return Err(Error::invalid("method.nodes", "must lie in [8, 400]"));
                }
            }
            Method::LinearReduction { a, b, .. } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::invalid("method", "a and b must be finite"));
                }
            }
            Method::Kirk | Method::Margrabe | Method::Bs => {}
        }
        let ModelConfig::Merton { electricity, gas, .. } = &self.model else {
            return Err(Error::invalid(
                "model.family",
                format!("method {} needs the merton family; use mc for two_factor", method.name()),
            ));
        };
        if self.contract.settlement != Settlement::DayAhead {
            return Err(Error::invalid(
                "contract.settlement",
                format!("method {} prices spot at tau and needs day_ahead settlement", method.name()),
            ));
        }
        let jump_free = |field: &str, lambda: f64| {
            if lambda != 0.0 {
                Err(Error::invalid(
                    field,
                    format!("method {} ignores jumps; set lambda to 0 or use series", method.name()),
                ))
            } else {
                Ok(())
            }
        };
        match method {
            Method::Kirk => {
                jump_free("model.electricity.lambda", electricity.lambda)?;
                jump_free("model.gas.lambda", gas.lambda)?;
            }
            Method::Margrabe => {
                jump_free("model.electricity.lambda", electricity.lambda)?;
                jump_free("model.gas.lambda", gas.lambda)?;
                if self.contract.cost != 0.0 {
                    return Err(Error::invalid("contract.cost", "margrabe needs cost = 0"));
                }
            }
            Method::Bs => {
                jump_free("model.electricity.lambda", electricity.lambda)?;
                jump_free("model.gas.lambda", gas.lambda)?;
                if gas.sigma != 0.0 {
                    return Err(Error::invalid("model.gas.sigma", "bs treats gas as deterministic; must be 0"));
                }
            }
            Method::MertonSeries { .. } => {
                jump_free("model.gas.lambda", gas.lambda)?;
                if gas.sigma != 0.0 {
                    return Err(Error::invalid(
                        "model.gas.sigma",
                        "merton_series treats gas as deterministic; must be 0",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn prefix(root: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => Error::InvalidParameter {
            name: format!("{root}.{name}"),
            reason,
        },
        other => other,
    }
}

/// Deserializes JSON, reporting the failing field path.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path: if path == "." { "<root>".into() } else { path },
            message: e.inner().to_string(),
        }
    })?;
    Ok(value)
}

fn parse_run_config(text: &str) -> Result<RunConfig> {
    let err = match parse_json::<RunConfig>(text) {
        Ok(c) => return Ok(c),
        Err(e) => e,
    };
    // Tagged sections are buffered by serde, which hides paths below them.
    if let Error::Config { path, .. } = &err {
        if path == "model" || path == "method" {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(text) {
                if let Some(refined) = refine_tagged(path, &value[path.as_str()]) {
                    return Err(refined);
                }
            }
        }
    }
    Err(err)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct LegPair<P> {
    electricity: P,
    gas: P,
    rho: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct NoFields {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct MertonSeriesFields {
    #[serde(default)]
    tail_tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct LinearReductionFields {
    a: f64,
    b: f64,
    #[serde(default)]
    map: Option<MapKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct SeriesFields {
    #[serde(default)]
    inner: Option<InnerKind>,
    #[serde(default)]
    truncation: Option<TruncationPolicy>,
    #[serde(default)]
    nodes: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct McFields {
    n_paths: usize,
}

/// Re-parses a tagged section without its tag to locate the failing field.
fn refine_tagged(section: &str, value: &serde_json::Value) -> Option<Error> {
    let tag_key = if section == "model" { "family" } else { "kind" };
    let mut payload = value.as_object()?.clone();
    let tag = payload.remove(tag_key)?;
    let payload = serde_json::Value::Object(payload);
    fn attempt<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> std::result::Result<(), (String, String)> {
        serde_path_to_error::deserialize::<_, T>(v)
            .map(|_| ())
            .map_err(|e| (e.path().to_string(), e.inner().to_string()))
    }
    let outcome = match (section, tag.as_str()?) {
        ("model", "two_factor") => attempt::<LegPair<crate::models::TwoFactorJumpParams>>(payload),
        ("model", "merton") => attempt::<LegPair<crate::models::MertonParams>>(payload),
        ("method", "kirk" | "margrabe" | "bs") => attempt::<NoFields>(payload),
        ("method", "merton_series") => attempt::<MertonSeriesFields>(payload),
        ("method", "linear_reduction") => attempt::<LinearReductionFields>(payload),
        ("method", "series") => attempt::<SeriesFields>(payload),
        ("method", "mc") => attempt::<McFields>(payload),
        _ => return None,
    };
    let (path, message) = outcome.err()?;
    Some(Error::Config {
        path: if path == "." { section.to_string() } else { format!("{section}.{path}") },
        message,
    })
}
