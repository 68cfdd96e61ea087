//! JSON job configuration.
//!
//! Expression entries are strings (or bare numbers) in the variables
//! `x1..xm`. Every grid is validated against `(n, m)` and every expression
//! parsed at load time; errors name the JSON path, e.g. `$.a[1][0]`.

use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::exprlang::{CoefficientField, ParseError};
use crate::hypocheck::CheckOptions;
use crate::krylov::SolverConfig;
use crate::sampling::BoxDomain;
use crate::sysmodel::{
    product_family_build, AnisotropicSpec, HWeights, IsotropicSpec, LowerOrderData, ModelError, SystemSpec,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {source}")]
    Expression { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Model { path: String, source: ModelError },
}

impl ConfigError {
    /// The JSON path the error refers to, when there is one.
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { path, .. } | ConfigError::Expression { path, .. } | ConfigError::Model { path, .. } => {
                Some(path)
            }
            _ => None,
        }
    }
}

fn schema(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema { path: path.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfigKind {
    Isotropic,
    Anisotropic,
    Example6,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSection {
    min: Vec<f64>,
    max: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshSection {
    cells: Vec<usize>,
    #[serde(default = "default_quad_order")]
    quad_order: usize,
}

fn default_quad_order() -> usize {
    2
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    tol: Option<f64>,
    maxit: Option<usize>,
    dense_limit: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChecksSection {
    margin: Option<f64>,
    sample_grid: Option<usize>,
    fd_step: Option<f64>,
    w1inf_cap: Option<f64>,
    quad_order: Option<usize>,
}

const TOP_KEYS: [&str; 21] = [
    "kind", "n", "m", "domain", "a", "a_pq", "b", "G", "h", "f_pq", "C", "D", "f", "g", "theta", "nu", "mesh",
    "solver", "checks", "audit", "name",
];

pub const DEFAULT_LEVELS: [usize; 3] = [8, 16, 32];

/// A validated job: the system plus every numerical knob.
#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub name: Option<String>,
    pub kind: ConfigKind,
    pub spec: SystemSpec,
    pub cells: Vec<usize>,
    pub quad_order: usize,
    pub solver: SolverConfig,
    pub checks: CheckOptions,
    pub levels: Vec<usize>,
    pub exact: Option<Vec<CoefficientField>>,
}

impl JobConfig {
    pub fn with_margin(mut self, margin: f64) -> Self {
        self.checks.margin = margin;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Result<Self, ModelError> {
        let lower = self.spec.lower().clone().with_nu(nu)?;
        self.spec = self.spec.with_lower(lower)?;
        Ok(self)
    }

    pub fn with_levels(mut self, levels: Vec<usize>) -> Self {
        self.levels = levels;
        self
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<JobConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<JobConfig, ConfigError> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| ConfigError::Json { line: e.line(), column: e.column(), message: e.to_string() })?;
    let obj = root.as_object().ok_or_else(|| schema("$", "expected an object"))?;
    for key in obj.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            return Err(schema(&format!("$.{key}"), "unknown field"));
        }
    }
    Reader { obj }.job()
}

struct Reader<'a> {
    obj: &'a Map<String, Value>,
}

fn typed<T: for<'de> Deserialize<'de>>(v: &Value, path: &str) -> Result<T, ConfigError> {
    T::deserialize(v).map_err(|e| schema(path, e.to_string()))
}

fn field(v: &Value, path: &str, m: usize) -> Result<CoefficientField, ConfigError> {
    let src = match v {
        Value::String(s) => s.clone(),
        Value::Number(num) => num.to_string(),
        _ => return Err(schema(path, "expected an expression string or a number")),
    };
    CoefficientField::parse(&src, m).map_err(|source| ConfigError::Expression { path: path.to_string(), source })
}

fn array<'v>(v: &'v Value, path: &str, len: usize) -> Result<&'v [Value], ConfigError> {
    let arr = v.as_array().ok_or_else(|| schema(path, format!("expected an array of {len} entries")))?;
    if arr.len() != len {
        return Err(schema(path, format!("expected {len} entries, found {}", arr.len())));
    }
    Ok(arr)
}

fn vector(v: &Value, path: &str, len: usize, m: usize) -> Result<Vec<CoefficientField>, ConfigError> {
    array(v, path, len)?.iter().enumerate().map(|(i, e)| field(e, &format!("{path}[{i}]"), m)).collect()
}

fn matrix(v: &Value, path: &str, rows: usize, cols: usize, m: usize) -> Result<Vec<Vec<CoefficientField>>, ConfigError> {
    array(v, path, rows)?.iter().enumerate().map(|(i, r)| vector(r, &format!("{path}[{i}]"), cols, m)).collect()
}

fn model(path: &str) -> impl Fn(ModelError) -> ConfigError + '_ {
    move |source| ConfigError::Model { path: path.to_string(), source }
}

impl Reader<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.obj.get(key)
    }

    fn require(&self, key: &str) -> Result<&Value, ConfigError> {
        self.get(key).ok_or_else(|| schema(&format!("$.{key}"), "missing required field"))
    }

    fn forbid(&self, key: &str, kind: &str) -> Result<(), ConfigError> {
        match self.get(key) {
            Some(_) => Err(schema(&format!("$.{key}"), format!("not allowed for kind \"{kind}\""))),
            None => Ok(()),
        }
    }

    fn job(&self) -> Result<JobConfig, ConfigError> {
        let kind: ConfigKind = typed(self.require("kind")?, "$.kind")?;
        let n: usize = typed(self.require("n")?, "$.n")?;
        let m: usize = typed(self.require("m")?, "$.m")?;
        if n == 0 {
            return Err(schema("$.n", "must be at least 1"));
        }
        if !(1..=3).contains(&m) {
            return Err(schema("$.m", "must be 1, 2 or 3"));
        }
        let name = self.get("name").map(|v| typed::<String>(v, "$.name")).transpose()?;
        let domain = self.domain(m)?;
        let lower = self.lower(n, m)?;
        let spec = self.principal(kind, n, m, lower, domain)?;

        let (cells, quad_order) = match self.get("mesh") {
            Some(v) => {
                let mesh: MeshSection = typed(v, "$.mesh")?;
                if mesh.cells.len() != m {
                    return Err(schema("$.mesh.cells", format!("expected {m} entries, found {}", mesh.cells.len())));
                }
                if mesh.cells.iter().any(|&c| c == 0) {
                    return Err(schema("$.mesh.cells", "cell counts must be positive"));
                }
                if mesh.quad_order == 0 {
                    return Err(schema("$.mesh.quad_order", "must be positive"));
                }
                (mesh.cells, mesh.quad_order)
            }
            None => (vec![16; m], default_quad_order()),
        };

        let s: SolverSection = self.get("solver").map(|v| typed(v, "$.solver")).transpose()?.unwrap_or_default();
        let mut solver = SolverConfig::default();
        if let Some(tol) = s.tol {
            if !(tol > 0.0) {
                return Err(schema("$.solver.tol", "must be positive"));
            }
            solver.tol = tol;
        }
        solver.maxit = s.maxit.or(solver.maxit);
        solver.dense_limit = s.dense_limit.unwrap_or(solver.dense_limit);

        let c: ChecksSection = self.get("checks").map(|v| typed(v, "$.checks")).transpose()?.unwrap_or_default();
        let mut checks = CheckOptions::default();
        checks.margin = c.margin.unwrap_or(checks.margin);
        checks.sample_grid = c.sample_grid.unwrap_or(checks.sample_grid);
        checks.fd_step = c.fd_step.or(checks.fd_step);
        checks.w1inf_cap = c.w1inf_cap.unwrap_or(checks.w1inf_cap);
        checks.quad_order = c.quad_order.unwrap_or(checks.quad_order);
        if checks.sample_grid < 2 {
            return Err(schema("$.checks.sample_grid", "must be at least 2"));
        }
        if matches!(checks.fd_step, Some(h) if !(h > 0.0)) {
            return Err(schema("$.checks.fd_step", "must be positive"));
        }

        let (levels, exact) = self.audit(n, m)?;
        Ok(JobConfig { name, kind, spec, cells, quad_order, solver, checks, levels, exact })
    }

    fn domain(&self, m: usize) -> Result<BoxDomain, ConfigError> {
        let Some(v) = self.get("domain") else {
            return BoxDomain::unit(m).map_err(|e| schema("$.domain", e.to_string()));
        };
        let d: DomainSection = typed(v, "$.domain")?;
        if d.min.len() != m || d.max.len() != m {
            return Err(schema("$.domain", format!("min and max need {m} entries")));
        }
        BoxDomain::new(d.min, d.max).map_err(|e| schema("$.domain", e.to_string()))
    }

    fn lower(&self, n: usize, m: usize) -> Result<LowerOrderData, ConfigError> {
        let zero = CoefficientField::constant(0.0, m);
        let c = match self.get("C") {
            Some(v) => array(v, "$.C", n)?
                .iter()
                .enumerate()
                .map(|(i, row)| matrix(row, &format!("$.C[{i}]"), n, m, m))
                .collect::<Result<_, _>>()?,
            None => vec![vec![vec![zero.clone(); m]; n]; n],
        };
        let d = match self.get("D") {
            Some(v) => matrix(v, "$.D", n, n, m)?,
            None => vec![vec![zero.clone(); n]; n],
        };
        let f = self.get("f").map(|v| vector(v, "$.f", n, m)).transpose()?.unwrap_or_else(|| vec![zero.clone(); n]);
        let g = self.get("g").map(|v| vector(v, "$.g", n, m)).transpose()?.unwrap_or_else(|| vec![zero.clone(); n]);
        let theta = self.get("theta").map(|v| typed::<f64>(v, "$.theta")).transpose()?.unwrap_or(2.0 * m as f64);
        let nu = self.get("nu").map(|v| typed::<f64>(v, "$.nu")).transpose()?.unwrap_or(1.0);
        let path = match (self.get("theta"), self.get("nu")) {
            (Some(_), _) => "$.theta",
            (None, Some(_)) => "$.nu",
            _ => "$",
        };
        LowerOrderData::new(n, m, c, d, f, g, theta, nu).map_err(model(path))
    }

    fn principal(
        &self,
        kind: ConfigKind,
        n: usize,
        m: usize,
        lower: LowerOrderData,
        domain: BoxDomain,
    ) -> Result<SystemSpec, ConfigError> {
        match kind {
            ConfigKind::Isotropic => {
                for key in ["a_pq", "b", "G", "h", "f_pq"] {
                    self.forbid(key, "isotropic")?;
                }
                let a = matrix(self.require("a")?, "$.a", n, n, m)?;
                Ok(IsotropicSpec::new(a, lower, domain).map_err(model("$.a"))?.into())
            }
            ConfigKind::Anisotropic => {
                for key in ["a", "b", "G"] {
                    self.forbid(key, "anisotropic")?;
                }
                let raw = array(self.require("a_pq")?, "$.a_pq", n)?;
                let mut grid = Vec::with_capacity(n);
                for (i, row) in raw.iter().enumerate() {
                    let cols = array(row, &format!("$.a_pq[{i}]"), n)?;
                    grid.push(
                        cols.iter()
                            .enumerate()
                            .map(|(j, blk)| matrix(blk, &format!("$.a_pq[{i}][{j}]"), m, m, m))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                let mut spec = AnisotropicSpec::from_full_grid(grid, lower, domain).map_err(model("$.a_pq"))?;
                match (self.get("h"), self.get("f_pq")) {
                    (Some(h), Some(f)) => {
                        let h = matrix(h, "$.h", n, n, m)?;
                        let f = matrix(f, "$.f_pq", m, m, m)?;
                        let weights = HWeights::new(h, f).map_err(model("$.h"))?;
                        spec = spec.with_weights(weights).map_err(model("$.h"))?;
                    }
                    (Some(_), None) => return Err(schema("$.f_pq", "required when h is given")),
                    (None, Some(_)) => return Err(schema("$.h", "required when f_pq is given")),
                    (None, None) => {}
                }
                Ok(spec.into())
            }
            ConfigKind::Example6 => {
                for key in ["a", "a_pq", "h", "f_pq"] {
                    self.forbid(key, "example6")?;
                }
                let b = matrix(self.require("b")?, "$.b", n, n, m)?;
                let g = matrix(self.require("G")?, "$.G", m, m, m)?;
                Ok(product_family_build(b, g, lower, domain).map_err(model("$.G"))?.into())
            }
        }
    }

    fn audit(&self, n: usize, m: usize) -> Result<(Vec<usize>, Option<Vec<CoefficientField>>), ConfigError> {
        let Some(v) = self.get("audit") else {
            return Ok((DEFAULT_LEVELS.to_vec(), None));
        };
        let obj = v.as_object().ok_or_else(|| schema("$.audit", "expected an object"))?;
        for key in obj.keys() {
            if key != "levels" && key != "exact" {
                return Err(schema(&format!("$.audit.{key}"), "unknown field"));
            }
        }
        let levels = match obj.get("levels") {
            Some(l) => typed::<Vec<usize>>(l, "$.audit.levels")?,
            None => DEFAULT_LEVELS.to_vec(),
        };
        validate_levels(&levels).map_err(|msg| schema("$.audit.levels", msg))?;
        let exact = obj.get("exact").map(|e| vector(e, "$.audit.exact", n, m)).transpose()?;
        Ok((levels, exact))
    }
}

/// Levels must be at least two strictly increasing positive cell counts.
pub fn validate_levels(levels: &[usize]) -> Result<(), String> {
    if levels.len() < 2 {
        return Err("at least two levels are required".into());
    }
    if levels[0] == 0 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err("levels must be positive and strictly increasing".into());
    }
    Ok(())
}
