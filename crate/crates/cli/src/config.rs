//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fpmeasure::expr::Expression;
use fpmeasure::grid::{BoundaryKind, Grid};
use fpmeasure::levelset::{rho_grid, Spacing};
use fpmeasure::problem::{CompactFunction, ProblemSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: usize,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub boundary: Vec<BoundaryKind>,
    /// Rows of the diffusion matrix `a`.
    pub diffusion: Vec<Vec<String>>,
    pub drift: Vec<String>,
    #[serde(default)]
    pub exact_density: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactConfig {
    pub u: String,
    #[serde(default)]
    pub rho_m: Option<f64>,
    #[serde(default)]
    pub rho_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis.
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsConfig {
    pub rho_min: f64,
    pub rho_max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Linear
}

/// One level or several.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Levels {
    One(f64),
    Many(Vec<f64>),
}

impl Levels {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Levels::One(r) => vec![*r],
            Levels::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    Identity,
    Cutoff { rho_m: f64, rho_0: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", deny_unknown_fields)]
pub enum CheckConfig {
    #[serde(rename = "identity")]
    Identity {
        #[serde(default)]
        phi: Option<PhiConfig>,
        #[serde(default)]
        rho: Option<Levels>,
    },
    #[serde(rename = "derivative")]
    Derivative {},
    Aa {
        rho_0: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Ab {
        #[serde(default)]
        rho: Option<Levels>,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Ac {
        rho_0: f64,
        #[serde(default)]
        rho_cap: Option<f64>,
    },
    Ba {
        rho_0: f64,
        #[serde(default)]
        rho: Option<Levels>,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Bb {
        rho_0: f64,
        #[serde(default)]
        rho: Option<Levels>,
    },
}

impl CheckConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CheckConfig::Identity { .. } => "identity",
            CheckConfig::Derivative {} => "derivative",
            CheckConfig::Aa { .. } => "Aa",
            CheckConfig::Ab { .. } => "Ab",
            CheckConfig::Ac { .. } => "Ac",
            CheckConfig::Ba { .. } => "Ba",
            CheckConfig::Bb { .. } => "Bb",
        }
    }

    pub fn is_bound(&self) -> bool {
        !matches!(self, CheckConfig::Identity { .. } | CheckConfig::Derivative {})
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_eps_disc")]
    pub eps_disc: f64,
    #[serde(default = "default_regular_tol")]
    pub regular_tol: f64,
    /// Largest accepted relative identity residual.
    #[serde(default = "default_identity_tol")]
    pub identity: f64,
    /// Largest accepted relative gap between `y'` and differences of `y`.
    #[serde(default = "default_derivative_tol")]
    pub derivative: f64,
}

fn default_eps_disc() -> f64 {
    fpmeasure::bounds::DEFAULT_EPS_DISC
}
fn default_regular_tol() -> f64 {
    fpmeasure::levelset::REGULAR_TOL
}
fn default_identity_tol() -> f64 {
    2e-3
}
fn default_derivative_tol() -> f64 {
    2e-2
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_disc: default_eps_disc(),
            regular_tol: default_regular_tol(),
            identity: default_identity_tol(),
            derivative: default_derivative_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: None,
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensitySource {
    /// Discretize and solve the stationary equation.
    #[default]
    Solve,
    /// Evaluate `problem.exact_density` on the grid.
    Exact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub problem: ProblemConfig,
    pub compact_function: CompactConfig,
    pub grid: GridConfig,
    pub levels: LevelsConfig,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub density_source: DensitySource,
}

/// A config with every expression parsed and every cross-field rule checked.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub problem: ProblemSpec,
    pub grid: Grid,
    pub u: CompactFunction,
    pub levels: Vec<f64>,
}

fn config_err(pointer: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => s.push_str(&format!("/{index}")),
            Segment::Map { key } => s.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => s.push_str(&format!("/{variant}")),
            Segment::Unknown => s.push_str("/?"),
        }
    }
    s
}

/// Parses a config document; schema errors carry the JSON pointer of the
/// offending value.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = pointer_of(e.path());
        let message = e.inner().to_string();
        if let Some(rest) = message.strip_prefix("missing field `") {
            if let Some(field) = rest.split('`').next() {
                pointer.push('/');
                pointer.push_str(field);
            }
        }
        config_err(if pointer.is_empty() { "/" } else { &pointer }, message)
    })?;
    validate(raw)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err("/", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn parse_expr(src: &str, dim: usize, pointer: &str) -> Result<Expression, CliError> {
    Expression::parse(src, dim).map_err(|e| config_err(pointer, e.to_string()))
}

fn validate(raw: RawConfig) -> Result<RunConfig, CliError> {
    let pc = &raw.problem;
    let n = pc.dimension;
    if n != 1 && n != 2 {
        return Err(config_err("/problem/dimension", format!("dimension must be 1 or 2, got {n}")));
    }
    let lens = [
        ("/problem/box", pc.bounds.len()),
        ("/problem/boundary", pc.boundary.len()),
        ("/problem/diffusion", pc.diffusion.len()),
        ("/problem/drift", pc.drift.len()),
        ("/grid/n", raw.grid.n.len()),
    ];
    for (ptr, len) in lens {
        if len != n {
            return Err(config_err(ptr, format!("expected {n} entries, got {len}")));
        }
    }
    let mut a = Vec::with_capacity(n);
    for (i, row) in pc.diffusion.iter().enumerate() {
        if row.len() != n {
            return Err(config_err(
                &format!("/problem/diffusion/{i}"),
                format!("expected {n} entries, got {}", row.len()),
            ));
        }
        let parsed = row
            .iter()
            .enumerate()
            .map(|(j, s)| parse_expr(s, n, &format!("/problem/diffusion/{i}/{j}")))
            .collect::<Result<Vec<_>, _>>()?;
        a.push(parsed);
    }
    let v = pc
        .drift
        .iter()
        .enumerate()
        .map(|(i, s)| parse_expr(s, n, &format!("/problem/drift/{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut problem = ProblemSpec::new(pc.bounds.clone(), pc.boundary.clone(), a, v)
        .map_err(|e| config_err("/problem", e.to_string()))?;
    if let Some(src) = &pc.exact_density {
        let e = parse_expr(src, n, "/problem/exact_density")?;
        problem = problem
            .with_exact_density(e)
            .map_err(|e| config_err("/problem/exact_density", e.to_string()))?;
    }
    if raw.density_source == DensitySource::Exact && pc.exact_density.is_none() {
        return Err(config_err(
            "/problem/exact_density",
            "density_source \"exact\" needs problem.exact_density",
        ));
    }
    let grid = problem
        .grid(&raw.grid.n)
        .map_err(|e| config_err("/grid/n", e.to_string()))?;

    let cc = &raw.compact_function;
    if cc.rho_m.is_none() {
        if let Some(c) = raw.checks.iter().find(|c| c.is_bound()) {
            return Err(config_err(
                "/compact_function/rho_m",
                format!("missing, required by check {}", c.name()),
            ));
        }
    }
    let rho_m = cc.rho_m.unwrap_or(raw.levels.rho_min.max(0.0));
    let expr = parse_expr(&cc.u, n, "/compact_function/u")?;
    let mut u = CompactFunction::new(expr, rho_m, cc.rho_max)
        .map_err(|e| config_err("/compact_function", e.to_string()))?;
    u.resolve_rho_max(&problem, &grid)
        .map_err(|e| config_err("/compact_function", e.to_string()))?;
    u.validate_on_grid(&problem, &grid)
        .map_err(|e| config_err("/compact_function/u", e.to_string()))?;

    let lv = &raw.levels;
    if raw.checks.iter().any(|c| matches!(c, CheckConfig::Derivative {})) && lv.count < 3 {
        return Err(config_err("/levels/count", "derivative checks need at least 3 levels"));
    }
    let levels = rho_grid(lv.rho_min, lv.rho_max, lv.count, lv.spacing)
        .map_err(|e| config_err("/levels", e.to_string()))?;
    if lv.rho_min < rho_m {
        return Err(config_err(
            "/levels/rho_min",
            format!("levels start at {} below rho_m = {rho_m}", lv.rho_min),
        ));
    }
    if let Some(m) = u.rho_max() {
        if lv.rho_max > m {
            return Err(config_err(
                "/levels/rho_max",
                format!("levels end at {} above rho_M = {m}", lv.rho_max),
            ));
        }
    }
    let t = &raw.tolerances;
    for (ptr, v) in [
        ("/tolerances/eps_disc", t.eps_disc),
        ("/tolerances/regular_tol", t.regular_tol),
        ("/tolerances/identity", t.identity),
        ("/tolerances/derivative", t.derivative),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(config_err(ptr, format!("must be a nonnegative number, got {v}")));
        }
    }
    for (i, c) in raw.checks.iter().enumerate() {
        let gamma = match c {
            CheckConfig::Aa { gamma, .. } | CheckConfig::Ab { gamma, .. } | CheckConfig::Ba { gamma, .. } => *gamma,
            _ => None,
        };
        if let Some(g) = gamma {
            if !(g > 0.0) {
                return Err(config_err(&format!("/checks/{i}/gamma"), format!("gamma must be positive, got {g}")));
            }
        }
        if let CheckConfig::Identity {
            phi: Some(PhiConfig::Cutoff { rho_m, rho_0 }),
            ..
        } = c
        {
            if !(rho_0 > rho_m) {
                return Err(config_err(&format!("/checks/{i}/phi"), "cutoff needs rho_m < rho_0"));
            }
        }
    }
    Ok(RunConfig {
        raw,
        problem,
        grid,
        u,
        levels,
    })
}
