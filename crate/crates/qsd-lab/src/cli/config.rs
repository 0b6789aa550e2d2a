//! TOML configuration and the initial-measure mini-language.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::func::FuncSpec;
use crate::grid::{Grid, GridParams};
use crate::mc::{Scheme, SimConfig};
use crate::model::{Density, DiffusionSpec};
use crate::renewal::GridMeasure;
use crate::{QsdError, Result};

/// Top-level config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: McConfig,
}

/// `ell` written either as a number or as the string `"inf"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EllSpec {
    Finite(f64),
    Named(String),
}

impl EllSpec {
    pub fn value(&self) -> Result<f64> {
        match self {
            EllSpec::Finite(v) if *v > 0.0 => Ok(*v),
            EllSpec::Finite(v) => Err(QsdError::Config(format!("ell must be positive, got {v}"))),
            EllSpec::Named(s) if s == "inf" || s == "infinity" => Ok(f64::INFINITY),
            EllSpec::Named(s) => Err(QsdError::Config(format!(
                "ell must be a positive number or \"inf\", got {s:?}"
            ))),
        }
    }
}

fn default_ell() -> EllSpec {
    EllSpec::Named("inf".into())
}

fn default_ref_point() -> f64 {
    1.0
}

/// The diffusion, in one of four forms.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiffusionConfig {
    /// `dX = -drift dt + dW` on `(0, inf)`.
    BmWithDrift { drift: f64 },
    /// `dX = -rate X dt + dW` on `(0, inf)`.
    Ou { rate: f64 },
    /// Generator `a f'' + b f'`.
    Coefficients {
        a: FuncSpec,
        b: FuncSpec,
        #[serde(default = "default_ell")]
        ell: EllSpec,
        #[serde(default = "default_ref_point")]
        ref_point: f64,
    },
    /// Speed and scale densities directly.
    Measures {
        m_density: FuncSpec,
        s_density: FuncSpec,
        #[serde(default = "default_ell")]
        ell: EllSpec,
    },
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig::BmWithDrift { drift: 1.0 }
    }
}

impl DiffusionConfig {
    pub fn build(&self) -> Result<DiffusionSpec> {
        match self {
            DiffusionConfig::BmWithDrift { drift } => {
                if !(*drift > 0.0) {
                    return Err(QsdError::Config(format!(
                        "bm-with-drift needs drift > 0, got {drift}"
                    )));
                }
                Ok(DiffusionSpec::bm_with_drift(*drift))
            }
            DiffusionConfig::Ou { rate } => {
                if !(*rate > 0.0) {
                    return Err(QsdError::Config(format!("ou needs rate > 0, got {rate}")));
                }
                Ok(DiffusionSpec::ou(*rate))
            }
            DiffusionConfig::Coefficients { a, b, ell, ref_point } => {
                a.validate()?;
                b.validate()?;
                let (a, b) = (a.clone(), b.clone());
                DiffusionSpec::from_coefficients(
                    ell.value()?,
                    Density::from_spec(a),
                    Density::from_spec(b),
                    *ref_point,
                )
            }
            DiffusionConfig::Measures { m_density, s_density, ell } => {
                m_density.validate()?;
                s_density.validate()?;
                DiffusionSpec::from_measures(
                    ell.value()?,
                    Density::from_spec(m_density.clone()),
                    Density::from_spec(s_density.clone()),
                )
            }
        }
    }

    /// Drift constant when the form has exact hitting-time sampling.
    pub fn exact_drift(&self) -> Option<f64> {
        match self {
            DiffusionConfig::BmWithDrift { drift } => Some(*drift),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Truncation radius; chosen from the speed-measure tail when absent.
    pub radius: Option<f64>,
    #[serde(default = "default_n_cells")]
    pub n_cells: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
}

fn default_n_cells() -> usize {
    2000
}

fn default_grading() -> f64 {
    1.0
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            radius: None,
            n_cells: default_n_cells(),
            grading: default_grading(),
        }
    }
}

impl GridConfig {
    pub fn build(&self, spec: &DiffusionSpec) -> Result<Grid> {
        let radius = match self.radius {
            Some(r) => r,
            None => crate::grid::default_radius(spec)?,
        };
        Grid::build(
            spec,
            &GridParams::new(radius, self.n_cells).with_grading(self.grading),
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// `"euler"` or `"exact"` (the latter only for `bm-with-drift`).
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_bridge")]
    pub bridge: bool,
}

fn default_h() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    1e3
}
fn default_n_paths() -> usize {
    10_000
}
fn default_seed() -> u64 {
    1
}
fn default_scheme() -> String {
    "euler".into()
}
fn default_bridge() -> bool {
    true
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            h: default_h(),
            horizon: default_horizon(),
            n_paths: default_n_paths(),
            seed: default_seed(),
            scheme: default_scheme(),
            bridge: default_bridge(),
        }
    }
}

impl McConfig {
    pub fn build(&self, diffusion: &DiffusionConfig) -> Result<SimConfig> {
        let scheme = match self.scheme.as_str() {
            "euler" => Scheme::EulerMaruyama,
            "exact" => match diffusion.exact_drift() {
                Some(c) => Scheme::ExactBmDrift { c },
                None => {
                    return Err(QsdError::Config(
                        "scheme = \"exact\" needs form = \"bm-with-drift\"".into(),
                    ))
                }
            },
            other => {
                return Err(QsdError::Config(format!(
                    "unknown scheme {other:?}; use \"euler\" or \"exact\""
                )))
            }
        };
        Ok(SimConfig {
            h: self.h,
            horizon: self.horizon,
            n_paths: self.n_paths,
            seed: self.seed,
            scheme,
            bridge: self.bridge,
        })
    }
}

/// Parse a config file and return it with the SHA-256 of its canonical
/// (re-serialized) form; the hash is stable under comment and whitespace
/// edits.
pub fn load(path: &Path) -> Result<(Config, String)> {
    let text = std::fs::read_to_string(path)?;
    let cfg: Config =
        toml::from_str(&text).map_err(|e| QsdError::Config(format!("{}: {e}", path.display())))?;
    let hash = config_hash(&cfg)?;
    Ok((cfg, hash))
}

pub fn config_hash(cfg: &Config) -> Result<String> {
    let canonical =
        toml::to_string(cfg).map_err(|e| QsdError::Config(format!("serialize: {e}")))?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(format!("{digest:x}"))
}

/// Parse an initial-measure description:
///
/// * `dirac x=1`
/// * `qsd lambda=0.2`
/// * `uniform`
/// * `density table=FILE` (two whitespace-separated columns `x g(x)`,
///   interpreted as a density with respect to the speed measure)
/// * `mixture [0.5 qsd lambda=0.2, 0.5 qsd lambda=0.5]`
pub fn parse_measure(grid: &Grid, text: &str) -> Result<GridMeasure> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix("mixture") {
        let rest = rest.trim();
        let inner = rest
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| {
                QsdError::Config("mixture parts must be bracketed: mixture [ ... ]".into())
            })?;
        let mut parts = vec![];
        for chunk in inner.split(',') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            let (w, spec) = chunk.split_once(char::is_whitespace).ok_or_else(|| {
                QsdError::Config(format!("mixture part {chunk:?} needs a weight and a measure"))
            })?;
            let w: f64 = w
                .parse()
                .map_err(|_| QsdError::Config(format!("bad mixture weight {w:?}")))?;
            parts.push((w, parse_simple_measure(grid, spec.trim())?));
        }
        if parts.is_empty() {
            return Err(QsdError::Config("empty mixture".into()));
        }
        GridMeasure::mixture(grid, &parts)
    } else {
        parse_simple_measure(grid, text)
    }
}

fn parse_simple_measure(grid: &Grid, text: &str) -> Result<GridMeasure> {
    let mut tokens = text.split_whitespace();
    let head = tokens
        .next()
        .ok_or_else(|| QsdError::Config("empty measure description".into()))?;
    let args: Vec<(&str, &str)> = tokens
        .map(|t| {
            t.split_once('=')
                .ok_or_else(|| QsdError::Config(format!("expected key=value, got {t:?}")))
        })
        .collect::<Result<_>>()?;
    let get = |key: &str| -> Result<&str> {
        args.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| QsdError::Config(format!("{head} needs {key}=...")))
    };
    let get_f64 = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| QsdError::Config(format!("bad number for {key}")))
    };
    match head {
        "dirac" => GridMeasure::dirac(grid, get_f64("x")?),
        "qsd" => GridMeasure::qsd(grid, get_f64("lambda")?),
        "uniform" => GridMeasure::uniform_in_m(grid),
        "density" => {
            let table = load_table(Path::new(get("table")?))?;
            let spec = FuncSpec::Tabulated { xs: table.0, ys: table.1 };
            spec.validate()?;
            let density = Arc::new(spec);
            let g = grid.node_function(move |x| density.eval(x));
            GridMeasure::from_node_density(grid, &g)
        }
        other => Err(QsdError::Config(format!(
            "unknown measure {other:?}; use dirac, qsd, uniform, density or mixture"
        ))),
    }
}

fn load_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut xs = vec![];
    let mut ys = vec![];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let bad = || {
            QsdError::Config(format!(
                "{}:{}: expected two columns `x g(x)`",
                path.display(),
                lineno + 1
            ))
        };
        let x: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let y: f64 = cols.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        xs.push(x);
        ys.push(y);
    }
    Ok((xs, ys))
}
