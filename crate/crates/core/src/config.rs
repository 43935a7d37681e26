//! Experiment configuration: TOML with quoted expression strings in t and x.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expr, Expr, ParseError};
use crate::geom::{chi_profile, ChiProfile, Metric1p1};
use crate::grid::{DerivMode, Grid, GridError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{field}: {source} in `{text}`")]
    Expr {
        field: String,
        text: String,
        source: ParseError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Dirac,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    #[serde(default = "one")]
    pub beta: String,
    #[serde(default = "one")]
    pub a: String,
}

fn one() -> String {
    "1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    /// Explicit step count; derived from `cfl` when absent.
    pub nt: Option<usize>,
    pub t0: f64,
    pub t1: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub deriv: DerivSpec,
}

fn default_cfl() -> f64 {
    0.4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivSpec {
    #[default]
    Spectral,
    Fd4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiSpec {
    pub t_minus: f64,
    pub t_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoSpec {
    /// rho = sqrt(a0 / a1).
    #[default]
    Volumes,
    /// rho = 1.
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "t_symbol")]
    pub symbol: f64,
    #[serde(default = "t_5")]
    pub residual: f64,
    #[serde(default = "t_5")]
    pub green: f64,
    #[serde(default = "t_6")]
    pub leakage: f64,
    #[serde(default = "t_5")]
    pub intertwining: f64,
    #[serde(default = "t_5")]
    pub roundtrip: f64,
    #[serde(default = "t_5")]
    pub conservation: f64,
    #[serde(default = "t_6")]
    pub drift: f64,
    #[serde(default = "t_5")]
    pub commutator: f64,
    #[serde(default = "t_pos")]
    pub positivity: f64,
    #[serde(default = "t_slope")]
    pub slope: f64,
}

fn t_symbol() -> f64 {
    1e-10
}
fn t_5() -> f64 {
    1e-5
}
fn t_6() -> f64 {
    1e-6
}
fn t_pos() -> f64 {
    -1e-8
}
fn t_slope() -> f64 {
    -2.0
}

impl Default for Tolerances {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    #[serde(default = "ten")]
    pub count: usize,
    #[serde(default = "seed")]
    pub seed: u64,
    /// Highest Fourier mode in random Cauchy data.
    #[serde(default = "kdata")]
    pub kmax: usize,
}

fn ten() -> usize {
    10
}
fn seed() -> u64 {
    1
}
fn kdata() -> usize {
    4
}

impl Default for SampleSpec {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    #[serde(rename = "k", default = "kstate")]
    pub k_max: usize,
    #[serde(default)]
    pub t_ref: f64,
}

fn kstate() -> usize {
    64
}

impl Default for StateSpec {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub field: FieldKind,
    pub g0: MetricSpec,
    pub g1: MetricSpec,
    /// Potential V(t, x); defaults to mass^2.
    pub potential: Option<String>,
    #[serde(default = "unit")]
    pub mass: f64,
    pub grid: GridSpec,
    pub chi: ChiSpec,
    #[serde(default)]
    pub rho: RhoSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub samples: SampleSpec,
    #[serde(default)]
    pub state: StateSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "out_dir")]
    pub dir: String,
}

fn out_dir() -> String {
    "out".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: out_dir() }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub no_rho: bool,
    pub fd4: bool,
    pub cfl: Option<f64>,
}

/// Parsed and validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub g0: Metric1p1,
    pub g1: Metric1p1,
    pub potential: Expr,
    pub grid: Grid,
    pub cfl: f64,
    pub deriv: DerivMode,
    pub chi: ChiProfile,
}

fn expr_field(field: &str, text: &str) -> Result<Expr, ConfigError> {
    parse_expr(text).map_err(|source| ConfigError::Expr {
        field: field.into(),
        text: text.into(),
        source,
    })
}

fn metric(label: &str, spec: &MetricSpec) -> Result<Metric1p1, ConfigError> {
    Ok(Metric1p1::new(
        label,
        expr_field(&format!("{label}.beta"), &spec.beta)?,
        expr_field(&format!("{label}.a"), &spec.a)?,
    ))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ExperimentConfig::from_toml(&text)
    }

    /// Validates orderings and builds the numerical objects.
    pub fn build(&self, ov: Overrides) -> Result<Experiment, ConfigError> {
        let mut config = self.clone();
        if ov.no_rho {
            config.rho = RhoSpec::One;
        }
        if ov.fd4 {
            config.grid.deriv = DerivSpec::Fd4;
        }
        if let Some(c) = ov.cfl {
            config.grid.cfl = c;
            config.grid.nt = None;
        }
        let gs = &config.grid;
        if !(gs.nx >= 8 && gs.nx.is_power_of_two()) {
            return Err(ConfigError::Invalid(format!("grid.nx must be a power of two >= 8, got {}", gs.nx)));
        }
        if !(gs.t0 < config.chi.t_minus) {
            return Err(ConfigError::Invalid(format!("need t0 < t_minus (t0={}, t_minus={})", gs.t0, config.chi.t_minus)));
        }
        if !(config.chi.t_minus < config.chi.t_plus) {
            return Err(ConfigError::Invalid(format!(
                "need t_minus < t_plus (t_minus={}, t_plus={})",
                config.chi.t_minus, config.chi.t_plus
            )));
        }
        if !(config.chi.t_plus < gs.t1) {
            return Err(ConfigError::Invalid(format!("need t_plus < t1 (t_plus={}, t1={})", config.chi.t_plus, gs.t1)));
        }
        let margin = crate::moller::CHI_MARGIN * (gs.t1 - gs.t0);
        if config.chi.t_minus - gs.t0 < margin || gs.t1 - config.chi.t_plus < margin {
            return Err(ConfigError::Invalid(format!(
                "chi window [{}, {}] must keep margins of at least {margin} (10% of the window) from [{}, {}]",
                config.chi.t_minus, config.chi.t_plus, gs.t0, gs.t1
            )));
        }
        if !(gs.cfl > 0.0 && gs.cfl <= 1.0) {
            return Err(ConfigError::Invalid(format!("grid.cfl must lie in (0, 1], got {}", gs.cfl)));
        }
        if !(config.state.t_ref >= gs.t0 && config.state.t_ref <= gs.t1) {
            return Err(ConfigError::Invalid(format!("state.t_ref={} lies outside [{}, {}]", config.state.t_ref, gs.t0, gs.t1)));
        }
        if config.samples.count == 0 {
            return Err(ConfigError::Invalid("samples.count must be positive".into()));
        }
        let g0 = metric("g0", &config.g0)?;
        let g1 = metric("g1", &config.g1)?;
        let potential = match &config.potential {
            Some(p) => expr_field("potential", p)?,
            None => Expr::constant(config.mass * config.mass),
        };
        let probe = Grid::new(gs.nx, 64, gs.t0, gs.t1)?;
        for g in [&g0, &g1] {
            g.validate(&probe).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let v_max = g0.max_speed(&probe).max(g1.max_speed(&probe));
        let grid = match gs.nt {
            Some(nt) => {
                let g = Grid::new(gs.nx, nt, gs.t0, gs.t1)?;
                g.check_cfl(gs.cfl, v_max)?;
                g
            }
            None => Grid::with_cfl(gs.nx, gs.t0, gs.t1, gs.cfl, v_max)?,
        };
        if grid.nt < 8 {
            return Err(ConfigError::Invalid(format!("need at least 8 time steps, have {}", grid.nt)));
        }
        let deriv = match gs.deriv {
            DerivSpec::Spectral => DerivMode::Spectral,
            DerivSpec::Fd4 => DerivMode::Fd4,
        };
        let chi = chi_profile(config.chi.t_minus, config.chi.t_plus).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let cfl = gs.cfl;
        Ok(Experiment {
            config,
            g0,
            g1,
            potential,
            grid,
            cfl,
            deriv,
            chi,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
field = "dirac"
[g0]
a = "1"
[g1]
beta = "1"
a = "(1 + 0.2*sin(x)*exp(-t^2))/1.2"
[grid]
nx = 32
t0 = -2.0
t1 = 2.0
[chi]
t_minus = -1.0
t_plus = 1.0
"#;

    #[test]
    fn defaults_and_derived_grid() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(c.tolerances.intertwining, 1e-5);
        assert_eq!(c.samples.count, 10);
        let e = c.build(Overrides::default()).unwrap();
        assert!(e.grid.dt() <= 0.4 * e.grid.dx() / 1.2 * (1.0 + 1e-12));
        assert_eq!(e.deriv, DerivMode::Spectral);
        let e = c.build(Overrides { no_rho: true, fd4: true, cfl: Some(0.2) }).unwrap();
        assert_eq!(e.config.rho, RhoSpec::One);
        assert_eq!(e.deriv, DerivMode::Fd4);
        assert_eq!(e.cfl, 0.2);
    }

    #[test]
    fn ordering_violations() {
        let cases = [
            ("t_minus = -1.0", "t_minus = -2.5", "t0 < t_minus"),
            ("t_plus = 1.0", "t_plus = -1.5", "t_minus < t_plus"),
            ("t_plus = 1.0", "t_plus = 2.5", "t_plus < t1"),
            ("t_minus = -1.0", "t_minus = -1.9", "10% of the window"),
            ("nx = 32", "nx = 48", "power of two"),
        ];
        for (from, to, msg) in cases {
            let c = ExperimentConfig::from_toml(&BASE.replace(from, to)).unwrap();
            let err = c.build(Overrides::default()).unwrap_err().to_string();
            assert!(err.contains(msg), "{err}");
        }
        let bad = BASE.replace("a = \"1\"", "a = \"1 + \"");
        let err = ExperimentConfig::from_toml(&bad).unwrap().build(Overrides::default()).unwrap_err();
        assert!(matches!(err, ConfigError::Expr { .. }));
        assert!(ExperimentConfig::from_toml(&format!("{BASE}\nbogus = 1")).is_err());
        let neg = BASE.replace("a = \"1\"", "a = \"-1\"");
        assert!(ExperimentConfig::from_toml(&neg).unwrap().build(Overrides::default()).is_err());
    }

    #[test]
    fn explicit_steps_respect_cfl() {
        let c = ExperimentConfig::from_toml(&BASE.replace("t1 = 2.0", "t1 = 2.0\nnt = 20")).unwrap();
        assert!(matches!(c.build(Overrides::default()), Err(ConfigError::Grid(GridError::Cfl { .. }))));
    }
}
