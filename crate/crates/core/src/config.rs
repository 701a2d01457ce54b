//! Experiment configuration: one TOML file with `problem`, `grid`,
//! `monte_carlo` and `suite` sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::CoefSpec;
use crate::coefficients::{CoefficientSet, Constants};
use crate::domain::SmoothDomain;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::FieldMode;
use crate::grid::TimeGrid;
use crate::regression::RegressionBasis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    SimulateReflected,
    SolveBdsde,
    VerifyFlow,
    VerifyCalculus,
    Field,
    Acceptance,
}

impl SuiteName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SuiteName::SimulateReflected => "simulate-reflected",
            SuiteName::SolveBdsde => "solve-bdsde",
            SuiteName::VerifyFlow => "verify-flow",
            SuiteName::VerifyCalculus => "verify-calculus",
            SuiteName::Field => "field",
            SuiteName::Acceptance => "acceptance",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub d: usize,
    /// `interval(a,b)` or `ball(c1,...,cn,r)`.
    pub domain: String,
    /// Starting point of the forward diffusion.
    pub start: Vec<f64>,
    pub f: CoefSpec,
    pub g: Vec<CoefSpec>,
    pub h: CoefSpec,
    pub l: CoefSpec,
    pub b: Vec<CoefSpec>,
    /// Row-major `n x d`.
    pub sigma: Vec<CoefSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<Constants>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub scenarios: usize,
    pub seed: u64,
    pub basis: RegressionBasis,
    /// Use one backward path (id 0) for every scenario.
    #[serde(default)]
    pub shared_b: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default)]
    pub mode: FieldMode,
    /// Times of the field grid; empty means `{t_start}`.
    #[serde(default)]
    pub times: Vec<f64>,
    /// Equally spaced points per coordinate (interval domains) or the
    /// explicit points below.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit_points: Vec<Vec<f64>>,
}

fn default_points() -> usize {
    11
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { mode: FieldMode::PerNode, times: Vec::new(), points: default_points(), explicit_points: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: SuiteName,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub field: FieldConfig,
    /// Acceptance criteria to run (1-10); empty means all.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub criteria: Vec<u32>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub monte_carlo: MonteCarloConfig,
    pub suite: SuiteConfig,
}

fn cfg_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {e}"))
}

fn expr(field: &str, spec: &CoefSpec) -> Result<Expr> {
    spec.to_expr().map_err(|e| cfg_err(field, e))
}

fn exprs(field: &str, specs: &[CoefSpec]) -> Result<Vec<Expr>> {
    specs.iter().enumerate().map(|(i, s)| expr(&format!("{field}[{i}]"), s)).collect()
}

impl ExperimentConfig {
    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(&path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        let p = &self.problem;
        let mut b = CoefficientSet::builder(p.n, p.d)
            .f(expr("problem.f", &p.f)?)
            .g(exprs("problem.g", &p.g)?)
            .h(expr("problem.h", &p.h)?)
            .l(expr("problem.l", &p.l)?)
            .b(exprs("problem.b", &p.b)?)
            .sigma(exprs("problem.sigma", &p.sigma)?);
        if let Some(c) = p.constants {
            b = b.constants(c);
        }
        b.build().map_err(|e| cfg_err("problem", e))
    }

    pub fn domain(&self) -> Result<SmoothDomain> {
        self.problem.domain.parse().map_err(|e| cfg_err("problem.domain", e))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let g = &self.grid;
        TimeGrid::with_dt(g.t_start, g.t_end, g.dt).map_err(|e| cfg_err("grid", e))
    }

    /// Size of the regression basis used by the Markovian solver.
    pub fn basis_size(&self) -> usize {
        let p = &self.problem;
        let g_zero = p.g.iter().all(|g| matches!(g, CoefSpec::Zero));
        let q = p.n + if g_zero || self.monte_carlo.shared_b { 0 } else { p.d };
        match self.monte_carlo.basis {
            RegressionBasis::Polynomial { degree } => {
                // binomial(q + degree, degree)
                (1..=degree).fold(1usize, |acc, k| acc * (q + k) / k)
            }
            RegressionBasis::PiecewiseBins { count } => count.max(1).pow(q as u32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = self.coefficients()?;
        let domain = self.domain()?;
        self.time_grid()?;
        let p = &self.problem;
        if domain.dim() != p.n {
            return Err(cfg_err("problem.domain", format!("dimension {} but n = {}", domain.dim(), p.n)));
        }
        if p.start.len() != p.n || !domain.contains_closure(&p.start) {
            return Err(cfg_err("problem.start", "must be a point of the closed domain"));
        }
        if !coeffs.g_is_zero() && coeffs.g_expr().iter().any(Expr::depends_on_z) && self.suite.name == SuiteName::VerifyFlow
        {
            return Err(cfg_err("problem.g", "flows need g independent of z"));
        }
        let mc = &self.monte_carlo;
        let need = 10 * self.basis_size();
        if mc.scenarios < need {
            return Err(cfg_err(
                "monte_carlo.scenarios",
                format!("{} scenarios for a basis of size {} (need >= {need})", mc.scenarios, self.basis_size()),
            ));
        }
        let grid = self.time_grid()?;
        for t in &self.suite.field.times {
            if grid.index_of(*t).is_none() {
                return Err(cfg_err("suite.field.times", format!("{t} is not a grid time")));
            }
        }
        for c in &self.suite.criteria {
            if !(1..=10).contains(c) {
                return Err(cfg_err("suite.criteria", format!("no criterion {c}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SAMPLE: &str = r#"
[problem]
n = 1
d = 1
domain = "interval(0,1)"
start = [0.5]
f = { kind = "affine", constant = 0.0, terms = { y = -0.5 } }
g = [{ kind = "zero" }]
h = { kind = "zero" }
l = { kind = "trig", func = "cos", var = "x", freq = 3.141592653589793 }
b = [{ kind = "zero" }]
sigma = [{ kind = "const", value = 1.0 }]

[grid]
t_end = 1.0
dt = 0.01

[monte_carlo]
scenarios = 1000
seed = 7
basis = { kind = "polynomial", degree = 3 }

[suite]
name = "solve-bdsde"
"#;

    #[test]
    fn sample_parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.basis_size(), 4);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_catalog_entry_is_a_config_error() {
        let bad = SAMPLE.replace(r#"h = { kind = "zero" }"#, r#"h = { kind = "bessel" }"#);
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("unknown catalog entry"), "{err}");
    }

    #[test]
    fn too_few_scenarios_is_rejected() {
        let bad = SAMPLE.replace("scenarios = 1000", "scenarios = 39");
        assert!(ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string().contains("monte_carlo.scenarios"));
    }
}
