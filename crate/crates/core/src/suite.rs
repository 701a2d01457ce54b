//! Suite orchestration: one entry point per command line subcommand.

use std::path::PathBuf;

use crate::acceptance::{self, residual_results, residual_studies, write_studies, Context, Outcome};
use crate::calculus::PathBundle;
use crate::config::{ExperimentConfig, SuiteName};
use crate::error::{Error, Result};
use crate::estimates::{apriori_ratio, EnvelopeMode};
use crate::field::{evaluate_u, pde_oracle_g0, FieldGrid};
use crate::flow::{flow_derivative_identities, flow_samples, FlowField};
use crate::reflected::simulate_reflected;
use crate::report::{emit_report, CriterionResult};
use crate::solver::{picard_solve, solve_markov, MarkovOptions, PicardOptions};

/// Command line overrides of config values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub scenarios: Option<usize>,
    pub dt: Option<f64>,
    /// Output file of `solve-bdsde`.
    pub out: Option<PathBuf>,
    pub suite: Option<SuiteName>,
}

impl Overrides {
    pub fn apply(&self, cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        if let Some(s) = self.seed {
            c.monte_carlo.seed = s;
        }
        if let Some(d) = &self.out_dir {
            c.suite.out_dir = d.clone();
        }
        if let Some(m) = self.scenarios {
            c.monte_carlo.scenarios = m;
        }
        if let Some(dt) = self.dt {
            c.grid.dt = dt;
        }
        if let Some(s) = self.suite {
            c.suite.name = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub suite: SuiteName,
    pub results: Vec<CriterionResult>,
    /// Per-criterion outcomes of the acceptance suite.
    pub acceptance: Vec<Outcome>,
    pub report: PathBuf,
    pub pass: bool,
}

/// Run the configured suite, write its CSVs and `report.csv`.
pub fn run_suite(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<SuiteOutcome> {
    run_suite_with(cfg, overrides, |_| {})
}

/// Like [`run_suite`], calling `progress` after each acceptance criterion.
pub fn run_suite_with(
    cfg: &ExperimentConfig,
    overrides: &Overrides,
    progress: impl FnMut(&Outcome),
) -> Result<SuiteOutcome> {
    let cfg = overrides.apply(cfg)?;
    let out_dir = cfg.suite.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let mut acceptance_outcomes = Vec::new();
    let results = match cfg.suite.name {
        SuiteName::SimulateReflected => simulate_reflected_suite(&cfg)?,
        SuiteName::SolveBdsde => solve_bdsde_suite(&cfg, overrides.out.clone())?,
        SuiteName::VerifyFlow => verify_flow_suite(&cfg)?,
        SuiteName::VerifyCalculus => {
            let studies = residual_studies(cfg.monte_carlo.seed, cfg.monte_carlo.scenarios.min(1000))?;
            write_studies(&studies, &out_dir, "residual_")?;
            residual_results(&studies)
        }
        SuiteName::Field => field_suite(&cfg)?,
        SuiteName::Acceptance => {
            let ctx = Context { seed: cfg.monte_carlo.seed, out_dir: out_dir.clone() };
            acceptance_outcomes = acceptance::run_acceptance(&ctx, &cfg.suite.criteria, progress)?;
            acceptance_outcomes
                .iter()
                .flat_map(|o| {
                    o.results.iter().map(move |r| CriterionResult { name: format!("C{} {}", o.id, r.name), ..r.clone() })
                })
                .collect()
        }
    };
    let report = out_dir.join("report.csv");
    let mut pass = emit_report(&results, &report)?;
    pass &= acceptance_outcomes.iter().all(Outcome::within_budget);
    Ok(SuiteOutcome { suite: cfg.suite.name, results, acceptance: acceptance_outcomes, report, pass })
}

fn bundle_for(cfg: &ExperimentConfig, force_shared: bool) -> Result<PathBundle> {
    let shared = (cfg.monte_carlo.shared_b || force_shared).then_some(0);
    PathBundle::sample(cfg.time_grid()?, cfg.problem.d, cfg.monte_carlo.seed, cfg.monte_carlo.scenarios, shared)
}

fn simulate_reflected_suite(cfg: &ExperimentConfig) -> Result<Vec<CriterionResult>> {
    let (coeffs, domain, grid) = (cfg.coefficients()?, cfg.domain()?, cfg.time_grid()?);
    let bundle = bundle_for(cfg, false)?;
    let ens = simulate_reflected(&coeffs, &domain, grid.t_start(), &cfg.problem.start, &bundle)?;
    ens.write_csv(&cfg.suite.out_dir.join("reflected_paths.csv"), 20)?;
    let n = coeffs.n();
    let mut rows = Vec::new();
    let (mut inside, mut monotone, mut pushes_on_boundary) = (true, true, true);
    for i in 0..=grid.steps() {
        let mut mean_x = vec![0.0; n];
        let mut mean_k = 0.0;
        for j in 0..ens.len() {
            let x = ens.x(i, j);
            inside &= domain.contains_closure(x);
            mean_x.iter_mut().zip(x).for_each(|(m, v)| *m += v);
            mean_k += ens.k(i, j);
            if i > 0 {
                let dk = ens.k(i, j) - ens.k(i - 1, j);
                monotone &= dk >= 0.0;
                pushes_on_boundary &= dk == 0.0 || ens.on_boundary(i, j);
            }
        }
        let m = ens.len() as f64;
        let mut rec = vec![format!("{:e}", grid.time(i))];
        rec.extend(mean_x.iter().map(|v| format!("{:.10e}", v / m)));
        rec.push(format!("{:.10e}", mean_k / m));
        rows.push(rec);
    }
    let mut w = csv::Writer::from_path(cfg.suite.out_dir.join("reflected_summary.csv"))?;
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("mean_x{i}")));
    header.push("mean_k".into());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(vec![
        CriterionResult::holds("paths stay in the closed domain", inside),
        CriterionResult::holds("k is nondecreasing", monotone),
        CriterionResult::holds("k increases only on the boundary", pushes_on_boundary),
        CriterionResult::at_most("excluded scenarios", ens.excluded() as f64, 0.001 * bundle.scenarios() as f64),
    ])
}

fn solve_bdsde_suite(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<Vec<CriterionResult>> {
    let (coeffs, domain, grid) = (cfg.coefficients()?, cfg.domain()?, cfg.time_grid()?);
    let bundle = bundle_for(cfg, false)?;
    let basis = cfg.monte_carlo.basis;
    let path = out.unwrap_or_else(|| cfg.suite.out_dir.join("solution.csv"));
    let (sol, ratio) = if coeffs.n() == 0 {
        let xi = vec![coeffs.l(&[]); bundle.scenarios()];
        let sol = picard_solve(&coeffs, &xi, None, &bundle, &PicardOptions { basis, ..Default::default() })?;
        let r = apriori_ratio(&sol, &coeffs, &xi, None, 1.0, 1.0, EnvelopeMode::ZeroValue)?;
        (sol, r)
    } else {
        let ens = simulate_reflected(&coeffs, &domain, grid.t_start(), &cfg.problem.start, &bundle)?;
        let sol = solve_markov(&coeffs, &coeffs, &ens, &bundle, &MarkovOptions { basis, ..Default::default() })?;
        let xi = sol.y_slice(grid.steps()).to_vec();
        let kf = ens.k_fn();
        let r = apriori_ratio(&sol, &coeffs, &xi, Some(&kf), 1.0, 1.0, EnvelopeMode::ZeroValue)?;
        (sol, r)
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    sol.write_csv(&path)?;
    let (y0, se) = sol.start_value();
    Ok(vec![
        CriterionResult::holds("Y_0 and its SE are finite", y0.is_finite() && se.is_finite()),
        CriterionResult::holds("a priori ratio is finite", ratio.ratio.is_finite()),
    ])
}

fn verify_flow_suite(cfg: &ExperimentConfig) -> Result<Vec<CriterionResult>> {
    let coeffs = cfg.coefficients()?;
    let grid = cfg.time_grid()?;
    let bundle = PathBundle::sample(grid, coeffs.d(), cfg.monte_carlo.seed, 1, None)?;
    let flow = FlowField::new(&coeffs, &bundle, 0)?;
    let samples = flow_samples(&grid, coeffs.n(), 2.0, cfg.monte_carlo.scenarios.min(1000), cfg.monte_carlo.seed);
    let rep = flow_derivative_identities(&flow, &samples)?;
    let mut w = csv::Writer::from_path(cfg.suite.out_dir.join("flow_identities.csv"))?;
    w.write_record(["identity", "worst"])?;
    for (name, v) in rep.rows() {
        w.write_record([name.to_string(), format!("{v:.10e}")])?;
    }
    w.flush()?;
    let mut out = vec![CriterionResult::at_most("inverse", rep.inverse, 1e-9)];
    out.extend(rep.rows()[1..].iter().map(|(n, v)| CriterionResult::at_most(*n, *v, 1e-3)));
    Ok(out)
}

fn field_suite(cfg: &ExperimentConfig) -> Result<Vec<CriterionResult>> {
    let (coeffs, domain, grid) = (cfg.coefficients()?, cfg.domain()?, cfg.time_grid()?);
    let bundle = bundle_for(cfg, !coeffs.g_is_zero())?;
    let fc = &cfg.suite.field;
    let times = if fc.times.is_empty() { vec![grid.t_start()] } else { fc.times.clone() };
    let fg = if !fc.explicit_points.is_empty() {
        FieldGrid::new(times, fc.explicit_points.clone())
    } else if let Some((a, b)) = domain.interval_bounds() {
        FieldGrid::interval(times, a, b, fc.points)
    } else {
        return Err(Error::Config("suite.field.explicit_points: needed for non-interval domains".into()));
    };
    let est = evaluate_u(&coeffs, &domain, &fg, &bundle, cfg.monte_carlo.basis, fc.mode)?;
    let oracle = if coeffs.g_is_zero() && coeffs.n() == 1 && grid.t_start() == 0.0 {
        Some(pde_oracle_g0(&coeffs, &domain, grid.t_end())?)
    } else {
        None
    };
    est.write_csv(&cfg.suite.out_dir.join("field.csv"), oracle.as_ref())?;
    let terminal_exact = est
        .nodes
        .iter()
        .filter(|p| grid.index_of(p.t) == Some(grid.steps()))
        .all(|p| p.u == coeffs.l(&p.x));
    let mut out = vec![
        CriterionResult::at_most("round trip |u - eta(t, x, v)|/(1+|u|)", est.roundtrip, 1e-9),
        CriterionResult::holds("u(T, x) = l(x) at terminal nodes", terminal_exact),
    ];
    if let Some(o) = &oracle {
        out.push(CriterionResult::at_most("max |u - oracle| / (SE + 2e-3)", est.oracle_score(o, 2e-3), 3.0));
    }
    Ok(out)
}

const SMALL: &str = r#"
[problem]
n = 1
d = 1
domain = "interval(0,1)"
start = [0.5]
f = { kind = "affine", constant = 0.0, terms = { y = -0.5, z0 = 0.2 } }
g = [{ kind = "trig", func = "sin", var = "y", amp = 0.3 }]
h = { kind = "affine", constant = 0.2, terms = { y = -0.5 } }
l = { kind = "trig", func = "cos", var = "x", freq = 3.141592653589793, amp = 0.5 }
b = [{ kind = "zero" }]
sigma = [{ kind = "const", value = 1.0 }]

[grid]
t_end = 1.0
dt = 0.02

[monte_carlo]
scenarios = 2000
seed = 0
basis = { kind = "polynomial", degree = 3 }

[suite]
name = "solve-bdsde"
"#;

/// Small configurations of every non-acceptance suite, for determinism
/// checks.
pub fn determinism_configs(seed: u64) -> Result<Vec<(String, ExperimentConfig)>> {
    let base = ExperimentConfig::from_toml_str(SMALL)?;
    let mut out = Vec::new();
    for name in [
        SuiteName::SimulateReflected,
        SuiteName::SolveBdsde,
        SuiteName::VerifyFlow,
        SuiteName::VerifyCalculus,
        SuiteName::Field,
    ] {
        let mut c = base.clone();
        c.monte_carlo.seed = seed;
        c.suite.name = name;
        match name {
            SuiteName::VerifyFlow => c.monte_carlo.scenarios = 100,
            SuiteName::VerifyCalculus => c.monte_carlo.scenarios = 100,
            SuiteName::Field => {
                c.monte_carlo.scenarios = 500;
                c.suite.field.times = vec![0.0, 0.5, 1.0];
                c.suite.field.points = 3;
            }
            _ => {}
        }
        out.push((name.as_str().to_string(), c));
    }
    Ok(out)
}
