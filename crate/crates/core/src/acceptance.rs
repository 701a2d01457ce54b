//! The acceptance criteria, each a self-contained experiment that writes
//! its CSVs into an output directory and returns pass/fail rows.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::calculus::{
    cases, ito_formula_residual, ito_ventzell_residual, refinement_study, write_refinement_csv, Mutation, PathBundle,
    RefinementRow,
};
use crate::coefficients::{CoefficientSet, Constants};
use crate::domain::SmoothDomain;
use crate::error::{Error, Result};
use crate::estimates::{apriori_ratio, stability_gap, BdsdeData, EnvelopeMode};
use crate::expr::{Expr, Var};
use crate::field::{evaluate_u, pde_oracle_g0, FieldGrid, FieldMode};
use crate::flow::{flow_derivative_identities, flow_samples, FlowField, FlowTable};
use crate::grid::TimeGrid;
use crate::reflected::{simulate_reflected, skorokhod_oracle_bridge};
use crate::regression::RegressionBasis;
use crate::report::CriterionResult;
use crate::rng::{Motion, Stream};
use crate::solver::{picard_solve, solve_markov, solve_simple, Features, MarkovOptions, PicardOptions, SimpleData};
use crate::stats::{empirical_order, mean_se};
use crate::transform::{operator_identity_suite, solve_transformed_gbsde, transform_consistency, TestField};

pub const ALL: [u32; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Results of one criterion. Runtime is kept out of the CSV report so that
/// reports stay byte-identical across reruns.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub results: Vec<CriterionResult>,
    pub runtime: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.results.iter().all(|r| r.pass) && self.within_budget()
    }

    pub fn within_budget(&self) -> bool {
        self.runtime <= self.budget
    }

    pub fn line(&self) -> String {
        let worst = self.results.iter().find(|r| !r.pass).or(self.results.first());
        format!(
            "criterion {:2} {} {}: {} [{:.1}s of {}s]",
            self.id,
            if self.pass() { "PASS" } else { "FAIL" },
            self.title,
            worst.map_or(String::new(), |r| format!("{} = {:.4e} ({})", r.name, r.measured, r.threshold_text())),
            self.runtime.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

pub fn title(id: u32) -> &'static str {
    match id {
        1 => "reflected scheme vs Skorokhod oracle",
        2 => "flow inverse and derivative identities",
        3 => "Picard contraction",
        4 => "closed-form BDSDE cases",
        5 => "Neumann heat benchmark",
        6 => "direct vs transformed equivalence",
        7 => "operator identity",
        8 => "Ito / Ito-Ventzell residuals",
        9 => "estimate stability",
        10 => "determinism",
        _ => "unknown",
    }
}

fn budget(id: u32) -> Duration {
    Duration::from_secs(match id {
        1 | 3 | 8 => 120,
        2 => 60,
        4 => 180,
        5 | 6 | 9 => 300,
        7 => 30,
        _ => 600,
    })
}

pub fn run_criterion(id: u32, ctx: &Context) -> Result<Outcome> {
    let clock = Instant::now();
    let results = match id {
        1 => reflected_vs_oracle(ctx)?,
        2 => flow_identities(ctx)?,
        3 => picard_contraction(ctx)?,
        4 => closed_forms(ctx)?,
        5 => neumann_heat(ctx)?,
        6 => equivalence(ctx)?,
        7 => operator_identity(ctx)?,
        8 => residual_refinement(ctx)?,
        9 => estimate_stability(ctx)?,
        10 => determinism(ctx)?,
        _ => return Err(Error::Config(format!("no criterion {id}"))),
    };
    Ok(Outcome { id, title: title(id), results, runtime: clock.elapsed(), budget: budget(id) })
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn e(v: f64) -> String {
    format!("{v:.10e}")
}

fn brownian_1d() -> Result<CoefficientSet> {
    CoefficientSet::builder(1, 1).sigma(vec![Expr::constant(1.0)]).build()
}

/// Criterion 1: projected Euler against the exact Skorokhod map.
fn reflected_vs_oracle(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let coeffs = brownian_1d()?;
    // the half line, truncated far beyond the reach of a unit-time path
    let domain = SmoothDomain::interval(0.0, 20.0)?;
    let fine_dt = 1e-4;
    let fine = PathBundle::sample(TimeGrid::new(0.0, 1.0, 10_000)?, 1, ctx.seed, 1000, None)?;
    let oracle: Vec<Vec<f64>> = (0..fine.scenarios())
        .map(|s| skorokhod_oracle_bridge(0.0, &fine.w_coord(s, 0), fine_dt, ctx.seed, s as u64).0)
        .collect();
    let mut rows = Vec::new();
    let (mut dts, mut errs) = (Vec::new(), Vec::new());
    for factor in [100, 10, 1] {
        let b = if factor == 1 { fine.clone() } else { fine.coarsen(factor)? };
        let ens = simulate_reflected(&coeffs, &domain, 0.0, &[0.0], &b)?;
        let gaps: Vec<f64> = (0..ens.len())
            .map(|j| {
                let o = &oracle[ens.id(j)];
                (0..=b.grid().steps()).map(|i| (ens.x(i, j)[0] - o[i * factor]).abs()).fold(0.0, f64::max)
            })
            .collect();
        let rmse = (gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len() as f64).sqrt();
        rows.push(vec![format!("{:e}", b.grid().dt()), e(rmse), ens.len().to_string()]);
        dts.push(b.grid().dt());
        errs.push(rmse);
    }
    write_rows(&ctx.path("criterion_01_reflected.csv"), &["dt", "sup_gap_rmse", "scenarios"], &rows)?;
    Ok(vec![
        CriterionResult::at_most("sup-gap RMSE at dt=1e-4", errs[2], 0.05),
        CriterionResult::at_least("empirical strong order", empirical_order(&dts, &errs), 0.4),
    ])
}

fn flow_test_coefficients() -> Result<CoefficientSet> {
    let g = Expr::product(vec![
        Expr::sin(Expr::var(Var::Y)),
        Expr::sum(vec![Expr::constant(1.0), Expr::scale(0.25, Expr::cos(Expr::var(Var::X(0))))]),
    ]);
    CoefficientSet::builder(1, 1).g(vec![g]).build()
}

/// Criterion 2.
fn flow_identities(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let coeffs = flow_test_coefficients()?;
    let grid = TimeGrid::new(0.0, 1.0, 10_000)?;
    let bundle = PathBundle::sample(grid, 1, ctx.seed, 1, None)?;
    let flow = FlowField::new(&coeffs, &bundle, 0)?.with_fd_step(1e-4);
    let samples = flow_samples(&grid, 1, 2.0, 1000, ctx.seed);
    let rep = flow_derivative_identities(&flow, &samples)?;
    let rows: Vec<Vec<String>> = rep.rows().iter().map(|(n, v)| vec![n.to_string(), e(*v)]).collect();
    write_rows(&ctx.path("criterion_02_flow.csv"), &["identity", "worst"], &rows)?;
    let mut out = vec![CriterionResult::at_most("inverse |eps(eta(y)) - y|/(1+|y|)", rep.inverse, 1e-9)];
    for (name, v) in &rep.rows()[1..] {
        out.push(CriterionResult::at_most(*name, *v, 1e-3));
    }
    Ok(out)
}

/// The contractive instance `g = sqrt(alpha) z`, `xi = W_T`.
pub fn contraction_instance(alpha: f64) -> Result<CoefficientSet> {
    CoefficientSet::builder(0, 1)
        .g(vec![Expr::scale(alpha.sqrt(), Expr::var(Var::Z(0)))])
        .constants(Constants { alpha, ..Default::default() })
        .build()
}

/// Criterion 3.
fn picard_contraction(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let gen = contraction_instance(0.25)?;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 100)?, 1, ctx.seed, 10_000, None)?;
    let xi: Vec<f64> = (0..bundle.scenarios()).map(|s| bundle.w(s, 100)[0]).collect();
    let sol = picard_solve(&gen, &xi, None, &bundle, &PicardOptions::default())?;
    let trace = sol.picard_trace();
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (i, v) in trace.iter().enumerate() {
        let ratio = if i > 0 { v / trace[i - 1] } else { f64::NAN };
        if i >= 2 {
            worst = worst.max(ratio);
        }
        rows.push(vec![(i + 1).to_string(), e(*v), e(ratio)]);
    }
    write_rows(&ctx.path("criterion_03_picard.csv"), &["iteration", "difference_norm", "ratio"], &rows)?;
    Ok(vec![
        CriterionResult::at_least("iterations with a ratio from iteration 3", trace.len().saturating_sub(2) as f64, 1.0),
        CriterionResult::at_most("max ratio from iteration 3", worst, 0.725),
    ])
}

/// Criterion 4.
fn closed_forms(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let mut rows = Vec::new();
    // (a) f = -y, xi = 1
    let gen = CoefficientSet::builder(0, 1).f(Expr::affine(0.0, &[(Var::Y, -1.0)])).build()?;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 1000)?, 1, ctx.seed, 1000, None)?;
    let sol = picard_solve(&gen, &vec![1.0; 1000], None, &bundle, &PicardOptions::default())?;
    let grid = *bundle.grid();
    let gap_a = (0..=grid.steps())
        .map(|i| {
            let mean = sol.y_slice(i).iter().sum::<f64>() / 1000.0;
            (mean - (-(1.0 - grid.time(i))).exp()).abs()
        })
        .fold(0.0, f64::max);
    rows.push(vec!["a: max |Y_t - exp(-(T-t))|".into(), e(gap_a), String::new()]);

    // (b) reflected Brownian motion from 0, h = 1: Y_0 = E k_T = sqrt(2/pi)
    let m = 100_000;
    let seed_b = ctx.seed.wrapping_add(1);
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 20)?, 1, seed_b, m, None)?;
    let steps = bundle.grid().steps();
    let dt = bundle.grid().dt();
    let kpaths: Vec<Vec<f64>> = (0..m)
        .map(|s| skorokhod_oracle_bridge(0.0, &bundle.w_coord(s, 0), dt, seed_b, s as u64).1)
        .collect();
    let kf = |i: usize, s: usize| kpaths[s][i];
    let mut data = SimpleData::terminal(vec![0.0; m], steps, 1);
    data.h = vec![1.0; (steps + 1) * m];
    let feats = Features { forward: true, backward: false, boundary: true };
    let sol = solve_simple(&data, Some(&kf), &bundle, feats, RegressionBasis::default())?;
    let (y0, se_b) = sol.start_value();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    rows.push(vec!["b: Y_0".into(), e(y0), e(se_b)]);

    // (c) xi = W_T: Z = 1. The regression coefficients are shared by all
    // scenarios of a solve, so the error is measured over independent
    // batches rather than from the pathwise spread.
    let (batches, m) = (10, 1_000);
    let mut zs = Vec::with_capacity(batches);
    for b in 0..batches as u64 {
        let seed_c = ctx.seed.wrapping_add(2).wrapping_add(b << 32);
        let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 100)?, 1, seed_c, m, None)?;
        let xi: Vec<f64> = (0..m).map(|s| bundle.w(s, 100)[0]).collect();
        let feats = Features { forward: true, backward: false, boundary: false };
        let sol = solve_simple(&SimpleData::terminal(xi, 100, 1), None, &bundle, feats, RegressionBasis::default())?;
        zs.push(sol.z_average()[0].0);
    }
    let (z, se_c) = mean_se(&zs);
    rows.push(vec!["c: time-averaged Z (10 batches)".into(), e(z), e(se_c)]);
    write_rows(&ctx.path("criterion_04_closed_forms.csv"), &["case", "value", "se"], &rows)?;
    Ok(vec![
        CriterionResult::at_most("a: max |Y_t - e^-(T-t)|", gap_a, 1e-3),
        CriterionResult::at_most("b: |Y_0 - sqrt(2/pi)| / SE", (y0 - target).abs() / se_b, 3.0),
        CriterionResult::at_most("c: |Z - 1| / SE", (z - 1.0).abs() / se_c, 3.0),
    ])
}

fn cos_pi_x(amp: f64) -> Expr {
    Expr::scale(amp, Expr::cos(Expr::scale(std::f64::consts::PI, Expr::var(Var::X(0)))))
}

/// Criterion 5.
fn neumann_heat(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let coeffs = CoefficientSet::builder(1, 1).sigma(vec![Expr::constant(1.0)]).l(cos_pi_x(1.0)).build()?;
    let domain = SmoothDomain::interval(0.0, 1.0)?;
    let decay = (-std::f64::consts::PI.powi(2) / 2.0).exp();
    let exact = |x: f64| decay * (std::f64::consts::PI * x).cos();
    let oracle = pde_oracle_g0(&coeffs, &domain, 1.0)?;
    let fine_err = (0..=200).map(|k| k as f64 / 200.0).map(|x| (oracle.value(0.0, x) - exact(x)).abs()).fold(0.0, f64::max);

    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 1000)?, 1, ctx.seed, 10_000, None)?;
    let fg = FieldGrid::interval(vec![0.0], 0.0, 1.0, 11);
    let est = evaluate_u(&coeffs, &domain, &fg, &bundle, RegressionBasis::default(), FieldMode::PerNode)?;
    est.write_csv(&ctx.path("criterion_05_field.csv"), Some(&oracle))?;
    let score = est
        .nodes
        .iter()
        .map(|p| (p.u - exact(p.x[0])).abs() / (p.se + 2e-3))
        .fold(0.0, f64::max);
    Ok(vec![
        CriterionResult::at_most("oracle max |u(0,x) - closed form|", fine_err, 2e-3),
        CriterionResult::at_most("Monte Carlo max |u - closed form| / (SE + 2e-3)", score, 3.0),
    ])
}

/// The smooth reflected instance of criterion 6.
pub fn equivalence_instance() -> Result<CoefficientSet> {
    let y = || Expr::var(Var::Y);
    let x = || Expr::var(Var::X(0));
    let g = Expr::scale(
        0.3,
        Expr::product(vec![Expr::sin(y()), Expr::sum(vec![Expr::constant(1.0), Expr::scale(0.25, Expr::cos(x()))])]),
    );
    CoefficientSet::builder(1, 1)
        .f(Expr::affine(0.0, &[(Var::Y, -0.5), (Var::Z(0), 0.2)]))
        .g(vec![g])
        .h(Expr::affine(0.2, &[(Var::Y, -0.5)]))
        .l(cos_pi_x(0.5))
        .sigma(vec![Expr::constant(1.0)])
        .build()
}

/// Criterion 6.
fn equivalence(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let coeffs = equivalence_instance()?;
    let domain = SmoothDomain::interval(0.0, 1.0)?;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 1000)?, 1, ctx.seed, 10_000, Some(0))?;
    let ens = simulate_reflected(&coeffs, &domain, 0.0, &[0.5], &bundle)?;
    let opts = MarkovOptions::default();
    let direct = solve_markov(&coeffs, &coeffs, &ens, &bundle, &opts)?;
    let flow = FlowField::new(&coeffs, &bundle, 0)?;
    let table = FlowTable::build(&flow, (0.0, 1.0), 21, (-2.0, 2.0), 81)?;
    let transformed = solve_transformed_gbsde(&coeffs, &table, &domain, &ens, &bundle, &opts)?;
    let rep = transform_consistency(&coeffs, &flow, &ens, &direct, &transformed, 20, 50, 100)?;
    let rows = vec![
        vec!["Y_0 direct".into(), e(direct.start_value().0), String::new()],
        vec!["U_0 transformed".into(), e(transformed.start_value().0), String::new()],
        vec!["RMS |U - eps(X, Y)|".into(), e(rep.u_rms), rep.u_points.to_string()],
        vec!["RMS V gap".into(), e(rep.v_rms), rep.v_points.to_string()],
    ];
    write_rows(&ctx.path("criterion_06_equivalence.csv"), &["quantity", "value", "points"], &rows)?;
    Ok(vec![CriterionResult::at_most("RMS |U_s - eps(s, X_s, Y_s)|", rep.u_rms, 5e-2)])
}

/// Criterion 7.
fn operator_identity(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let x = || Expr::var(Var::X(0));
    let t = || Expr::var(Var::T);
    let coeffs = equivalence_instance()?
        .to_builder()
        .b(vec![Expr::scale(0.3, Expr::sin(x()))])
        .sigma(vec![Expr::sum(vec![Expr::constant(1.0), Expr::scale(0.2, Expr::cos(x()))])])
        .build()?;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 1000)?, 1, ctx.seed, 1, None)?;
    let flow = FlowField::new(&coeffs, &bundle, 0)?;
    let fields = [
        ("sin(x) exp(t)", Expr::product(vec![Expr::sin(x()), Expr::exp(t())])),
        ("x^2/2 - x/5", Expr::sum(vec![Expr::scale(0.5, Expr::product(vec![x(), x()])), Expr::scale(-0.2, x())])),
        ("0.3 cos(2x) + t x", Expr::sum(vec![Expr::scale(0.3, Expr::cos(Expr::scale(2.0, x()))), Expr::product(vec![t(), x()])])),
    ];
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (k, (name, ex)) in fields.iter().enumerate() {
        let err = operator_identity_suite(&coeffs, &flow, &TestField::new(ex.clone()), 1.5, 100, ctx.seed + k as u64)?;
        worst = worst.max(err);
        rows.push(vec![name.to_string(), e(err)]);
    }
    write_rows(&ctx.path("criterion_07_operator.csv"), &["test_field", "max_relative_error"], &rows)?;
    Ok(vec![CriterionResult::at_most("max relative error over 3 x 100 points", worst, 1e-3)])
}

/// Discrete Skorokhod local time of the first `W` coordinate at 0.
fn boundary_of(bundle: &PathBundle) -> Vec<Vec<f64>> {
    (0..bundle.scenarios())
        .map(|s| {
            let w = bundle.w_coord(s, 0);
            let mut run = 0.0f64;
            w.iter()
                .map(|v| {
                    run = run.max(-v);
                    run
                })
                .collect()
        })
        .collect()
}

/// Smallest RMS reduction per refinement step (rows from coarse to fine).
pub fn min_reduction(rows: &[RefinementRow]) -> f64 {
    rows.windows(2)
        .map(|w| {
            if w[1].rms_residual == 0.0 {
                f64::INFINITY
            } else {
                w[0].rms_residual / w[1].rms_residual
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// One residual refinement study: `(case, mutation, rows)`.
pub type Study = (String, Mutation, Vec<RefinementRow>);

/// Refinement studies of every built-in case plus the mutations, on grids
/// refined by 4x from `dt = 1/64` to `1/4096`.
pub fn residual_studies(seed: u64, scenarios: usize) -> Result<Vec<Study>> {
    let fine = PathBundle::sample(TimeGrid::new(0.0, 1.0, 4096)?, 1, seed, scenarios, None)?;
    let factors = [64, 16, 4, 1];
    let mut out = Vec::new();
    let ito_cases: Vec<(&str, crate::calculus::ItoProcess, bool)> = vec![
        ("ito brownian", cases::brownian(1), false),
        ("ito backward constant", cases::backward_constant(0.7), false),
        ("ito mixed", cases::mixed(), true),
    ];
    for (name, proc_, with_k) in &ito_cases {
        for mutation in [Mutation::None, Mutation::FlipGammaSquare] {
            if mutation != Mutation::None && matches!(proc_.gamma, crate::calculus::Component::Zero) {
                continue;
            }
            let rows = refinement_study(&fine, &factors, |b| {
                let k = boundary_of(b);
                let kf = |i: usize, s: usize| k[s][i];
                ito_formula_residual(proc_, if *with_k { Some(&kf) } else { None }, b, mutation)
            })?;
            out.push((name.to_string(), mutation, rows));
        }
    }
    let ventzell: Vec<(&str, (crate::calculus::FieldSpec, crate::calculus::VentzellProcess), bool)> = vec![
        ("ventzell quadratic", cases::quadratic_field(), false),
        ("ventzell backward linear", cases::backward_linear_field(), true),
        ("ventzell smooth", cases::smooth_field(), true),
    ];
    for (name, (field, proc_), has_h) in &ventzell {
        let mutations: &[Mutation] = if *has_h { &[Mutation::None, Mutation::FlipHCross] } else { &[Mutation::None] };
        for &mutation in mutations {
            let rows = refinement_study(&fine, &factors, |b| {
                let k = boundary_of(b);
                let kf = |i: usize, s: usize| k[s][i];
                ito_ventzell_residual(field, proc_, Some(&kf), b, mutation)
            })?;
            out.push((name.to_string(), mutation, rows));
        }
    }
    Ok(out)
}

/// Pass/fail rows for residual studies: every unmutated case must shrink
/// by `>= 2.5` per 4x refinement; every mutation must fail that test and
/// leave a residual at least ten times the unmutated one.
pub fn residual_results(studies: &[Study]) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    for (name, mutation, rows) in studies {
        let red = min_reduction(rows);
        if *mutation == Mutation::None {
            out.push(CriterionResult::at_least(format!("{name}: min RMS reduction per 4x"), red, 2.5));
        } else {
            let base = studies
                .iter()
                .find(|(n, m, _)| n == name && *m == Mutation::None)
                .map_or(0.0, |s| s.2.last().map_or(0.0, |r| r.rms_residual));
            let mutated = rows.last().map_or(0.0, |r| r.rms_residual);
            let detected = red < 2.5 && mutated >= 10.0 * base;
            out.push(CriterionResult::holds(format!("{name}: {mutation:?} mutation fails"), detected));
        }
    }
    out
}

pub fn write_studies(studies: &[Study], dir: &Path, prefix: &str) -> Result<()> {
    for (name, mutation, rows) in studies {
        let slug: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
        let suffix = if *mutation == Mutation::None { String::new() } else { format!("_{mutation:?}").to_lowercase() };
        write_refinement_csv(rows, &dir.join(format!("{prefix}{slug}{suffix}.csv")))?;
    }
    Ok(())
}

/// Criterion 8.
fn residual_refinement(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let studies = residual_studies(ctx.seed, 1000)?;
    write_studies(&studies, &ctx.out_dir, "criterion_08_")?;
    Ok(residual_results(&studies))
}

/// A random instance of the estimate suite.
struct Instance {
    coeffs: CoefficientSet,
    markov: bool,
    xi_w: f64,
    xi_k: f64,
}

fn random_instance(seed: u64, id: u64) -> Result<Instance> {
    let mut r = Stream::new(seed, 1000 + id, Motion::Aux);
    let mut u = |lo: f64, hi: f64| r.uniform_in(lo, hi);
    let markov = id % 2 == 1;
    let n = usize::from(markov);
    let (a0, a1, a2) = (u(-0.5, 0.5), u(-0.8, 0.8), u(-0.5, 0.5));
    let (b0, b1, b2) = (u(-0.3, 0.3), u(-0.3, 0.3), u(-0.5, 0.5));
    let (c0, c1) = (u(-0.5, 0.5), u(0.0, 0.8));
    let mut f_terms = vec![(Var::Y, a1), (Var::Z(0), a2)];
    let mut l = Expr::zero();
    let mut b = CoefficientSet::builder(n, 1);
    if markov {
        f_terms.push((Var::X(0), u(-0.5, 0.5)));
        l = Expr::sum(vec![Expr::constant(u(-0.5, 0.5)), Expr::scale(u(-1.0, 1.0), Expr::cos(Expr::var(Var::X(0))))]);
        b = b.sigma(vec![Expr::constant(u(0.5, 1.2))]).b(vec![Expr::constant(u(-0.3, 0.3))]);
    }
    // g only through y when Markov (flows need g free of z); z otherwise
    let g = if markov {
        Expr::affine(b0, &[(Var::Y, b1)])
    } else {
        Expr::affine(b0, &[(Var::Y, b1), (Var::Z(0), b2)])
    };
    let coeffs = b
        .f(Expr::affine(a0, &f_terms))
        .g(vec![g])
        .h(Expr::affine(c0, &[(Var::Y, -c1)]))
        .l(l)
        .constants(Constants { alpha: 0.5, ..Default::default() })
        .build()?;
    Ok(Instance { coeffs, markov, xi_w: u(-1.0, 1.0), xi_k: u(-0.5, 0.5) })
}

/// A priori ratio of one instance at `m` scenarios.
fn instance_ratio(inst: &Instance, seed: u64, m: usize) -> Result<f64> {
    let grid = TimeGrid::new(0.0, 1.0, 50)?;
    let bundle = PathBundle::sample(grid, 1, seed, m, None)?;
    let rep = if inst.markov {
        let domain = SmoothDomain::interval(0.0, 1.0)?;
        let ens = simulate_reflected(&inst.coeffs, &domain, 0.0, &[0.5], &bundle)?;
        let sol = solve_markov(&inst.coeffs, &inst.coeffs, &ens, &bundle, &MarkovOptions::default())?;
        let xi: Vec<f64> = sol.y_slice(grid.steps()).to_vec();
        let kf = ens.k_fn();
        apriori_ratio(&sol, &inst.coeffs, &xi, Some(&kf), 1.0, 1.0, EnvelopeMode::ZeroValue)?
    } else {
        let k = boundary_of(&bundle);
        let kf = |i: usize, s: usize| k[s][i];
        let xi: Vec<f64> = (0..m).map(|s| inst.xi_w * bundle.w(s, 50)[0] + inst.xi_k * k[s][50]).collect();
        let sol = picard_solve(&inst.coeffs, &xi, Some(&kf), &bundle, &PicardOptions::default())?;
        apriori_ratio(&sol, &inst.coeffs, &xi, Some(&kf), 1.0, 1.0, EnvelopeMode::ZeroValue)?
    };
    Ok(rep.ratio)
}

/// `(delta, lhs, rhs)` of the stability estimate for the driver perturbed
/// by `delta cos(y)`, on common random numbers.
pub fn perturbation_study(seed: u64, deltas: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let inst = random_instance(seed, 0)?;
    let m = 10_000;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 50)?, 1, seed, m, None)?;
    let k = boundary_of(&bundle);
    let kf = |i: usize, s: usize| k[s][i];
    let xi: Vec<f64> = (0..m).map(|s| inst.xi_w * bundle.w(s, 50)[0] + inst.xi_k * k[s][50]).collect();
    let opts = PicardOptions::default();
    let base = picard_solve(&inst.coeffs, &xi, Some(&kf), &bundle, &opts)?;
    let mut out = Vec::new();
    for &delta in deltas {
        let f2 = Expr::sum(vec![inst.coeffs.f_expr().clone(), Expr::scale(delta, Expr::cos(Expr::var(Var::Y)))]);
        let c2 = inst.coeffs.to_builder().f(f2).build()?;
        let sol2 = picard_solve(&c2, &xi, Some(&kf), &bundle, &opts)?;
        let d1 = BdsdeData { gen: &inst.coeffs, xi: &xi, k: Some(&kf) };
        let d2 = BdsdeData { gen: &c2, xi: &xi, k: Some(&kf) };
        let gap = stability_gap(&d1, &d2, &base, &sol2, 1.0)?;
        out.push((delta, gap.lhs, gap.rhs));
    }
    Ok(out)
}

/// Criterion 9.
fn estimate_stability(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let mut rows = Vec::new();
    let (mut growth, mut all_finite) = (0.0f64, true);
    for id in 0..20u64 {
        let inst = random_instance(ctx.seed, id)?;
        let s = ctx.seed.wrapping_add(id * 7919);
        let r1 = instance_ratio(&inst, s, 1_000)?;
        let r2 = instance_ratio(&inst, s, 10_000)?;
        all_finite &= r1.is_finite() && r2.is_finite();
        let g = if r1 > 0.0 { r2 / r1 } else { f64::INFINITY };
        growth = growth.max(g);
        rows.push(vec![id.to_string(), if inst.markov { "markov" } else { "path" }.into(), e(r1), e(r2), e(g)]);
    }
    write_rows(
        &ctx.path("criterion_09_apriori.csv"),
        &["instance", "kind", "ratio_m1000", "ratio_m10000", "growth"],
        &rows,
    )?;
    let study = perturbation_study(ctx.seed, &[0.1, 0.05, 0.025])?;
    let q: Vec<f64> = study.iter().map(|(d, lhs, _)| lhs / (d * d)).collect();
    let spread = q.iter().cloned().fold(0.0, f64::max) / q.iter().cloned().fold(f64::INFINITY, f64::min);
    let prow: Vec<Vec<String>> =
        study.iter().zip(&q).map(|((d, l, r), q)| vec![format!("{d}"), e(*l), e(*r), e(*q), e(l / r)]).collect();
    write_rows(&ctx.path("criterion_09_perturbation.csv"), &["delta", "lhs", "rhs", "lhs_over_delta2", "lhs_over_rhs"], &prow)?;
    // the constant is not known in closed form: fit it over the study
    let fitted_c = study.iter().map(|(_, l, r)| l / r).fold(0.0, f64::max);
    Ok(vec![
        CriterionResult::holds("all a priori ratios finite", all_finite),
        CriterionResult::at_most("max ratio growth 1e3 -> 1e4 scenarios", growth, 1.25),
        CriterionResult::at_most("spread of LHS/delta^2", spread, 2.0),
        CriterionResult::holds("LHS <= C RHS with a finite fitted C", fitted_c.is_finite() && fitted_c > 0.0),
    ])
}

/// Criterion 10: rerun the non-acceptance suites on small configurations
/// with one and two workers and compare every CSV byte for byte.
fn determinism(ctx: &Context) -> Result<Vec<CriterionResult>> {
    let mut out = Vec::new();
    for (name, cfg) in crate::suite::determinism_configs(ctx.seed)? {
        let mut outputs = Vec::new();
        for workers in [1, 2] {
            let dir = ctx.out_dir.join(format!("determinism/{name}/workers_{workers}"));
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut c = cfg.clone();
            c.suite.out_dir = dir.clone();
            pool.install(|| crate::suite::run_suite(&c, &crate::suite::Overrides::default()))?;
            outputs.push(read_csvs(&dir)?);
        }
        let same = !outputs[0].is_empty() && outputs[0] == outputs[1];
        out.push(CriterionResult::holds(format!("{name}: identical CSVs with 1 and 2 workers"), same));
    }
    // a second run with the same worker count must reproduce too
    let (name, cfg) = crate::suite::determinism_configs(ctx.seed)?.swap_remove(0);
    let dir = ctx.out_dir.join(format!("determinism/{name}/rerun"));
    let mut c = cfg;
    c.suite.out_dir = dir.clone();
    crate::suite::run_suite(&c, &crate::suite::Overrides::default())?;
    let first = read_csvs(&ctx.out_dir.join(format!("determinism/{name}/workers_1")))?;
    out.push(CriterionResult::holds(format!("{name}: identical CSVs on rerun"), read_csvs(&dir)? == first));
    Ok(out)
}

fn read_csvs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            files.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p)?));
        }
    }
    files.sort();
    Ok(files)
}

/// Run the selected criteria (all when empty), writing CSVs to `out_dir`.
pub fn run_acceptance(ctx: &Context, ids: &[u32], mut on_done: impl FnMut(&Outcome)) -> Result<Vec<Outcome>> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let ids: Vec<u32> = if ids.is_empty() { ALL.to_vec() } else { ids.to_vec() };
    let mut out = Vec::new();
    for id in ids {
        let o = run_criterion(id, ctx)?;
        on_done(&o);
        out.push(o);
    }
    Ok(out)
}
