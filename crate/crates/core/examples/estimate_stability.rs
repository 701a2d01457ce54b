//! A priori and stability estimates on a Picard solution with a boundary
//! process.

use gbdsde::acceptance::perturbation_study;
use gbdsde::calculus::PathBundle;
use gbdsde::coefficients::CoefficientSet;
use gbdsde::estimates::{apriori_ratio, EnvelopeMode};
use gbdsde::expr::{Expr, Var};
use gbdsde::grid::TimeGrid;
use gbdsde::solver::{picard_solve, PicardOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gen = CoefficientSet::builder(0, 1)
        .f(Expr::affine(0.1, &[(Var::Y, -0.5), (Var::Z(0), 0.3)]))
        .g(vec![Expr::affine(0.0, &[(Var::Y, 0.3)])])
        .h(Expr::affine(0.5, &[(Var::Y, -1.0)]))
        .build()?;
    for m in [1_000, 10_000] {
        let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 50)?, 1, 8, m, None)?;
        // k = running maximum of -W (local time of reflected BM at 0)
        let k: Vec<Vec<f64>> = (0..m)
            .map(|s| {
                let mut run = 0.0f64;
                bundle.w_coord(s, 0).iter().map(|v| { run = run.max(-v); run }).collect()
            })
            .collect();
        let kf = |i: usize, s: usize| k[s][i];
        let xi: Vec<f64> = (0..m).map(|s| bundle.w(s, 50)[0].cos()).collect();
        let sol = picard_solve(&gen, &xi, Some(&kf), &bundle, &PicardOptions::default())?;
        let rep = apriori_ratio(&sol, &gen, &xi, Some(&kf), 1.0, 1.0, EnvelopeMode::ZeroValue)?;
        println!("M = {m:>5}: LHS = {:.4}, RHS = {:.4}, ratio = {:.4}", rep.lhs, rep.rhs, rep.ratio);
    }
    println!("driver perturbed by delta cos(y):");
    for (delta, lhs, rhs) in perturbation_study(8, &[0.1, 0.05, 0.025])? {
        println!("  delta = {delta:<6} LHS/delta^2 = {:.4}  LHS/RHS = {:.4}", lhs / (delta * delta), lhs / rhs);
    }
    Ok(())
}
