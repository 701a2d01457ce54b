//! Solve a reflected BDSDE directly and through the flow transformation on
//! the same paths, then compare `U` with `eps(s, X, Y)` and `V` with
//! `D_y eps Z + sigma D_x eps`.

use std::time::Instant;

use gbdsde::calculus::PathBundle;
use gbdsde::coefficients::CoefficientSet;
use gbdsde::domain::SmoothDomain;
use gbdsde::expr::{Expr, Var};
use gbdsde::flow::{FlowField, FlowTable};
use gbdsde::grid::TimeGrid;
use gbdsde::reflected::simulate_reflected;
use gbdsde::solver::{solve_markov, MarkovOptions};
use gbdsde::transform::{solve_transformed_gbsde, transform_consistency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let y = || Expr::var(Var::Y);
    let x = || Expr::var(Var::X(0));
    let g = Expr::scale(
        0.3,
        Expr::product(vec![Expr::sin(y()), Expr::sum(vec![Expr::constant(1.0), Expr::scale(0.25, Expr::cos(x()))])]),
    );
    let coeffs = CoefficientSet::builder(1, 1)
        .f(Expr::affine(0.0, &[(Var::Y, -0.5), (Var::Z(0), 0.2)]))
        .g(vec![g])
        .h(Expr::affine(0.2, &[(Var::Y, -0.5)]))
        .l(Expr::scale(0.5, Expr::cos(Expr::scale(std::f64::consts::PI, x()))))
        .sigma(vec![Expr::constant(1.0)])
        .build()?;
    let domain = SmoothDomain::interval(0.0, 1.0)?;
    let grid = TimeGrid::new(0.0, 1.0, 1000)?;
    let clock = Instant::now();
    let bundle = PathBundle::sample(grid, 1, 7, 10_000, Some(0))?;
    let ens = simulate_reflected(&coeffs, &domain, 0.0, &[0.5], &bundle)?;
    let opts = MarkovOptions::default();
    let direct = solve_markov(&coeffs, &coeffs, &ens, &bundle, &opts)?;
    println!("direct solve: Y_0 = {:.5} ({:.1?})", direct.start_value().0, clock.elapsed());

    let flow = FlowField::new(&coeffs, &bundle, 0)?;
    let table = FlowTable::build(&flow, (0.0, 1.0), 21, (-2.0, 2.0), 81)?;
    println!("flow table built ({:.1?})", clock.elapsed());
    let transformed = solve_transformed_gbsde(&coeffs, &table, &domain, &ens, &bundle, &opts)?;
    println!("transformed solve: U_0 = {:.5} ({:.1?})", transformed.start_value().0, clock.elapsed());

    let rep = transform_consistency(&coeffs, &flow, &ens, &direct, &transformed, 20, 50, 100)?;
    println!(
        "RMS |U - eps(X, Y)| = {:.4} over {} points; RMS V gap = {:.4} over {} points ({:.1?})",
        rep.u_rms,
        rep.u_points,
        rep.v_rms,
        rep.v_points,
        clock.elapsed()
    );
    Ok(())
}
