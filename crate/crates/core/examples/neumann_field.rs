//! The field u(t, x) of a heat equation with a nonlinear Neumann condition,
//! from Monte Carlo and from the finite-difference oracle.

use gbdsde::calculus::PathBundle;
use gbdsde::coefficients::CoefficientSet;
use gbdsde::domain::SmoothDomain;
use gbdsde::expr::{Expr, Var};
use gbdsde::field::{evaluate_u, pde_oracle_g0, FieldGrid, FieldMode};
use gbdsde::grid::TimeGrid;
use gbdsde::regression::RegressionBasis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // u_t + u_xx/2 - u/2 = 0, u_n + 0.2 - 0.5 u = 0 on {0, 1}, u(1, x) = cos(pi x)
    let x = Expr::var(Var::X(0));
    let coeffs = CoefficientSet::builder(1, 1)
        .f(Expr::affine(0.0, &[(Var::Y, -0.5)]))
        .h(Expr::affine(0.2, &[(Var::Y, -0.5)]))
        .l(Expr::cos(Expr::scale(std::f64::consts::PI, x)))
        .sigma(vec![Expr::constant(1.0)])
        .build()?;
    let domain = SmoothDomain::interval(0.0, 1.0)?;
    let oracle = pde_oracle_g0(&coeffs, &domain, 1.0)?;
    println!(
        "oracle: {} x {} grid, last refinement changed u by {:.1e}",
        oracle.space_points, oracle.time_points, oracle.refinement_diff
    );

    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 200)?, 1, 4, 4000, None)?;
    let grid = FieldGrid::interval(vec![0.0, 0.5], 0.0, 1.0, 6);
    let est = evaluate_u(&coeffs, &domain, &grid, &bundle, RegressionBasis::default(), FieldMode::PerNode)?;
    println!("{:>5} {:>5} {:>9} {:>8} {:>9}", "t", "x", "u (MC)", "se", "oracle");
    for n in &est.nodes {
        println!("{:5.2} {:5.2} {:9.5} {:8.5} {:9.5}", n.t, n.x[0], n.u, n.se, oracle.value(n.t, n.x[0]));
    }
    println!("score max |gap| / max(se, 1e-3) = {:.2}", est.oracle_score(&oracle, 1e-3));
    Ok(())
}
