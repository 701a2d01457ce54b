//! Equations with known solutions: a linear ODE, the local time of
//! reflected Brownian motion, and a martingale terminal value.

use gbdsde::calculus::PathBundle;
use gbdsde::coefficients::CoefficientSet;
use gbdsde::expr::{Expr, Var};
use gbdsde::grid::TimeGrid;
use gbdsde::reflected::skorokhod_oracle_bridge;
use gbdsde::regression::RegressionBasis;
use gbdsde::solver::{picard_solve, solve_simple, Features, PicardOptions, SimpleData};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // f = -y, xi = 1: Y_t = exp(-(T - t)).
    let gen = CoefficientSet::builder(0, 1).f(Expr::affine(0.0, &[(Var::Y, -1.0)])).build()?;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 1000)?, 1, 1, 500, None)?;
    let sol = picard_solve(&gen, &vec![1.0; 500], None, &bundle, &PicardOptions::default())?;
    println!(
        "f = -y: Y_0 = {:.6} (exact {:.6}), {} Picard iterations",
        sol.start_value().0,
        (-1.0f64).exp(),
        sol.picard_iterations()
    );

    // h = 1 with k the local time at 0 of reflected Brownian motion from 0:
    // Y_0 = E k_T = sqrt(2T/pi).
    let m = 50_000;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 20)?, 1, 2, m, None)?;
    let dt = bundle.grid().dt();
    let k: Vec<Vec<f64>> = (0..m).map(|s| skorokhod_oracle_bridge(0.0, &bundle.w_coord(s, 0), dt, 2, s as u64).1).collect();
    let kf = |i: usize, s: usize| k[s][i];
    let mut data = SimpleData::terminal(vec![0.0; m], 20, 1);
    data.h = vec![1.0; 21 * m];
    let feats = Features { forward: true, backward: false, boundary: true };
    let sol = solve_simple(&data, Some(&kf), &bundle, feats, RegressionBasis::default())?;
    let (y0, se) = sol.start_value();
    println!("h = 1: Y_0 = {y0:.4} +- {se:.4} (exact {:.4})", (2.0 / std::f64::consts::PI).sqrt());

    // xi = W_T: Y = W, Z = 1.
    let m = 5_000;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 100)?, 1, 3, m, None)?;
    let xi: Vec<f64> = (0..m).map(|s| bundle.w(s, 100)[0]).collect();
    let feats = Features { forward: true, backward: false, boundary: false };
    let sol = solve_simple(&SimpleData::terminal(xi, 100, 1), None, &bundle, feats, RegressionBasis::default())?;
    println!("xi = W_T: time-averaged Z = {:.4} (exact 1)", sol.z_average()[0].0);
    Ok(())
}
