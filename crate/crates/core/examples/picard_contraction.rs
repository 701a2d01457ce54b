//! Picard iteration on a contractive instance: `g = sqrt(alpha) z`,
//! terminal value `W_T`. Prints the successive-difference trace and ratios.

use gbdsde::calculus::sample_paths;
use gbdsde::coefficients::{CoefficientSet, Constants};
use gbdsde::expr::{Expr, Var};
use gbdsde::grid::TimeGrid;
use gbdsde::solver::{picard_solve, PicardOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alpha: f64 = 0.25;
    let gen = CoefficientSet::builder(0, 1)
        .g(vec![Expr::scale(alpha.sqrt(), Expr::var(Var::Z(0)))])
        .constants(Constants { alpha, ..Default::default() })
        .build()?;
    let bundle = sample_paths(TimeGrid::new(0.0, 1.0, 100)?, 1, 2024, 10_000)?;
    let xi: Vec<f64> = (0..bundle.scenarios()).map(|s| bundle.w(s, 100)[0]).collect();
    let sol = picard_solve(&gen, &xi, None, &bundle, &PicardOptions::default())?;
    let trace = sol.picard_trace();
    for (i, v) in trace.iter().enumerate() {
        let ratio = if i > 0 { v / trace[i - 1] } else { f64::NAN };
        println!("iteration {:2}: norm {v:.3e}  ratio {ratio:.4}", i + 1);
    }
    let (y0, se) = sol.start_value();
    println!("Y_0 = {y0:.4} +- {se:.4}; contraction bound (1+alpha)/2 = {}", (1.0 + alpha) / 2.0);
    Ok(())
}
