//! Flow of `g(t, x, y) = sin(y)(1 + cos(x)/4)` along one B path: checks the
//! inverse relation and the five derivative identities on random samples.

use std::time::Instant;

use gbdsde::calculus::sample_paths;
use gbdsde::coefficients::CoefficientSet;
use gbdsde::expr::{Expr, Var};
use gbdsde::flow::{flow_derivative_identities, flow_growth_check, flow_samples, FlowField};
use gbdsde::grid::TimeGrid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = Expr::product(vec![
        Expr::sin(Expr::var(Var::Y)),
        Expr::sum(vec![Expr::constant(1.0), Expr::scale(0.25, Expr::cos(Expr::var(Var::X(0))))]),
    ]);
    let coeffs = CoefficientSet::builder(1, 1).g(vec![g]).build()?;
    let grid = TimeGrid::new(0.0, 1.0, 10_000)?;
    let bundle = sample_paths(grid, 1, 99, 1)?;
    let flow = FlowField::new(&coeffs, &bundle, 0)?;

    let started = Instant::now();
    let samples = flow_samples(&grid, 1, 2.0, 1000, 99);
    let rep = flow_derivative_identities(&flow, &samples)?;
    for (name, v) in rep.rows() {
        println!("{name:28} {v:.3e}");
    }
    println!("{} samples in {:.1?}", rep.samples, started.elapsed());

    let growth = flow_growth_check(&flow, &samples[..100])?;
    println!("growth constants: value {:.3}, derivatives {:.3}", growth.value_constant, growth.derivative_constant);
    Ok(())
}
