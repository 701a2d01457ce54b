//! Reflected diffusions in an interval and a disc, and the projection
//! scheme against the exact Skorokhod map on the half line.

use gbdsde::calculus::PathBundle;
use gbdsde::coefficients::CoefficientSet;
use gbdsde::domain::SmoothDomain;
use gbdsde::expr::{Expr, Var};
use gbdsde::grid::TimeGrid;
use gbdsde::reflected::{simulate_reflected, skorokhod_oracle_bridge};
use gbdsde::stats::{empirical_order, mean_se};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Ornstein-Uhlenbeck drift towards 0.5 in (0, 1).
    let ou = CoefficientSet::builder(1, 1)
        .b(vec![Expr::affine(1.0, &[(Var::X(0), -2.0)])])
        .sigma(vec![Expr::constant(0.8)])
        .build()?;
    let unit = SmoothDomain::interval(0.0, 1.0)?;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 1000)?, 1, 1, 2000, None)?;
    let ens = simulate_reflected(&ou, &unit, 0.0, &[0.05], &bundle)?;
    let kt: Vec<f64> = (0..ens.len()).map(|j| ens.k(1000, j)).collect();
    let (m, se) = mean_se(&kt);
    println!("interval: E k_T = {m:.4} +- {se:.4}, {} scenarios excluded", ens.excluded());

    // Brownian motion in the unit disc.
    let bm2 = CoefficientSet::builder(2, 2)
        .sigma(vec![Expr::constant(1.0), Expr::zero(), Expr::zero(), Expr::constant(1.0)])
        .build()?;
    let disc = SmoothDomain::ball(vec![0.0, 0.0], 1.0)?;
    let bundle2 = PathBundle::sample(TimeGrid::new(0.0, 1.0, 1000)?, 2, 2, 500, None)?;
    let ens2 = simulate_reflected(&bm2, &disc, 0.0, &[0.0, 0.0], &bundle2)?;
    let on: usize = (0..ens2.len()).map(|j| (0..=1000).filter(|&i| ens2.on_boundary(i, j)).count()).sum();
    println!("disc: {:.2}% of grid points on the boundary", 100.0 * on as f64 / (ens2.len() * 1001) as f64);

    // Convergence to the continuous Skorokhod map on (0, 10).
    let bm = CoefficientSet::builder(1, 1).sigma(vec![Expr::constant(1.0)]).build()?;
    let half = SmoothDomain::interval(0.0, 10.0)?;
    let fine = PathBundle::sample(TimeGrid::new(0.0, 1.0, 4000)?, 1, 3, 500, None)?;
    let oracle: Vec<Vec<f64>> = (0..500)
        .map(|s| skorokhod_oracle_bridge(0.0, &fine.w_coord(s, 0), fine.grid().dt(), 3, s as u64).0)
        .collect();
    let (mut hs, mut errs) = (Vec::new(), Vec::new());
    for factor in [40, 10, 1] {
        let coarse = fine.coarsen(factor)?;
        let e = simulate_reflected(&bm, &half, 0.0, &[0.0], &coarse)?;
        let mut sq = 0.0;
        for j in 0..e.len() {
            let sup = (0..=coarse.grid().steps())
                .map(|i| (e.x(i, j)[0] - oracle[e.id(j)][i * factor]).abs())
                .fold(0.0, f64::max);
            sq += sup * sup;
        }
        let rmse = (sq / e.len() as f64).sqrt();
        println!("dt = {:.1e}: RMS sup gap {rmse:.4}", coarse.grid().dt());
        hs.push(coarse.grid().dt());
        errs.push(rmse);
    }
    println!("empirical order {:.2}", empirical_order(&hs, &errs));
    Ok(())
}
