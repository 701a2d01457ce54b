//! Check the structural hypotheses on sampled points, then remove a
//! positive one-sided boundary constant with the exponential shift.

use gbdsde::coefficients::{CoefficientSet, Constants};
use gbdsde::expr::{Expr, Var};
use gbdsde::hypotheses::{choose_shift_rate, exponential_shift, sampled_monotonicity, validate_hypotheses, SamplePlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // h = 0.5 y + 0.2 sin(x): one-sided constant beta1 = 0.5 > 0
    let coeffs = CoefficientSet::builder(1, 1)
        .f(Expr::affine(0.0, &[(Var::Y, -0.8), (Var::Z(0), 0.2)]))
        .g(vec![Expr::scale(0.3, Expr::sin(Expr::var(Var::Y)))])
        .h(Expr::sum(vec![Expr::affine(0.0, &[(Var::Y, 0.5)]), Expr::scale(0.2, Expr::sin(Expr::var(Var::X(0))))]))
        .sigma(vec![Expr::constant(1.0)])
        .constants(Constants { k: 1.0, c: 1.0, alpha: 0.09, beta1: 0.5 })
        .build()?;
    let plan = SamplePlan { count: 2_000, seed: 1, ..Default::default() };
    let report = validate_hypotheses(&coeffs, &plan)?;
    for c in &report.checks {
        println!("{:<28} worst ratio {:>8.4} (bound {:.3}) {}", c.name, c.worst_ratio, c.bound, if c.pass { "ok" } else { "VIOLATED" });
    }

    let rate = choose_shift_rate(coeffs.constants().beta1);
    let k_path: Vec<f64> = (0..=10).map(|i| 0.05 * i as f64).collect();
    let shifted = exponential_shift(&coeffs, rate, &k_path)?;
    println!("shift rate {rate}: shifted one-sided constant {:.3}", shifted.beta2());
    for k in [0.0, 0.5, 2.0] {
        println!("  k = {k}: sampled monotonicity of h_bar = {:.4}", sampled_monotonicity(&shifted, k, &plan)?);
    }
    let (mut y, mut z) = (1.5, [0.3]);
    shifted.forward(0.7, &mut y, &mut z);
    shifted.inverse(0.7, &mut y, &mut z);
    println!("forward/inverse round trip: y = {y}, z = {:?}", z);
    Ok(())
}
