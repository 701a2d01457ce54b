use gbdsde::calculus::PathBundle;
use gbdsde::coefficients::CoefficientSet;
use gbdsde::domain::SmoothDomain;
use gbdsde::expr::{Expr, Var};
use gbdsde::field::{evaluate_u, pde_oracle_fixed, pde_oracle_g0, FieldGrid, FieldMode};
use gbdsde::grid::TimeGrid;
use gbdsde::regression::RegressionBasis;
use proptest::prelude::*;

fn heat(l: Expr) -> CoefficientSet {
    CoefficientSet::builder(1, 1).l(l).sigma(vec![Expr::constant(1.0)]).build().unwrap()
}

fn cos_pi_x() -> Expr {
    Expr::cos(Expr::scale(std::f64::consts::PI, Expr::var(Var::X(0))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn oracle_keeps_constants(c in -5.0..5.0f64) {
        let coeffs = heat(Expr::constant(c));
        let o = pde_oracle_fixed(&coeffs, &SmoothDomain::interval(0.0, 1.0).unwrap(), 1.0, 20, 20).unwrap();
        for v in &o.u {
            prop_assert!((v - c).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_decays_the_cosine_mode(t in 0.0..1.0f64, x in 0.0..1.0f64) {
        // u_t + u_xx / 2 = 0, u_x = 0 at 0 and 1, u(1, x) = cos(pi x)
        let coeffs = heat(cos_pi_x());
        let o = pde_oracle_g0(&coeffs, &SmoothDomain::interval(0.0, 1.0).unwrap(), 1.0).unwrap();
        let pi = std::f64::consts::PI;
        let exact = (-pi * pi * (1.0 - t) / 2.0).exp() * (pi * x).cos();
        prop_assert!((o.value(t, x) - exact).abs() < 2e-3);
    }
}

#[test]
fn monte_carlo_field_agrees_with_the_oracle() {
    let coeffs = heat(cos_pi_x());
    let domain = SmoothDomain::interval(0.0, 1.0).unwrap();
    let oracle = pde_oracle_g0(&coeffs, &domain, 1.0).unwrap();
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 100).unwrap(), 1, 21, 2_000, None).unwrap();
    let grid = FieldGrid::interval(vec![0.0, 1.0], 0.0, 1.0, 5);
    let est = evaluate_u(&coeffs, &domain, &grid, &bundle, RegressionBasis::default(), FieldMode::PerNode).unwrap();
    assert!(est.oracle_score(&oracle, 2e-2) <= 3.0);
    for node in est.nodes.iter().filter(|n| n.t == 1.0) {
        assert_eq!(node.u, coeffs.l(&node.x));
        assert_eq!(node.se, 0.0);
    }
}

#[test]
fn shared_start_mode_gives_the_same_picture() {
    let coeffs = heat(cos_pi_x());
    let domain = SmoothDomain::interval(0.0, 1.0).unwrap();
    let oracle = pde_oracle_g0(&coeffs, &domain, 1.0).unwrap();
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 100).unwrap(), 1, 22, 20_000, None).unwrap();
    let grid = FieldGrid::interval(vec![0.0], 0.0, 1.0, 5);
    let est = evaluate_u(&coeffs, &domain, &grid, &bundle, RegressionBasis::default(), FieldMode::SharedX).unwrap();
    for n in &est.nodes {
        assert!((n.u - oracle.value(n.t, n.x[0])).abs() < 0.05, "{n:?}");
    }
}

#[test]
fn backward_noise_needs_one_shared_path() {
    let coeffs = CoefficientSet::builder(1, 1)
        .g(vec![Expr::scale(0.3, Expr::sin(Expr::var(Var::Y)))])
        .l(cos_pi_x())
        .sigma(vec![Expr::constant(1.0)])
        .build()
        .unwrap();
    let domain = SmoothDomain::interval(0.0, 1.0).unwrap();
    let grid = FieldGrid::interval(vec![0.0], 0.0, 1.0, 3);
    let own = PathBundle::sample(TimeGrid::new(0.0, 1.0, 20).unwrap(), 1, 1, 200, None).unwrap();
    assert!(evaluate_u(&coeffs, &domain, &grid, &own, RegressionBasis::default(), FieldMode::PerNode).is_err());
    let shared = PathBundle::sample(TimeGrid::new(0.0, 1.0, 20).unwrap(), 1, 1, 200, Some(0)).unwrap();
    let est = evaluate_u(&coeffs, &domain, &grid, &shared, RegressionBasis::default(), FieldMode::PerNode).unwrap();
    assert!(est.roundtrip < 1e-9);
    assert!(pde_oracle_g0(&coeffs, &domain, 1.0).is_err());
}
