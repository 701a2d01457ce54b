use gbdsde::calculus::PathBundle;
use gbdsde::coefficients::CoefficientSet;
use gbdsde::expr::{Expr, Var};
use gbdsde::flow::{flow_derivative_identities, flow_samples, FlowField, FlowTable};
use gbdsde::grid::TimeGrid;
use proptest::prelude::*;

fn coeffs() -> CoefficientSet {
    let y = Expr::var(Var::Y);
    let x = Expr::var(Var::X(0));
    let g = Expr::scale(0.4, Expr::product(vec![Expr::sin(y), Expr::sum(vec![Expr::constant(1.0), Expr::scale(0.5, Expr::cos(x))])]));
    CoefficientSet::builder(1, 1).g(vec![g]).sigma(vec![Expr::constant(1.0)]).build().unwrap()
}

fn flow(seed: u64) -> FlowField {
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 200).unwrap(), 1, seed, 1, None).unwrap();
    FlowField::new(&coeffs(), &bundle, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eps_inverts_eta(seed in 0u64..1000, i in 0usize..=200, x in 0.0..1.0f64, y in -2.0..2.0f64) {
        let f = flow(seed);
        let u = f.eta(i, &[x], y).unwrap();
        let back = f.eps(i, &[x], u).unwrap();
        prop_assert!((back - y).abs() <= 1e-9 * (1.0 + y.abs()), "{back} vs {y}");
    }

    #[test]
    fn eta_is_increasing_in_y(seed in 0u64..1000, x in 0.0..1.0f64, y in -2.0..2.0f64, dy in 1e-3..1.0f64) {
        let f = flow(seed);
        prop_assert!(f.eta(0, &[x], y + dy).unwrap() > f.eta(0, &[x], y).unwrap());
    }
}

#[test]
fn flow_is_the_identity_at_the_terminal_time() {
    let f = flow(3);
    assert_eq!(f.eta(200, &[0.3], 0.7).unwrap(), 0.7);
    assert_eq!(f.eps(200, &[0.3], 0.7).unwrap(), 0.7);
}

#[test]
fn zero_noise_gives_a_trivial_flow() {
    let c = CoefficientSet::builder(1, 1).sigma(vec![Expr::constant(1.0)]).build().unwrap();
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 20).unwrap(), 1, 1, 1, None).unwrap();
    let f = FlowField::new(&c, &bundle, 0).unwrap();
    assert!(f.is_trivial());
    assert_eq!(f.eta(0, &[0.5], 1.25).unwrap(), 1.25);
}

#[test]
fn z_dependent_noise_is_rejected() {
    let c = CoefficientSet::builder(1, 1).g(vec![Expr::var(Var::Z(0))]).build().unwrap();
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 20).unwrap(), 1, 1, 1, None).unwrap();
    assert!(FlowField::new(&c, &bundle, 0).is_err());
}

#[test]
fn derivative_identities_hold_on_random_samples() {
    let f = flow(11);
    let samples = flow_samples(&TimeGrid::new(0.0, 1.0, 200).unwrap(), 1, 2.0, 50, 11);
    let rep = flow_derivative_identities(&f, &samples).unwrap();
    assert!(rep.worst_derivative() < 1e-3, "{rep:?}");
}

#[test]
fn table_lookup_agrees_with_direct_evaluation() {
    let f = flow(5);
    let table = FlowTable::build(&f, (0.0, 1.0), 21, (-2.0, 2.0), 81).unwrap();
    for (i, x, y) in [(0, 0.37, 0.4), (100, 0.81, -1.3), (150, 0.05, 1.7)] {
        let row = table.lookup(i, x, y).unwrap();
        let (eta, dy) = f.eta_with_dy(i, &[x], y).unwrap();
        assert!((row[0] - eta).abs() < 1e-4, "step {i}: table {} vs {eta}", row[0]);
        assert!((row[2] - dy).abs() < 1e-3, "step {i}: table {} vs {dy}", row[2]);
    }
}
