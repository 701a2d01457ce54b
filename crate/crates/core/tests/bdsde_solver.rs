use gbdsde::calculus::{sample_paths, PathBundle};
use gbdsde::coefficients::CoefficientSet;
use gbdsde::domain::SmoothDomain;
use gbdsde::estimates::{apriori_ratio, stability_gap, BdsdeData, EnvelopeMode};
use gbdsde::expr::{Expr, Var};
use gbdsde::grid::TimeGrid;
use gbdsde::regression::{RegressionBasis, Regressor};
use gbdsde::solver::{picard_solve, solve_bdsde_markov, solve_simple, Features, PicardOptions, SimpleData};
use gbdsde::stats::mean_se;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prediction_at_the_training_points_is_the_projection(
        pts in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 100..300),
        degree in 0usize..4,
    ) {
        let feats: Vec<f64> = pts.iter().flat_map(|(a, b)| [*a, *b]).collect();
        let target: Vec<f64> = pts.iter().map(|(a, b)| (a * b).sin() + a).collect();
        let reg = Regressor::fit(&feats, 2, RegressionBasis::Polynomial { degree }).unwrap();
        let fitted = reg.project(&target);
        let predicted = reg.predict(&target, &feats, 2);
        for (p, q) in fitted.iter().zip(&predicted) {
            prop_assert!((p - q).abs() < 1e-8 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn projection_is_idempotent(pts in prop::collection::vec(-3.0..3.0f64, 50..200)) {
        let target: Vec<f64> = pts.iter().map(|x| x.exp()).collect();
        let reg = Regressor::fit(&pts, 1, RegressionBasis::Polynomial { degree: 3 }).unwrap();
        let once = reg.project(&target);
        let twice = reg.project(&once);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn linear_driver_matches_the_ode() {
    let gen = CoefficientSet::builder(0, 1).f(Expr::affine(0.0, &[(Var::Y, -1.0)])).build().unwrap();
    let bundle = sample_paths(TimeGrid::new(0.0, 1.0, 200).unwrap(), 1, 2, 200).unwrap();
    let sol = picard_solve(&gen, &vec![1.0; 200], None, &bundle, &PicardOptions::default()).unwrap();
    let (y0, _) = sol.start_value();
    assert!((y0 - (-1.0f64).exp()).abs() < 5e-3, "{y0}");
    assert!(sol.picard_trace().last().unwrap() < &1e-12);
}

#[test]
fn martingale_terminal_value_is_reproduced() {
    let m = 2_000;
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 50).unwrap(), 1, 6, m, None).unwrap();
    let xi: Vec<f64> = (0..m).map(|s| bundle.w(s, 50)[0]).collect();
    let feats = Features { forward: true, backward: false, boundary: false };
    let sol = solve_simple(&SimpleData::terminal(xi, 50, 1), None, &bundle, feats, RegressionBasis::default()).unwrap();
    for i in [0, 25, 49] {
        let gap = (0..m).map(|s| (sol.y(i, s) - bundle.w(s, i)[0]).powi(2)).sum::<f64>() / m as f64;
        // Monte Carlo level: the sample mean of W_T alone is off by ~1/sqrt(m)
        assert!(gap.sqrt() < 4.0 / (m as f64).sqrt(), "step {i}: {}", gap.sqrt());
    }
}

#[test]
fn markov_solver_recovers_a_linear_terminal_value() {
    // Brownian motion far from the walls: u(t, x) = x.
    let coeffs = CoefficientSet::builder(1, 1)
        .l(Expr::var(Var::X(0)))
        .sigma(vec![Expr::constant(1.0)])
        .build()
        .unwrap();
    let domain = SmoothDomain::interval(-20.0, 20.0).unwrap();
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 50).unwrap(), 1, 9, 4_000, None).unwrap();
    let sol = solve_bdsde_markov(&coeffs, &domain, 0.0, &[0.3], &bundle, RegressionBasis::default()).unwrap();
    let (y0, se) = sol.start_value();
    assert!((y0 - 0.3).abs() < 4.0 * se.max(1e-3), "{y0} +- {se}");
    let (z, _) = sol.z_average()[0];
    assert!((z - 1.0).abs() < 0.05, "{z}");
}

#[test]
fn apriori_ratio_is_invariant_under_scaling_of_linear_data() {
    let gen = CoefficientSet::builder(0, 1)
        .f(Expr::affine(0.0, &[(Var::Y, -0.5), (Var::Z(0), 0.3)]))
        .g(vec![Expr::affine(0.0, &[(Var::Y, 0.2)])])
        .build()
        .unwrap();
    let m = 500;
    let bundle = sample_paths(TimeGrid::new(0.0, 1.0, 40).unwrap(), 1, 12, m).unwrap();
    let xi: Vec<f64> = (0..m).map(|s| bundle.w(s, 40)[0].sin()).collect();
    let xi2: Vec<f64> = xi.iter().map(|v| 2.0 * v).collect();
    let opts = PicardOptions::default();
    let s1 = picard_solve(&gen, &xi, None, &bundle, &opts).unwrap();
    let s2 = picard_solve(&gen, &xi2, None, &bundle, &opts).unwrap();
    let r1 = apriori_ratio(&s1, &gen, &xi, None, 1.0, 1.0, EnvelopeMode::ZeroValue).unwrap();
    let r2 = apriori_ratio(&s2, &gen, &xi2, None, 1.0, 1.0, EnvelopeMode::ZeroValue).unwrap();
    assert!((r2.lhs / r1.lhs - 4.0).abs() < 1e-6, "{} {}", r1.lhs, r2.lhs);
    assert!((r1.ratio - r2.ratio).abs() < 1e-6 * r1.ratio);
}

#[test]
fn stability_gap_vanishes_for_identical_data_and_scales_quadratically() {
    let gen = CoefficientSet::builder(0, 1).f(Expr::affine(0.0, &[(Var::Y, -0.5)])).build().unwrap();
    let m = 400;
    let bundle = sample_paths(TimeGrid::new(0.0, 1.0, 40).unwrap(), 1, 13, m).unwrap();
    let xi: Vec<f64> = (0..m).map(|s| bundle.w(s, 40)[0]).collect();
    let opts = PicardOptions::default();
    let base = picard_solve(&gen, &xi, None, &bundle, &opts).unwrap();
    let d = BdsdeData { gen: &gen, xi: &xi, k: None };
    let same = stability_gap(&d, &d, &base, &base, 1.0).unwrap();
    assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
    let mut lhs = Vec::new();
    for delta in [0.1, 0.05] {
        let f2 = Expr::sum(vec![gen.f_expr().clone(), Expr::scale(delta, Expr::cos(Expr::var(Var::Y)))]);
        let g2 = gen.to_builder().f(f2).build().unwrap();
        let sol2 = picard_solve(&g2, &xi, None, &bundle, &opts).unwrap();
        let d2 = BdsdeData { gen: &g2, xi: &xi, k: None };
        let gap = stability_gap(&d, &d2, &base, &sol2, 1.0).unwrap();
        lhs.push(gap.lhs / (delta * delta));
    }
    assert!(lhs[0] / lhs[1] < 2.0 && lhs[1] / lhs[0] < 2.0, "{lhs:?}");
}

#[test]
fn standard_errors_shrink_with_the_sample() {
    let small: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
    let large: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
    assert!(mean_se(&large).1 < mean_se(&small).1 / 5.0);
}

mod hypotheses {
    use gbdsde::coefficients::{CoefficientSet, Constants};
    use gbdsde::expr::{Expr, Var};
    use gbdsde::hypotheses::{choose_shift_rate, exponential_shift, sampled_monotonicity, validate_hypotheses, SamplePlan};
    use proptest::prelude::*;

    fn with_h(h: Expr, beta1: f64) -> CoefficientSet {
        CoefficientSet::builder(1, 1)
            .f(Expr::affine(0.0, &[(Var::Y, -0.5)]))
            .h(h)
            .sigma(vec![Expr::constant(1.0)])
            .constants(Constants { k: 1.0, c: 1.0, alpha: 0.5, beta1 })
            .build()
            .unwrap()
    }

    #[test]
    fn violations_come_with_a_witness() {
        let c = CoefficientSet::builder(1, 1)
            .f(Expr::affine(0.0, &[(Var::Y, -3.0)]))
            .sigma(vec![Expr::constant(1.0)])
            .build()
            .unwrap();
        let plan = SamplePlan { count: 500, ..Default::default() };
        let rep = validate_hypotheses(&c, &plan).unwrap();
        assert!(!rep.passed());
        for chk in rep.checks.iter().filter(|c| !c.pass) {
            assert!(chk.witness.is_some(), "{}", chk.name);
            assert!(chk.worst_ratio > chk.bound);
        }
    }

    #[test]
    fn shift_rejects_inadmissible_boundary_paths() {
        let c = with_h(Expr::var(Var::Y), 1.0);
        assert!(exponential_shift(&c, 2.0, &[0.1, 0.2]).is_err());
        assert!(exponential_shift(&c, 2.0, &[0.0, 0.3, 0.2]).is_err());
        assert!(exponential_shift(&c, -1.0, &[0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn shifted_boundary_coefficient_is_strictly_monotone(beta1 in 0.01..3.0f64, k in 0.0..2.0f64) {
            let c = with_h(Expr::sum(vec![Expr::scale(beta1, Expr::var(Var::Y)), Expr::sin(Expr::var(Var::X(0)))]), beta1);
            let rate = choose_shift_rate(beta1);
            let s = exponential_shift(&c, rate, &[0.0, k]).unwrap();
            prop_assert!((s.beta2() + 1.0).abs() < 1e-12);
            let plan = SamplePlan { count: 200, ..Default::default() };
            let m = sampled_monotonicity(&s, k, &plan).unwrap();
            prop_assert!(m <= -1.0 + 1e-9, "{m}");
        }

        #[test]
        fn shift_round_trips(rate in 0.1..3.0f64, k in 0.0..3.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
            let s = exponential_shift(&with_h(Expr::zero(), 0.5), rate, &[0.0]).unwrap();
            let (mut yy, mut zz) = (y, [z]);
            s.forward(k, &mut yy, &mut zz);
            s.inverse(k, &mut yy, &mut zz);
            prop_assert!((yy - y).abs() < 1e-12 * (1.0 + y.abs()) && (zz[0] - z).abs() < 1e-12 * (1.0 + z.abs()));
        }
    }
}
