use gbdsde::catalog::CoefSpec;
use gbdsde::config::ExperimentConfig;
use gbdsde::expr::{Args, Expr, Var};
use gbdsde::grid::TimeGrid;
use gbdsde::report::{emit_report, CriterionResult};
use proptest::prelude::*;

const CONFIG: &str = r#"
[problem]
n = 1
d = 1
domain = "interval(0,1)"
start = [0.25]
f = { kind = "affine", constant = 0.1, terms = { y = -1.0 } }
g = [{ kind = "trig", func = "sin", var = "y", amp = 0.2 }]
h = { kind = "const", value = 0.5 }
l = { kind = "linear", terms = { x = 2.0 } }
b = [{ kind = "zero" }]
sigma = [{ kind = "const", value = 1.0 }]

[grid]
t_end = 0.5
dt = 0.05

[monte_carlo]
scenarios = 500
seed = 11
basis = { kind = "polynomial", degree = 2 }

[suite]
name = "field"
"#;

fn sample_expr() -> Expr {
    // sin(x y) + exp(0.3 z) * x^2 - t
    let x = Expr::var(Var::X(0));
    Expr::sum(vec![
        Expr::sin(Expr::product(vec![x.clone(), Expr::var(Var::Y)])),
        Expr::product(vec![Expr::exp(Expr::scale(0.3, Expr::var(Var::Z(0)))), x.clone(), x]),
        Expr::scale(-1.0, Expr::var(Var::T)),
    ])
}

proptest! {
    #[test]
    fn partials_match_central_differences(t in 0.0..1.0f64, x in -2.0..2.0f64, y in -2.0..2.0f64, z in -2.0..2.0f64) {
        let e = sample_expr();
        let h = 1e-5;
        let at = |t: f64, x: f64, y: f64, z: f64| e.eval(&Args::new(t, &[x], y, &[z]));
        let cases = [
            (Var::X(0), (at(t, x + h, y, z) - at(t, x - h, y, z)) / (2.0 * h)),
            (Var::Y, (at(t, x, y + h, z) - at(t, x, y - h, z)) / (2.0 * h)),
            (Var::Z(0), (at(t, x, y, z + h) - at(t, x, y, z - h)) / (2.0 * h)),
            (Var::T, (at(t + h, x, y, z) - at(t - h, x, y, z)) / (2.0 * h)),
        ];
        for (v, fd) in cases {
            let exact = e.partial(v).eval(&Args::new(t, &[x], y, &[z]));
            prop_assert!((exact - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{v:?}: {exact} vs {fd}");
        }
    }

    #[test]
    fn grid_times_are_indexed_back(steps in 1usize..500, t0 in -1.0..1.0f64, len in 0.01..5.0f64) {
        let g = TimeGrid::new(t0, t0 + len, steps).unwrap();
        for i in [0, steps / 2, steps] {
            prop_assert_eq!(g.index_of(g.time(i)), Some(i));
        }
        prop_assert!((g.time(steps) - (t0 + len)).abs() < 1e-12);
    }

    #[test]
    fn config_overrides_round_trip(seed in any::<u64>(), scenarios in 100usize..100_000) {
        let mut cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
        cfg.monte_carlo.seed = seed;
        cfg.monte_carlo.scenarios = scenarios;
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(cfg, again);
    }
}

#[test]
fn catalog_specs_build_the_expected_functions() {
    let spec = CoefSpec::affine(0.5, &[("x", 2.0), ("y", -1.0)]);
    let e = spec.to_expr().unwrap();
    assert_eq!(e.eval(&Args::new(0.0, &[3.0], 4.0, &[])), 0.5 + 6.0 - 4.0);
    assert!(CoefSpec::affine(0.0, &[("w", 1.0)]).to_expr().is_err());
}

#[test]
fn config_yields_consistent_objects() {
    let cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    let c = cfg.coefficients().unwrap();
    assert_eq!((c.n(), c.d()), (1, 1));
    assert_eq!(c.l(&[0.3]), 0.6);
    assert!(!c.g_is_zero());
    assert_eq!(cfg.time_grid().unwrap().steps(), 10);
    assert!(cfg.domain().unwrap().contains_closure(&[1.0]));
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let cases = [
        CONFIG.replace("start = [0.25]", "start = [1.5]"),
        CONFIG.replace("dt = 0.05", "dt = -0.05"),
        CONFIG.replace("interval(0,1)", "interval(1,0)"),
        CONFIG.replace("[suite]", "[suite]\ncriteria = [11]"),
        CONFIG.replace("seed = 11", "seed = 11\nunknown = 1"),
    ];
    for text in cases {
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }
}

#[test]
fn report_rows_follow_results() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let rs = [CriterionResult::at_most("rmse", 0.01, 0.05), CriterionResult::holds("finite", true)];
    assert!(emit_report(&rs, &path).unwrap());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("rmse,1.0000000000e-2,<= 5e-2,PASS"), "{}", lines[1]);
    assert_eq!(lines[3], "OVERALL,,,PASS");
}
