use gbdsde::calculus::{sample_paths, PathBundle};
use gbdsde::coefficients::CoefficientSet;
use gbdsde::domain::SmoothDomain;
use gbdsde::expr::{Expr, Var};
use gbdsde::grid::TimeGrid;
use gbdsde::reflected::{simulate_reflected, skorokhod_oracle_1d, skorokhod_oracle_bridge};
use proptest::prelude::*;

fn brownian() -> CoefficientSet {
    CoefficientSet::builder(1, 1).sigma(vec![Expr::constant(1.0)]).build().unwrap()
}

proptest! {
    #[test]
    fn skorokhod_map_is_a_reflection(x0 in 0.0..2.0f64, incs in prop::collection::vec(-1.0..1.0f64, 1..200)) {
        let mut w = vec![0.0];
        for d in incs {
            w.push(w.last().unwrap() + d);
        }
        let (x, k) = skorokhod_oracle_1d(x0, &w);
        for i in 0..w.len() {
            prop_assert!(x[i] >= -1e-12);
            prop_assert!((x[i] - (x0 + w[i] + k[i])).abs() < 1e-12);
            if i > 0 {
                prop_assert!(k[i] >= k[i - 1]);
                // k grows only when X sits at 0
                if k[i] > k[i - 1] {
                    prop_assert!(x[i].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bridge_minimum_dominates_the_grid_minimum(seed in any::<u64>(), x0 in 0.0..1.0f64) {
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let b = sample_paths(grid, 1, seed, 1).unwrap();
        let w = b.w_coord(0, 0);
        let (_, k_grid) = skorokhod_oracle_1d(x0, &w);
        let (x, k) = skorokhod_oracle_bridge(x0, &w, grid.dt(), seed, 0);
        for i in 0..w.len() {
            prop_assert!(k[i] >= k_grid[i] - 1e-15);
            prop_assert!(x[i] >= -1e-12);
        }
    }
}

#[test]
fn paths_stay_in_an_interval_and_k_is_monotone() {
    let domain = SmoothDomain::interval(0.0, 1.0).unwrap();
    let coeffs = CoefficientSet::builder(1, 1)
        .b(vec![Expr::scale(0.5, Expr::sin(Expr::var(Var::X(0))))])
        .sigma(vec![Expr::constant(1.0)])
        .build()
        .unwrap();
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 200).unwrap(), 1, 4, 200, None).unwrap();
    let ens = simulate_reflected(&coeffs, &domain, 0.0, &[0.9], &bundle).unwrap();
    assert_eq!(ens.len() + ens.excluded(), 200);
    for j in 0..ens.len() {
        for i in 0..=200 {
            assert!(domain.contains_closure(ens.x(i, j)));
            if i > 0 {
                assert!(ens.k(i, j) >= ens.k(i - 1, j));
                if ens.k(i, j) > ens.k(i - 1, j) {
                    assert!(ens.on_boundary(i, j));
                }
            }
        }
    }
}

#[test]
fn the_scheme_matches_the_exact_map_on_the_half_line_grid() {
    // On (0, L) with L large the upper end is never reached and projection
    // of a Brownian step reproduces the discrete Skorokhod map.
    let domain = SmoothDomain::interval(0.0, 50.0).unwrap();
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 500).unwrap(), 1, 8, 50, None).unwrap();
    let ens = simulate_reflected(&brownian(), &domain, 0.0, &[0.1], &bundle).unwrap();
    for j in 0..ens.len() {
        let (x, k) = skorokhod_oracle_1d(0.1, &bundle.w_coord(ens.id(j), 0));
        for i in 0..=500 {
            assert!((ens.x(i, j)[0] - x[i]).abs() < 1e-10);
            assert!((ens.k(i, j) - k[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn starting_outside_the_domain_is_rejected() {
    let domain = SmoothDomain::interval(0.0, 1.0).unwrap();
    let bundle = PathBundle::sample(TimeGrid::new(0.0, 1.0, 10).unwrap(), 1, 1, 5, None).unwrap();
    assert!(simulate_reflected(&brownian(), &domain, 0.0, &[2.0], &bundle).is_err());
    assert!(simulate_reflected(&brownian(), &domain, 0.05, &[0.5], &bundle).is_err());
}
