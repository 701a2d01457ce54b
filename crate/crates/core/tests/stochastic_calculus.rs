use approx::assert_abs_diff_eq;
use gbdsde::calculus::{integrate, sample_paths, IntegralConvention, PathBundle};
use gbdsde::grid::TimeGrid;
use gbdsde::rng::{Motion, Stream};
use gbdsde::stats::{empirical_order, mean_se};
use proptest::prelude::*;

proptest! {
    #[test]
    fn coarsening_keeps_the_path_at_coarse_nodes(seed in any::<u64>(), factor in 1usize..8) {
        let grid = TimeGrid::new(0.0, 1.0, 8 * factor).unwrap();
        let fine = sample_paths(grid, 2, seed, 3).unwrap();
        let coarse = fine.coarsen(factor).unwrap();
        prop_assert_eq!(coarse.grid().steps(), 8);
        for s in 0..3 {
            for i in 0..=8 {
                prop_assert_eq!(coarse.w(s, i), fine.w(s, i * factor));
                prop_assert_eq!(coarse.b(s, i), fine.b(s, i * factor));
            }
        }
    }

    #[test]
    fn stratonovich_is_the_mean_of_the_ito_sums(seed in any::<u64>()) {
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let p = sample_paths(grid, 1, seed, 1).unwrap();
        let w = p.w_coord(0, 0);
        let f = integrate(&w, &w, IntegralConvention::ForwardIto, 0, 64).unwrap();
        let b = integrate(&w, &w, IntegralConvention::BackwardIto, 0, 64).unwrap();
        let s = integrate(&w, &w, IntegralConvention::Stratonovich, 0, 64).unwrap();
        prop_assert!((s - 0.5 * (f + b)).abs() < 1e-12);
        // telescoping: int W o dW = W_T^2 / 2 exactly on the grid
        prop_assert!((s - 0.5 * w[64] * w[64]).abs() < 1e-12);
    }
}

#[test]
fn streams_depend_only_on_their_key() {
    let draw = |seed, s, m| {
        let mut r = Stream::new(seed, s, m);
        (0..4).map(|_| r.normal()).collect::<Vec<_>>()
    };
    assert_eq!(draw(1, 2, Motion::W), draw(1, 2, Motion::W));
    assert_ne!(draw(1, 2, Motion::W), draw(1, 2, Motion::B));
    assert_ne!(draw(1, 2, Motion::W), draw(1, 3, Motion::W));
}

#[test]
fn increments_have_the_right_variance() {
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let p = sample_paths(grid, 1, 5, 20_000).unwrap();
    let sq: Vec<f64> = (0..20_000).map(|s| p.dw(s, 3, 0).powi(2)).collect();
    let (m, se) = mean_se(&sq);
    assert!((m - 0.1).abs() < 4.0 * se, "{m} +- {se}");
}

#[test]
fn shared_backward_paths_are_shared() {
    let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
    let p = PathBundle::sample(grid, 1, 9, 5, Some(0)).unwrap();
    for s in 1..5 {
        assert_eq!(p.b_path(s), p.b_path(0));
        assert_ne!(p.w_path(s), p.w_path(0));
    }
}

#[test]
fn forward_ito_sum_has_the_quadratic_variation_correction() {
    // sum W dW = (W_T^2 - sum dW^2) / 2
    let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
    let p = sample_paths(grid, 1, 3, 1).unwrap();
    let w = p.w_coord(0, 0);
    let qv: f64 = w.windows(2).map(|a| (a[1] - a[0]).powi(2)).sum();
    let ito = integrate(&w, &w, IntegralConvention::ForwardIto, 0, 1000).unwrap();
    assert_abs_diff_eq!(ito, 0.5 * (w[1000] * w[1000] - qv), epsilon = 1e-12);
    assert!((qv - 1.0).abs() < 0.2);
}

#[test]
fn empirical_order_recovers_power_laws() {
    let h = [0.1, 0.05, 0.025];
    let err: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
    assert_abs_diff_eq!(empirical_order(&h, &err), 1.5, epsilon = 1e-12);
}
