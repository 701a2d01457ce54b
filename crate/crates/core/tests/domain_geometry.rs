use gbdsde::domain::{Location, SmoothDomain};
use proptest::prelude::*;

proptest! {
    #[test]
    fn projection_lands_in_the_closure_and_is_idempotent(x in -5.0..5.0f64, y in -5.0..5.0f64) {
        let d = SmoothDomain::ball(vec![0.5, -0.5], 1.5).unwrap();
        let mut p = [x, y];
        let moved = d.project(&mut p);
        prop_assert!(d.contains_closure(&p));
        prop_assert!(moved >= 0.0);
        let before = p;
        prop_assert!(d.project(&mut p) < 1e-12);
        prop_assert!((p[0] - before[0]).abs() < 1e-12 && (p[1] - before[1]).abs() < 1e-12);
    }

    #[test]
    fn projection_is_the_nearest_point_of_an_interval(x in -3.0..3.0f64) {
        let d = SmoothDomain::interval(-1.0, 2.0).unwrap();
        let mut p = [x];
        let moved = d.project(&mut p);
        prop_assert_eq!(p[0], x.clamp(-1.0, 2.0));
        prop_assert!((moved - (x - p[0]).abs()).abs() < 1e-15);
    }

    #[test]
    fn ball_normals_point_inward_with_unit_length(theta in 0.0..std::f64::consts::TAU) {
        let d = SmoothDomain::ball(vec![0.0, 0.0], 2.0).unwrap();
        let x = [2.0 * theta.cos(), 2.0 * theta.sin()];
        prop_assert_eq!(d.classify(&x), Location::Boundary);
        let n = d.inward_normal(&x).unwrap();
        prop_assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
        prop_assert!(n[0] * x[0] + n[1] * x[1] < 0.0);
    }
}

#[test]
fn interval_geometry() {
    let d = SmoothDomain::interval(0.0, 1.0).unwrap();
    assert_eq!(d.classify(&[0.5]), Location::Interior);
    assert_eq!(d.classify(&[1.5]), Location::Exterior);
    assert_eq!(d.inward_normal(&[0.0]).unwrap(), vec![1.0]);
    assert_eq!(d.inward_normal(&[1.0]).unwrap(), vec![-1.0]);
    assert!(d.inward_normal(&[0.5]).is_err());
    assert_eq!(d.diameter(), 1.0);
    assert!(d.phi(&[0.5]) > 0.0 && d.phi(&[2.0]) < 0.0);
}

#[test]
fn domains_parse_from_text() {
    let d: SmoothDomain = "ball(0,0,0,1)".parse().unwrap();
    assert_eq!(d.dim(), 3);
    assert!("annulus(1,2)".parse::<SmoothDomain>().is_err());
    assert!(SmoothDomain::ball(vec![0.0], -1.0).is_err());
}
