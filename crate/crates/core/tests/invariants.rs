use proptest::prelude::*;
use um_skeleton::io::{parse_space, write_space};
use um_skeleton::metric::{FiniteMetricSpace, PointMeasure};
use um_skeleton::nearly::{
    build_nearly_um_skeleton, check_mass_retention, default_max_level, doubling_profile, rescale_to_half, scale_level, ScaleSchedule,
};
use um_skeleton::skeleton::{build_skeleton, skeleton_measure, ultrametric_distance};
use um_skeleton::verify::verify_skeleton_tree;

fn euclidean(points: &[Vec<f64>]) -> FiniteMetricSpace {
    FiniteMetricSpace::from_fn(points.len(), |i, j| {
        points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    })
    .unwrap()
}

/// Distinct lattice points (integer coordinates keep every distance positive).
fn instance() -> impl Strategy<Value = (FiniteMetricSpace, PointMeasure)> {
    (1usize..=3)
        .prop_flat_map(|dim| prop::collection::btree_set(prop::collection::vec(0i32..40, dim), 1..24))
        .prop_flat_map(|set| {
            let n = set.len();
            let points: Vec<Vec<f64>> = set.into_iter().map(|p| p.into_iter().map(f64::from).collect()).collect();
            (Just(points), prop::collection::vec(1u32..100, n))
        })
        .prop_map(|(points, raw)| {
            let total: u32 = raw.iter().sum();
            let mu = PointMeasure::new(raw.iter().map(|&w| w as f64 / total as f64).collect()).unwrap();
            (euclidean(&points), mu)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_skeleton_check_passes((space, mu) in instance(), t in 2usize..=5) {
        let tree = build_skeleton(&space, &mu, t).unwrap();
        let v = verify_skeleton_tree(&space, &mu, &tree).unwrap();
        if let Some(c) = v.report.first_failure() {
            prop_assert!(false, "{} failed: {:?}", c.name, c.detail);
        }
    }

    #[test]
    fn rho_sandwiches_d((space, mu) in instance(), t in 2usize..=5) {
        let tree = build_skeleton(&space, &mu, t).unwrap();
        let points: Vec<usize> = tree.skeleton_points().iter().collect();
        for &x in &points {
            for &y in &points {
                let rho = ultrametric_distance(&tree, x, y).unwrap();
                let d = space.dist(x, y);
                prop_assert!(d <= rho && rho <= 8.0 * t as f64 * d);
            }
        }
    }

    #[test]
    fn nu_is_a_probability_on_u((space, mu) in instance(), t in 2usize..=4) {
        let tree = build_skeleton(&space, &mu, t).unwrap();
        let um = skeleton_measure(&tree).unwrap();
        prop_assert!((um.nu.total() - 1.0).abs() < 1e-12);
        for p in 0..space.len() {
            if !um.points.contains(p) {
                prop_assert_eq!(um.nu.weight(p), 0.0);
            }
        }
    }

    #[test]
    fn space_files_round_trip((space, mu) in instance()) {
        let text = write_space(&space, Some(&mu));
        let (s2, mu2) = parse_space(&text).unwrap();
        prop_assert_eq!(s2, space);
        prop_assert_eq!(mu2.unwrap(), mu);
    }

    #[test]
    fn constant_schedule_reduces_to_fixed_t((space, mu) in instance(), t in 2usize..=4) {
        prop_assume!(space.len() >= 2);
        let (scaled, _) = rescale_to_half(&space).unwrap();
        let profile = doubling_profile(&scaled, default_max_level(&scaled));
        let schedule = ScaleSchedule::constant(t, &profile).unwrap();
        let scheduled = build_nearly_um_skeleton(&scaled, &mu, &schedule).unwrap();
        prop_assert_eq!(&scheduled, &build_skeleton(&scaled, &mu, t).unwrap());
        let r = check_mass_retention(&scaled, &mu, &scheduled, &schedule).unwrap();
        for c in &r.report.checks {
            prop_assert!(c.pass, "{} failed: {:?}", c.name, c.detail);
        }
    }

    #[test]
    fn scale_level_matches_floor_of_log(x in 1e-300f64..1e300) {
        let level = scale_level(x).unwrap();
        // 2^-level >= x > 2^-(level+1)
        prop_assert!(2f64.powi(-(level as i32)) >= x);
        prop_assert!(2f64.powi(-(level as i32) - 1) < x);
    }
}
