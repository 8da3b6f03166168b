//! Results checked against recomputations that do not go through the code
//! under test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use um_skeleton::decomp::{bartal_decompose, brute_force_argmax_ratio};
use um_skeleton::instances::{generate, InstanceSpec};
use um_skeleton::metric::{FiniteMetricSpace, PointMeasure};
use um_skeleton::nearly::{
    build_nearly_um_skeleton, check_scalewise_distortion, default_max_level, doubling_profile, level_sets,
    rescale_to_half, schedule_from_epsilon,
};
use um_skeleton::skeleton::{
    build_skeleton, check_measure_growth, doubling_estimate, dyadic_radii, frostman_fit, skeleton_measure, SkeletonTree,
};
use um_skeleton::verify::verify_skeleton_tree;

/// `mu(C) / (max_a mu(B(a, diam/4) ∩ C))^(1/t)` from scratch.
fn naive_xi(space: &FiniteMetricSpace, w: &[f64], c: &[usize], t: usize) -> f64 {
    let mass: f64 = c.iter().map(|&p| w[p]).sum();
    if mass == 0.0 {
        return 0.0;
    }
    let diam = c
        .iter()
        .flat_map(|&a| c.iter().map(move |&b| (a, b)))
        .map(|(a, b)| space.dist(a, b))
        .fold(0.0, f64::max);
    let local = c
        .iter()
        .map(|&a| c.iter().filter(|&&b| space.dist(a, b) <= diam / 4.0).map(|&b| w[b]).sum::<f64>())
        .fold(0.0, f64::max);
    mass / local.powf(1.0 / t as f64)
}

#[test]
fn nu_is_the_path_product_of_xi_ratios() {
    let (space, mu) = generate(&InstanceSpec::cantor(2, 1.0 / 3.0)).unwrap();
    let tree = build_skeleton(&space, &mu, 2).unwrap();
    let um = skeleton_measure(&tree).unwrap();
    let w = mu.weights();
    let xi = |id: usize| naive_xi(&space, w, tree.node(id).members.members(), 2);
    for leaf in tree.leaves() {
        let mut product = 1.0;
        let mut v = leaf.id;
        while let Some(p) = tree.node(v).parent {
            let [c0, c1] = tree.node(p).children.unwrap();
            let sum = xi(c0) + xi(c1);
            product *= if sum == 0.0 { 0.5 } else { xi(v) / sum };
            v = p;
        }
        let p = leaf.members.members()[0];
        assert!((um.nu.weight(p) - product).abs() < 1e-12, "point {p}: {} vs {product}", um.nu.weight(p));
    }
}

#[test]
fn argmax_agrees_with_brute_force_on_random_small_spaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..200 {
        let n = rng.gen_range(2..=8);
        // Integer coordinates and weights make ties common.
        let xs: Vec<f64> = (0..n).map(|k| (k * 3 + rng.gen_range(0..3)) as f64).collect();
        let space = FiniteMetricSpace::from_fn(n, |i, j| (xs[i] - xs[j]).abs()).unwrap();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1..4) as f64).collect();
        let total: f64 = raw.iter().sum();
        let mu = PointMeasure::new(raw.iter().map(|w| w / total).collect()).unwrap();
        let z = space.all_points();
        let dec = bartal_decompose(&space, &mu, &z, rng.gen_range(2..=4)).unwrap();
        assert_eq!(dec.witness.x_p, brute_force_argmax_ratio(&space, &mu, &z).unwrap());
    }
}

#[test]
fn level_sets_match_a_scan_of_all_nodes() {
    let (space, mu) = generate(&InstanceSpec::cantor(3, 1.0 / 3.0)).unwrap();
    let (scaled, _) = rescale_to_half(&space).unwrap();
    let max_level = default_max_level(&scaled);
    let schedule = schedule_from_epsilon(&doubling_profile(&scaled, max_level), 0.5).unwrap();
    let tree = build_nearly_um_skeleton(&scaled, &mu, &schedule).unwrap();
    for i in 0..=(max_level as i64 + 2) {
        let threshold = 0.5f64.powi(i as i32);
        let mut brute: Vec<usize> = tree
            .nodes
            .iter()
            .filter(|n| n.delta <= threshold && n.parent.is_none_or(|p| tree.node(p).delta > threshold))
            .map(|n| n.id)
            .collect();
        let mut got = level_sets(&tree, i);
        brute.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, brute, "level {i}");
    }
}

#[test]
fn frostman_samples_on_a_line_have_closed_form() {
    // 33 points spaced 1/32 apart: a closed ball of radius r around the centre
    // holds min(2 floor(32 r) + 1, 33) points.
    let (space, _) = generate(&InstanceSpec::grid(1, 33)).unwrap();
    let space = space.map_distances(|d| d / 32.0).unwrap();
    let mu = PointMeasure::uniform(33);
    let radii = dyadic_radii(1.0 / 32.0, 1.0);
    let fit = frostman_fit(&space, &mu, &radii).unwrap();
    let expected: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| (r, ((2.0 * (32.0 * r).floor() + 1.0).min(33.0)) / 33.0))
        .collect();
    for (&(r, m), &(_, e)) in fit.samples.iter().zip(&expected) {
        assert!((m - e).abs() < 1e-12, "r = {r}: {m} vs {e}");
    }
    // Least-squares slope of ln M(r) against ln r.
    let k = expected.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = expected.iter().map(|&(r, m)| (r.ln(), m.ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    assert!((fit.exponent - cov / var).abs() < 1e-9, "{} vs {}", fit.exponent, cov / var);
}

#[test]
fn cantor_uniform_measure_has_the_expected_dimension() {
    let (space, mu) = generate(&InstanceSpec::cantor(7, 1.0 / 3.0)).unwrap();
    let fit = frostman_fit(&space, &mu, &dyadic_radii(3f64.powi(-7), 1.0)).unwrap();
    let alpha = 2f64.ln() / 3f64.ln();
    assert!((fit.exponent - alpha).abs() < 0.1, "{}", fit.exponent);
}

#[test]
fn cantor_level_three_xi_is_subadditive() {
    let (space, mu) = generate(&InstanceSpec::cantor(3, 1.0 / 3.0)).unwrap();
    let tree = build_skeleton(&space, &mu, 2).unwrap();
    let w = mu.weights();
    for node in &tree.nodes {
        if let Some([c0, c1]) = node.children {
            let xi = |id: usize| naive_xi(&space, w, tree.node(id).members.members(), 2);
            assert!(xi(node.id) <= (xi(c0) + xi(c1)) * (1.0 + 1e-9));
        }
    }
}

#[test]
fn cantor_level_four_measure_growth() {
    let (space, mu) = generate(&InstanceSpec::cantor(4, 1.0 / 3.0)).unwrap();
    let tree = build_skeleton(&space, &mu, 2).unwrap();
    let um = skeleton_measure(&tree).unwrap();
    let report = check_measure_growth(&space, &mu, &um, 2, doubling_estimate(&space, &tree)).unwrap();
    for c in &report.checks {
        assert!(c.pass && c.worst_slack.is_none_or(|s| s >= 0.0), "{c:?}");
    }
}

fn separation_holds(space: &FiniteMetricSpace, tree: &SkeletonTree) -> bool {
    tree.nodes.iter().all(|node| {
        let Some([c0, c1]) = node.children else { return true };
        let t = node.witness.as_ref().unwrap().t;
        tree.node(c0).members.iter().all(|p| {
            tree.node(c1).members.iter().all(|q| space.dist(p, q) >= node.delta / (8 * t) as f64)
        })
    })
}

#[test]
fn scheduled_grid_separates_every_split() {
    let (space, mu) = generate(&InstanceSpec::grid(1, 32)).unwrap();
    let (scaled, _) = rescale_to_half(&space).unwrap();
    let schedule = schedule_from_epsilon(&doubling_profile(&scaled, default_max_level(&scaled)), 0.5).unwrap();
    let tree = build_nearly_um_skeleton(&scaled, &mu, &schedule).unwrap();
    assert!(separation_holds(&scaled, &tree));
}

#[test]
fn cantor_level_five_nearly_lipschitz_constant_is_finite() {
    let (space, mu) = generate(&InstanceSpec::cantor(5, 1.0 / 3.0)).unwrap();
    let (scaled, _) = rescale_to_half(&space).unwrap();
    let schedule = schedule_from_epsilon(&doubling_profile(&scaled, default_max_level(&scaled)), 0.5).unwrap();
    let tree = build_nearly_um_skeleton(&scaled, &mu, &schedule).unwrap();
    let r = check_scalewise_distortion(&scaled, &tree, &schedule, 0.9).unwrap();
    assert!(r.report.all_pass());
    let c = r.nearly_lipschitz_constant.unwrap();
    assert!(c.is_finite() && c > 0.0);
}

#[test]
fn grid_doubling_profile_on_a_half_segment() {
    // 64 points spaced 1/126 apart on a segment of length 1/2.
    let space = FiniteMetricSpace::from_fn(64, |i, j| (j - i) as f64 / 126.0).unwrap();
    let profile: Vec<usize> = doubling_profile(&space, 8).iter().map(|c| c.count).collect();
    // Pieces of diameter 2^-i / 16 hold 4 and 2 points at levels 1 and 2.
    assert_eq!(profile[..2], [16, 32]);
    // From level 3 on pieces are single points, so the count is the largest
    // ball: 2 floor(126 * 2^-i) + 1 points.
    for i in 3..=8 {
        let ball = (2.0 * (126.0 * 0.5f64.powi(i)).floor() + 1.0).min(64.0) as usize;
        assert_eq!(profile[i as usize - 1], ball, "level {i}");
    }
    assert!(profile.iter().all(|&c| c <= 32));
}

#[test]
fn fixed_t_suite_passes_on_snowflaked_random_sets() {
    for seed in 1..=4 {
        let (space, mu) = generate(&InstanceSpec::snowflake(0.5, InstanceSpec::random_doubling(seed))).unwrap();
        let tree = build_skeleton(&space, &mu, 3).unwrap();
        let v = verify_skeleton_tree(&space, &mu, &tree).unwrap();
        assert!(v.report.all_pass(), "{:?}", v.report.first_failure());
    }
}
