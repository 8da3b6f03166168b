//! Scale-scheduled skeletons: the split parameter grows as clusters shrink,
//! so almost all of the mass survives while the ultrametric stays within a
//! slowly growing factor of the metric at every scale.
//!
//! The schedule is driven by the modulus of doubling `lambda(2^-i)`, the
//! number of pieces of diameter `2^-i / 16` needed to cover a set of
//! diameter `2^-i`:
//!
//! ```text
//! eta(i) = log2 ln(e * lambda(2^-i)) / i
//! t(i)   = ceil(2^(i * (eta(i) + 2 log2(e) / sqrt(i))) / epsilon)
//! ```
//!
//! A cluster of diameter `D` is split with `t(floor(-log2 D))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{greedy_cover_count, Cluster, CoverEstimate, FiniteMetricSpace, PointMeasure};
use crate::report::{CheckReport, Tally};
use crate::skeleton::{grow_tree, NodeId, SkeletonTree, MASS_TOLERANCE};

/// `floor(-log2 x)` for positive finite `x`, exact at powers of two.
pub fn scale_level(x: f64) -> Option<i64> {
    if !(x > 0.0) || !x.is_finite() {
        return None;
    }
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    // x = m * 2^e with m in [1, 2)
    let (e, is_power) = if biased == 0 {
        let top = 63 - mantissa.leading_zeros() as i64;
        (top - 1074, mantissa == 1u64 << top)
    } else {
        (biased - 1023, mantissa == 0)
    };
    Some(if is_power { -e } else { -e - 1 })
}

/// Finest level worth scheduling: `ceil(-log2(min positive distance)) + 1`.
pub fn default_max_level(space: &FiniteMetricSpace) -> usize {
    match space.min_positive_distance() {
        Some(d) => ((-d.log2()).ceil().max(0.0) as usize) + 1,
        None => 1,
    }
}

/// `lambda(2^-i)` estimates for `i = 1..=max_level` (index `i - 1`).
///
/// Any subset of diameter `delta` lies in the closed ball of radius `delta`
/// around each of its points, so the greedy count of pieces of diameter
/// `delta / 16` covering `B(x, delta)`, maximized over centres `x`, bounds the
/// count for every such subset.
pub fn doubling_profile(space: &FiniteMetricSpace, max_level: usize) -> Vec<CoverEstimate> {
    let all = space.all_points();
    (1..=max_level)
        .map(|i| {
            let delta = 2f64.powi(-(i as i32));
            let mut best = 1usize;
            for x in 0..space.len() {
                let row = space.row(x);
                let ball: Cluster = all.iter().filter(|&y| row[y] <= delta).collect();
                if ball.len() > best {
                    best = best.max(greedy_cover_count(space, &ball, delta / 16.0).count);
                }
            }
            CoverEstimate {
                count: best,
                is_upper_bound: true,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    /// `None` for hand-built (constant) schedules.
    pub epsilon: Option<f64>,
    pub max_level: usize,
    pub lambda_profile: Vec<CoverEstimate>,
    pub eta: Vec<f64>,
    pub t_of: Vec<usize>,
}

impl ScaleSchedule {
    /// Same `t` at every level.
    pub fn constant(t: usize, profile: &[CoverEstimate]) -> Result<Self> {
        if t < 2 {
            return Err(Error::InvalidParameter(format!("t must be at least 2, got {t}")));
        }
        if profile.is_empty() {
            return Err(Error::InvalidParameter("empty doubling profile".into()));
        }
        Ok(Self {
            epsilon: None,
            max_level: profile.len(),
            lambda_profile: profile.to_vec(),
            eta: etas(profile),
            t_of: vec![t; profile.len()],
        })
    }

    pub fn t_at(&self, level: i64) -> Result<usize> {
        if level < 1 || level as usize > self.max_level {
            return Err(Error::MissingScheduleLevel(level));
        }
        Ok(self.t_of[level as usize - 1])
    }

    pub fn lambda_at(&self, level: usize) -> usize {
        self.lambda_profile[level - 1].count
    }
}

fn etas(profile: &[CoverEstimate]) -> Vec<f64> {
    profile
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let i = (k + 1) as f64;
            (1.0 + (c.count as f64).ln()).log2() / i
        })
        .collect()
}

/// Builds `t(i)` from a doubling profile, then forces it to be
/// non-decreasing (running maximum) and at least 2.
pub fn schedule_from_epsilon(profile: &[CoverEstimate], epsilon: f64) -> Result<ScaleSchedule> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if profile.is_empty() {
        return Err(Error::InvalidParameter("empty doubling profile".into()));
    }
    let eta = etas(profile);
    let mut t_of = Vec::with_capacity(eta.len());
    let mut running = 2usize;
    for (k, &e) in eta.iter().enumerate() {
        let i = (k + 1) as f64;
        let exponent = i * (e + 2.0 * std::f64::consts::LOG2_E / i.sqrt());
        let raw = (2f64.powf(exponent) / epsilon).ceil();
        if !(raw < 1e15) {
            return Err(Error::InvalidParameter(format!(
                "t({}) = {raw} is too large to schedule",
                k + 1
            )));
        }
        running = running.max(raw as usize);
        t_of.push(running);
    }
    Ok(ScaleSchedule {
        epsilon: Some(epsilon),
        max_level: profile.len(),
        lambda_profile: profile.to_vec(),
        eta,
        t_of,
    })
}

/// Scales distances so the diameter is exactly 1/2; returns the space and
/// `alpha = 1 / (2 diam)`.
pub fn rescale_to_half(space: &FiniteMetricSpace) -> Result<(FiniteMetricSpace, f64)> {
    let diam = space.max_distance();
    if space.len() < 2 || !(diam > 0.0) {
        return Err(Error::InvalidParameter(
            "rescaling needs at least two distinct points".into(),
        ));
    }
    let twice = 2.0 * diam;
    // d / (2 diam) maps diam to exactly 1/2 and never exceeds it.
    Ok((space.map_distances(|d| d / twice)?, 1.0 / twice))
}

pub fn build_nearly_um_skeleton(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    schedule: &ScaleSchedule,
) -> Result<SkeletonTree> {
    let root_level = scale_level(space.max_distance()).unwrap_or(1);
    let xi_t = schedule.t_at(root_level)?;
    grow_tree(space, mu, xi_t, |delta| {
        let level = scale_level(delta).ok_or_else(|| {
            Error::InvalidParameter(format!("cannot schedule a cluster of diameter {delta}"))
        })?;
        schedule.t_at(level)
    })
}

/// Shallowest nodes with `delta <= 2^-i`, in depth-first order.
pub fn level_sets(tree: &SkeletonTree, i: i64) -> Vec<NodeId> {
    let threshold = 2f64.powi(-(i as i32));
    let mut out = Vec::new();
    let mut stack = vec![tree.root];
    while let Some(id) = stack.pop() {
        let node = tree.node(id);
        if node.delta <= threshold {
            out.push(id);
        } else if let Some([c0, c1]) = node.children {
            stack.push(c1);
            stack.push(c0);
        }
    }
    out
}

fn level_union(tree: &SkeletonTree, ids: &[NodeId]) -> Cluster {
    ids.iter().flat_map(|&id| tree.node(id).members.iter()).collect()
}

fn is_ancestor(tree: &SkeletonTree, a: NodeId, mut b: NodeId) -> bool {
    while let Some(p) = tree.node(b).parent {
        if p == a {
            return true;
        }
        b = p;
    }
    false
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassRetention {
    pub report: CheckReport,
    /// `mu(U)`.
    pub mass_retained: f64,
    /// `prod_i lambda(2^-i)^(-1/t(i))`.
    pub product_bound: f64,
    pub exceeds_one_minus_epsilon: Option<bool>,
}

pub fn check_mass_retention(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    tree: &SkeletonTree,
    schedule: &ScaleSchedule,
) -> Result<MassRetention> {
    if tree.n_points != space.len() || mu.len() != space.len() {
        return Err(Error::Mismatch("tree, space and measure sizes differ".into()));
    }
    let levels: Vec<Vec<NodeId>> = (1..=schedule.max_level as i64 + 1)
        .map(|i| level_sets(tree, i))
        .collect();
    let unions: Vec<Cluster> = levels.iter().map(|l| level_union(tree, l)).collect();
    let masses: Vec<f64> = unions.iter().map(|u| mu.mass(u)).collect();

    let mut decrease = Tally::new("level_mass_decrease", MASS_TOLERANCE);
    let mut antichain = Tally::new("level_antichain", 0.0);
    let mut structure = Tally::new("level_transition_structure", 0.0);

    for (k, level) in levels.iter().enumerate() {
        let i = k + 1;
        for (a_pos, &a) in level.iter().enumerate() {
            for &b in &level[a_pos + 1..] {
                antichain.holds(
                    !is_ancestor(tree, a, b) && !is_ancestor(tree, b, a),
                    format!("level {i}: nodes {a} and {b} are nested"),
                );
            }
        }
        if k + 1 < unions.len() {
            antichain.holds(
                unions[k + 1].is_subset(&unions[k]),
                format!("level {} union is not inside level {i} union", i + 1),
            );
        }
        if i <= schedule.max_level {
            let factor = (schedule.lambda_at(i) as f64).powf(1.0 / schedule.t_of[i - 1] as f64);
            decrease.le(masses[k], factor * masses[k + 1], || format!("level {i}"));

            let next = &levels[k + 1];
            let half = 2f64.powi(-(i as i32) - 1);
            for &u in level {
                if next.contains(&u) {
                    continue;
                }
                let mut expected = Vec::new();
                let mut w = u;
                while tree.node(w).delta > half {
                    let Some([c0, c1]) = tree.node(w).children else { break };
                    expected.push(c0);
                    w = c1;
                }
                expected.push(w);
                expected.sort_unstable();
                let mut found: Vec<NodeId> = next
                    .iter()
                    .copied()
                    .filter(|&v| v == u || is_ancestor(tree, u, v))
                    .collect();
                found.sort_unstable();
                structure.holds(
                    expected == found,
                    format!("level {i}: node {u} has level-{} descendants {found:?}, expected {expected:?}", i + 1),
                );
            }
        }
    }

    let skeleton = tree.skeleton_points();
    let mut intersection = Tally::new("level_intersection_is_skeleton", 0.0);
    let common = unions.iter().skip(1).fold(unions[0].clone(), |acc, u| acc.intersection(u));
    intersection.holds(common == skeleton, "intersection of level unions differs from U");

    let mass_retained = mu.mass(&skeleton);
    let product_bound = (1..=schedule.max_level)
        .map(|i| (schedule.lambda_at(i) as f64).powf(-1.0 / schedule.t_of[i - 1] as f64))
        .product::<f64>();
    let mut product = Tally::new("mass_retention_product", MASS_TOLERANCE);
    product.ge(mass_retained, product_bound * mu.total(), || "mu(U) >= prod lambda^(-1/t)".into());

    let mut report = CheckReport::default();
    report.push(decrease.finish());
    report.push(antichain.finish());
    report.push(structure.finish());
    report.push(intersection.finish());
    report.push(product.finish());

    let exceeds = schedule.epsilon.map(|eps| {
        let mut t = Tally::new("mass_retention_epsilon", 0.0);
        let ok = mass_retained > (1.0 - eps) * mu.total();
        t.holds(ok, format!("mu(U) = {mass_retained} <= 1 - {eps}"));
        report.push(t.finish());
        ok
    });

    Ok(MassRetention {
        report,
        mass_retained,
        product_bound,
        exceeds_one_minus_epsilon: exceeds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalewiseDistortion {
    pub report: CheckReport,
    pub beta: f64,
    /// `max rho(x, y) / d(x, y)^beta`; `None` with fewer than two points.
    pub nearly_lipschitz_constant: Option<f64>,
}

/// Checks `d <= rho <= 8 t(floor(-log2 d)) d` on every pair of `U`, exactly.
pub fn check_scalewise_distortion(
    space: &FiniteMetricSpace,
    tree: &SkeletonTree,
    schedule: &ScaleSchedule,
    beta: f64,
) -> Result<ScalewiseDistortion> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
    }
    let mut lower = Tally::new("scalewise_lower", 0.0);
    let mut upper = Tally::new("scalewise_upper", 0.0);
    let mut constant: Option<f64> = None;
    let mut missing = None;
    tree.for_each_pair(|x, y, rho| {
        let d = space.dist(x, y);
        lower.le(d, rho, || format!("pair ({x}, {y})"));
        match scale_level(d).map(|l| schedule.t_at(l)) {
            Some(Ok(t)) => {
                upper.le(rho, 8.0 * t as f64 * d, || format!("pair ({x}, {y})"));
            }
            _ => missing = Some((x, y)),
        }
        let c = rho / d.powf(beta);
        constant = Some(constant.map_or(c, |w: f64| w.max(c)));
    });
    if let Some((x, y)) = missing {
        upper.holds(false, format!("no schedule level for pair ({x}, {y})"));
    }
    let mut report = CheckReport::default();
    report.push(lower.finish());
    report.push(upper.finish());
    Ok(ScalewiseDistortion {
        report,
        beta,
        nearly_lipschitz_constant: constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_level_floor_convention() {
        assert_eq!(scale_level(0.5), Some(1));
        assert_eq!(scale_level(0.25), Some(2));
        assert_eq!(scale_level(0.3), Some(1));
        assert_eq!(scale_level(0.2), Some(2));
        assert_eq!(scale_level(1.0), Some(0));
        assert_eq!(scale_level(3.0), Some(-2));
        assert_eq!(scale_level(f64::MIN_POSITIVE / 4.0), Some(1024));
        assert_eq!(scale_level(f64::from_bits(3)), Some(1072));
        assert_eq!(scale_level(0.0), None);
        for i in 1..60 {
            let x = 2f64.powi(-i);
            assert_eq!(scale_level(x), Some(i as i64));
            assert_eq!(scale_level(x * 1.0000001), Some(i as i64 - 1));
            assert_eq!(scale_level(x * 0.9999999), Some(i as i64));
        }
    }

    #[test]
    fn schedule_example_from_arithmetic() {
        let profile = [CoverEstimate {
            count: 2,
            is_upper_bound: true,
        }];
        let s = schedule_from_epsilon(&profile, 0.5).unwrap();
        // t(1) = ceil(ln(2e) * e^2 / 0.5) = ceil(25.02...)
        let direct = (1.0 + 2f64.ln()) * std::f64::consts::E.powi(2) / 0.5;
        assert!((direct - 25.0216).abs() < 1e-3);
        assert_eq!(s.t_of, vec![26]);
        assert!((s.eta[0] - (1.0 + 2f64.ln()).log2()).abs() < 1e-15);
    }

    #[test]
    fn unit_profile_collapses() {
        let profile = vec![
            CoverEstimate {
                count: 1,
                is_upper_bound: true
            };
            5
        ];
        let s = schedule_from_epsilon(&profile, 0.25).unwrap();
        assert!(s.eta.iter().all(|&e| e == 0.0));
        for (k, &t) in s.t_of.iter().enumerate() {
            let i = (k + 1) as f64;
            assert_eq!(t, (4.0 * (2.0 * i.sqrt()).exp()).ceil() as usize);
        }
    }

    #[test]
    fn schedule_rejects_bad_epsilon() {
        let profile = [CoverEstimate {
            count: 1,
            is_upper_bound: true,
        }];
        assert!(schedule_from_epsilon(&profile, 0.0).is_err());
        assert!(schedule_from_epsilon(&profile, 1.0).is_err());
        assert!(schedule_from_epsilon(&[], 0.5).is_err());
    }

    #[test]
    fn rescale_examples() {
        let half = FiniteMetricSpace::from_fn(3, |i, j| (j - i) as f64 * 0.25).unwrap();
        let (s, alpha) = rescale_to_half(&half).unwrap();
        assert_eq!(alpha, 1.0);
        assert_eq!(s, half);
        let four = FiniteMetricSpace::from_fn(3, |i, j| (j - i) as f64 * 2.0).unwrap();
        let (s, alpha) = rescale_to_half(&four).unwrap();
        assert_eq!(alpha, 0.125);
        assert_eq!(s.max_distance(), 0.5);
        let one = FiniteMetricSpace::from_fn(1, |_, _| 0.0).unwrap();
        assert!(rescale_to_half(&one).is_err());
        let odd = FiniteMetricSpace::from_fn(4, |i, j| (j - i) as f64 * 0.37).unwrap();
        assert_eq!(rescale_to_half(&odd).unwrap().0.max_distance(), 0.5);
    }

    #[test]
    fn profile_of_sparse_space() {
        // min distance 0.3, diameter 0.5
        let xs: [f64; 3] = [0.0, 0.3, 0.5];
        let s = FiniteMetricSpace::from_fn(3, |i, j| (xs[i] - xs[j]).abs()).unwrap();
        let p = doubling_profile(&s, 4);
        assert_eq!(p[1].count, 2);
        assert!(p[2..].iter().all(|c| c.count == 1));
        let single = FiniteMetricSpace::from_fn(1, |_, _| 0.0).unwrap();
        assert!(doubling_profile(&single, 3).iter().all(|c| c.count == 1));
    }

    #[test]
    fn missing_level_is_an_error() {
        let s = FiniteMetricSpace::from_fn(3, |i, j| (j - i) as f64 * 0.2).unwrap();
        let profile = doubling_profile(&s, 1);
        let sched = ScaleSchedule::constant(2, &profile).unwrap();
        let err = build_nearly_um_skeleton(&s, &PointMeasure::uniform(3), &sched).unwrap_err();
        assert!(matches!(err, Error::MissingScheduleLevel(_)), "{err}");
    }
}
