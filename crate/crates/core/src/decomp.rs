//! One step of Bartal's Ramsey decomposition.
//!
//! Given a cluster `Z` of diameter `D` and an integer `t >= 2`, the split
//! picks the centre `x` maximizing
//! `mu(B(x, D/8) ∩ Z) / mu(B°(x, D/4) ∩ Z)` (with `0/0 = 0`), grows the
//! rings `H_i = B(x, (1 + i/t) D/8) ∩ Z` for `i < t` and
//! `H_t = B°(x, D/4) ∩ Z`, and cuts at the first ring whose mass grows by no
//! more than the geometric mean rate. The same split also satisfies the
//! sparse-partition bound `mu(P) * cover(Z, D/8)^(1/t) >= mu(Z \ Q)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{
    compensated_sum, diameter, greedy_cover_count, mu_star, set_distance, Cluster,
    FiniteMetricSpace, PointMeasure,
};
use crate::report::{CheckReport, Tally};

/// Relative tolerance for the mass inequalities of a single split.
pub const SPLIT_TOLERANCE: f64 = 1e-9;

/// How a split was obtained: enough to replay the ring selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitWitness {
    pub x_p: usize,
    pub ring_index: usize,
    pub t: usize,
    pub parent_diam: f64,
    /// `mu(H_0), ..., mu(H_t)`.
    pub ring_masses: Vec<f64>,
}

/// The `(P, Q)` output of one split together with its witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub p: Cluster,
    pub q: Cluster,
    pub witness: SplitWitness,
}

/// Radius of ring `i` for a cluster of diameter `delta`: `(1 + i/t) delta/8`.
///
/// The end points are computed as exact scalings so that `H_0` and `H_t`
/// use exactly `delta/8` and `delta/4`.
pub fn ring_radius(delta: f64, i: usize, t: usize) -> f64 {
    if i == 0 {
        delta / 8.0
    } else if i == t {
        delta / 4.0
    } else {
        ((t + i) as f64 * delta) / ((8 * t) as f64)
    }
}

/// `f(x) = mu(B(x, D/8) ∩ Z) / mu(B°(x, D/4) ∩ Z)` with `0/0 = 0`.
fn centre_ratio(space: &FiniteMetricSpace, mu: &PointMeasure, z: &Cluster, x: usize, delta: f64) -> f64 {
    let row = space.row(x);
    let inner = delta / 8.0;
    let outer = delta / 4.0;
    let num = compensated_sum(z.iter().filter(|&y| row[y] <= inner).map(|y| mu.weight(y)));
    let den = compensated_sum(z.iter().filter(|&y| row[y] < outer).map(|y| mu.weight(y)));
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// The ring-selection rule: the smallest `i` in `1..=t` with
/// `m_i <= m_{i-1} * (m_t / m_0)^(1/t)`.
///
/// If rounding defeats every exact comparison (the inequality holds in exact
/// arithmetic by telescoping), the smallest index passing with a relative
/// tolerance of `1e-12` is used.
pub fn select_ring(ring_masses: &[f64]) -> Option<usize> {
    let t = ring_masses.len().checked_sub(1)?;
    if t == 0 {
        return None;
    }
    let (m0, mt) = (ring_masses[0], ring_masses[t]);
    let growth = if m0 == 0.0 { 0.0 } else { mt / m0 };
    let rate = growth.powf(1.0 / t as f64);
    let bound = |i: usize| ring_masses[i - 1] * rate;
    (1..=t)
        .find(|&i| ring_masses[i] <= bound(i))
        .or_else(|| (1..=t).find(|&i| ring_masses[i] <= bound(i) * (1.0 + 1e-12)))
}

pub fn bartal_decompose(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    z: &Cluster,
    t: usize,
) -> Result<Decomposition> {
    if t < 2 {
        return Err(Error::InvalidParameter(format!("t must be at least 2, got {t}")));
    }
    if z.len() < 2 {
        return Err(Error::NotSplittable(z.len()));
    }
    space.check_cluster(z)?;
    let delta = diameter(space, z)?;
    if delta <= 0.0 {
        return Err(Error::NotSplittable(z.len()));
    }

    let mut x_p = z.members()[0];
    let mut best = f64::NEG_INFINITY;
    for x in z.iter() {
        let f = centre_ratio(space, mu, z, x, delta);
        if f > best {
            best = f;
            x_p = x;
        }
    }

    let row = space.row(x_p);
    let radii: Vec<f64> = (0..=t).map(|i| ring_radius(delta, i, t)).collect();
    let ring_masses: Vec<f64> = (0..=t)
        .map(|i| {
            let r = radii[i];
            let inside = |y: usize| if i == t { row[y] < r } else { row[y] <= r };
            compensated_sum(z.iter().filter(|&y| inside(y)).map(|y| mu.weight(y)))
        })
        .collect();

    let ring_index = select_ring(&ring_masses)
        .expect("a light ring always exists for t >= 1 by telescoping");

    let p_radius = radii[ring_index - 1];
    let q_radius = radii[ring_index];
    let p = z.iter().filter(|&y| row[y] <= p_radius).collect();
    let q = z.iter().filter(|&y| row[y] >= q_radius).collect();

    Ok(Decomposition {
        p,
        q,
        witness: SplitWitness {
            x_p,
            ring_index,
            t,
            parent_diam: delta,
            ring_masses,
        },
    })
}

/// Exhaustive argmax of the centre ratio over `z`, smallest index on ties.
///
/// Built from [`crate::metric::ball`] and [`PointMeasure::mass`] rather than
/// the fused loop in [`bartal_decompose`].
pub fn brute_force_argmax_ratio(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    z: &Cluster,
) -> Result<usize> {
    use crate::metric::{ball, BallKind};
    let delta = diameter(space, z)?;
    let mut scored = Vec::with_capacity(z.len());
    for x in z.iter() {
        let num = mu.mass(&ball(space, z, x, delta / 8.0, BallKind::Closed)?);
        let den = mu.mass(&ball(space, z, x, delta / 4.0, BallKind::Open)?);
        let f = if den == 0.0 { 0.0 } else { num / den };
        scored.push((x, f));
    }
    let max = scored.iter().map(|&(_, f)| f).fold(f64::NEG_INFINITY, f64::max);
    Ok(scored.iter().find(|&&(_, f)| f == max).map(|&(x, _)| x).unwrap())
}

/// `(mu(P) * cover^(1/t), mu(Z \ Q))` where `cover` is the greedy count of
/// pieces of diameter `diam(Z)/8` covering `Z`.
pub fn ap_guarantee(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    dec: &Decomposition,
    z: &Cluster,
) -> Result<(f64, f64)> {
    let delta = diameter(space, z)?;
    let cover = greedy_cover_count(space, z, delta / 8.0).count as f64;
    let t = dec.witness.t as f64;
    let lhs = mu.mass(&dec.p) * cover.powf(1.0 / t);
    let rhs = mu.mass(&z.difference(&dec.q));
    Ok((lhs, rhs))
}

/// `mu(A) / mu*(A)^(1/t)` with `0/0 = 0`; the empty set contributes 0.
pub fn xi_value(space: &FiniteMetricSpace, mu: &PointMeasure, a: &Cluster, t: usize) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    let mass = mu.mass(a);
    if mass == 0.0 {
        return Ok(0.0);
    }
    Ok(mass / mu_star(space, mu, a)?.powf(1.0 / t as f64))
}

/// Checks every guarantee of a single split.
pub fn verify_decomposition(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    z: &Cluster,
    dec: &Decomposition,
) -> Result<CheckReport> {
    let t = dec.witness.t;
    let delta = diameter(space, z)?;
    let mut report = CheckReport::default();

    let mut disjoint = Tally::new("split_disjoint", 0.0);
    disjoint.holds(
        dec.p.is_disjoint(&dec.q) && dec.p.is_subset(z) && dec.q.is_subset(z) && !dec.p.is_empty(),
        "P and Q must be disjoint non-empty-P subsets of Z",
    );
    report.push(disjoint.finish());

    let mut separation = Tally::new("split_separation", SPLIT_TOLERANCE);
    if !dec.q.is_empty() && !dec.p.is_empty() {
        let gap = set_distance(space, &dec.p, &dec.q)?;
        separation.ge(gap, delta / (8 * t) as f64, || "d(P,Q) >= diam(Z)/(8t)".into());
    }
    report.push(separation.finish());

    let rest = z.difference(&dec.q);
    let mut halving = Tally::new("split_diameter_halving", SPLIT_TOLERANCE);
    if !rest.is_empty() {
        halving.le(diameter(space, &rest)?, delta / 2.0, || "diam(Z \\ Q) <= diam(Z)/2".into());
    }
    report.push(halving.finish());

    let root = 1.0 / t as f64;
    let mut local = Tally::new("split_local_mass", SPLIT_TOLERANCE);
    if !rest.is_empty() {
        let lhs = mu.mass(&dec.p) * mu_star(space, mu, z)?.powf(root);
        let rhs = mu.mass(&rest) * mu_star(space, mu, &rest)?.powf(root);
        local.ge(lhs, rhs, || "mu(P) mu*(Z)^(1/t) >= mu(Z\\Q) mu*(Z\\Q)^(1/t)".into());
    }
    report.push(local.finish());

    let mut subadd = Tally::new("split_xi_subadditive", SPLIT_TOLERANCE);
    let parts = xi_value(space, mu, &dec.p, t)? + xi_value(space, mu, &dec.q, t)?;
    subadd.ge(parts, xi_value(space, mu, z, t)?, || "xi(P) + xi(Q) >= xi(Z)".into());
    report.push(subadd.finish());

    let mut sparse = Tally::new("split_sparse_partition", SPLIT_TOLERANCE);
    let (lhs, rhs) = ap_guarantee(space, mu, dec, z)?;
    sparse.ge(lhs, rhs, || "mu(P) cover^(1/t) >= mu(Z\\Q)".into());
    report.push(sparse.finish());

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> FiniteMetricSpace {
        FiniteMetricSpace::from_fn(n, |i, j| (j as f64 - i as f64).abs()).unwrap()
    }

    #[test]
    fn two_point_split() {
        let s = line(2);
        let mu = PointMeasure::uniform(2);
        let dec = bartal_decompose(&s, &mu, &s.all_points(), 2).unwrap();
        assert_eq!(dec.p, Cluster::singleton(0));
        assert_eq!(dec.q, Cluster::singleton(1));
        assert_eq!(dec.witness.x_p, 0);
        assert_eq!(dec.witness.ring_index, 1);
        assert_eq!(dec.witness.ring_masses, vec![0.5, 0.5, 0.5]);
        assert!(set_distance(&s, &dec.p, &dec.q).unwrap() >= 1.0 / 16.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = line(3);
        let mu = PointMeasure::uniform(3);
        assert!(matches!(
            bartal_decompose(&s, &mu, &Cluster::singleton(1), 2),
            Err(Error::NotSplittable(1))
        ));
        assert!(matches!(
            bartal_decompose(&s, &mu, &Cluster::default(), 2),
            Err(Error::NotSplittable(0))
        ));
        assert!(matches!(
            bartal_decompose(&s, &mu, &s.all_points(), 1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn five_point_line_matches_oracle() {
        let s = line(5);
        let mu = PointMeasure::uniform(5);
        let z = s.all_points();
        let dec = bartal_decompose(&s, &mu, &z, 2).unwrap();
        assert_eq!(dec.witness.x_p, brute_force_argmax_ratio(&s, &mu, &z).unwrap());
        let report = verify_decomposition(&s, &mu, &z, &dec).unwrap();
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn oracle_prefers_isolated_heavy_point() {
        // Light points at 0, 2, 4 and a heavy point at 10; D/8 = 1.25, D/4 = 2.5.
        let xs: [f64; _] = [0.0, 2.0, 4.0, 10.0];
        let s = FiniteMetricSpace::from_fn(4, |i, j| (xs[i] - xs[j]).abs()).unwrap();
        let mu = PointMeasure::new(vec![0.05, 0.025, 0.025, 0.9]).unwrap();
        assert_eq!(brute_force_argmax_ratio(&s, &mu, &s.all_points()).unwrap(), 3);
    }

    #[test]
    fn uniform_pair_tie_breaks_low() {
        let s = line(2);
        let mu = PointMeasure::uniform(2);
        assert_eq!(brute_force_argmax_ratio(&s, &mu, &s.all_points()).unwrap(), 0);
    }

    #[test]
    fn ap_guarantee_two_points() {
        let s = line(2);
        let mu = PointMeasure::uniform(2);
        let z = s.all_points();
        let dec = bartal_decompose(&s, &mu, &z, 2).unwrap();
        let (lhs, rhs) = ap_guarantee(&s, &mu, &dec, &z).unwrap();
        assert!((lhs - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rhs, 0.5);
    }

    #[test]
    fn ap_guarantee_with_empty_q() {
        let s = line(3);
        let mu = PointMeasure::uniform(3);
        let z = s.all_points();
        let dec = Decomposition {
            p: Cluster::new(vec![0, 1]),
            q: Cluster::default(),
            witness: SplitWitness {
                x_p: 0,
                ring_index: 1,
                t: 2,
                parent_diam: 2.0,
                ring_masses: vec![0.0; 3],
            },
        };
        let (_, rhs) = ap_guarantee(&s, &mu, &dec, &z).unwrap();
        assert!((rhs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seventeen_point_line_sparse_partition() {
        let s = line(17);
        let mu = PointMeasure::uniform(17);
        let z = s.all_points();
        let dec = bartal_decompose(&s, &mu, &z, 3).unwrap();
        let (lhs, rhs) = ap_guarantee(&s, &mu, &dec, &z).unwrap();
        assert!(lhs >= rhs, "{lhs} < {rhs}");
    }

    #[test]
    fn verifier_catches_adjacent_split() {
        let s = line(5);
        let mu = PointMeasure::uniform(5);
        let z = s.all_points();
        let mut dec = bartal_decompose(&s, &mu, &z, 2).unwrap();
        dec.p = Cluster::new(vec![0, 1]);
        dec.q = Cluster::new(vec![2, 3, 4]);
        // d(P, Q) = 1 >= 4/16 still holds, so shrink the metric gap instead.
        let xs: [f64; _] = [0.0, 1.0, 1.1, 3.0, 4.0];
        let s2 = FiniteMetricSpace::from_fn(5, |i, j| (xs[i] - xs[j]).abs()).unwrap();
        let report = verify_decomposition(&s2, &mu, &z, &dec).unwrap();
        assert!(!report.get("split_separation").unwrap().pass);
    }

    #[test]
    fn verifier_with_empty_q() {
        let s = line(5);
        let mu = PointMeasure::uniform(5);
        let z = s.all_points();
        let dec = Decomposition {
            p: Cluster::new(vec![0, 1, 2, 3]),
            q: Cluster::default(),
            witness: SplitWitness {
                x_p: 0,
                ring_index: 1,
                t: 2,
                parent_diam: 4.0,
                ring_masses: vec![0.0; 3],
            },
        };
        let report = verify_decomposition(&s, &mu, &z, &dec).unwrap();
        assert!(report.get("split_disjoint").unwrap().pass);
        // Z \ Q = Z has diameter 4 > 2.
        assert!(!report.get("split_diameter_halving").unwrap().pass);
    }

    #[test]
    fn massless_cluster_uses_same_path() {
        let s = line(4);
        let mu = PointMeasure::new(vec![0.0; 4]).unwrap();
        let z = s.all_points();
        let dec = bartal_decompose(&s, &mu, &z, 3).unwrap();
        assert_eq!(dec.witness.x_p, 0);
        assert_eq!(dec.witness.ring_index, 1);
        assert!(verify_decomposition(&s, &mu, &z, &dec).unwrap().all_pass());
    }

    #[test]
    fn ring_selection_rule() {
        assert_eq!(select_ring(&[1.0, 1.0, 1.0]), Some(1));
        // growth 4, rate 2: first step grows 3x, second 4/3x.
        assert_eq!(select_ring(&[1.0, 3.0, 4.0]), Some(2));
        assert_eq!(select_ring(&[0.0, 0.0, 0.0]), Some(1));
        assert_eq!(select_ring(&[1.0]), None);
    }

    #[test]
    fn ring_radii_are_monotone() {
        for t in 2..9 {
            let r: Vec<f64> = (0..=t).map(|i| ring_radius(0.7, i, t)).collect();
            assert!(r.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(r[0], 0.7 / 8.0);
            assert_eq!(r[t], 0.7 / 4.0);
        }
    }
}
