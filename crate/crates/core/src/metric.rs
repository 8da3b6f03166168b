//! Finite metric-measure spaces and the primitives every construction uses:
//! balls, diameters, set distances, local mass and covering estimates.
//!
//! All comparisons against radii are exact binary64 comparisons. Masses are
//! accumulated with compensated summation so that results do not depend on
//! anything but the member order of the cluster being summed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite metric space stored as a dense `n x n` distance table.
///
/// Construction only checks the shape and finiteness of the table; use
/// [`validate`] to check the metric axioms.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetricSpace {
    n: usize,
    dist: Vec<f64>,
}

impl FiniteMetricSpace {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut dist = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            dist.extend_from_slice(row);
        }
        Self::from_flat(n, dist)
    }

    pub fn from_flat(n: usize, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "distance table has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        if let Some(pos) = dist.iter().position(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite distance at ({}, {})",
                pos / n,
                pos % n
            )));
        }
        Ok(Self { n, dist })
    }

    /// Builds a symmetric table from a distance function evaluated on `i < j`.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Self::from_flat(n, dist)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn all_points(&self) -> Cluster {
        Cluster((0..self.n).collect())
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index, n: self.n })
        }
    }

    pub fn check_cluster(&self, cluster: &Cluster) -> Result<()> {
        match cluster.members().last() {
            Some(&last) => self.check_index(last),
            None => Ok(()),
        }
    }

    pub fn max_distance(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_positive_distance(&self) -> Option<f64> {
        self.dist
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .min_by(f64::total_cmp)
    }

    /// Applies `f` to every off-diagonal entry.
    pub fn map_distances(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = self.n;
        let dist = self
            .dist
            .iter()
            .enumerate()
            .map(|(k, &d)| if k / n == k % n { d } else { f(d) })
            .collect();
        Self::from_flat(n, dist)
    }
}

/// A set of point indices, kept strictly increasing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Cluster(Vec<usize>);

impl Cluster {
    /// Sorts and deduplicates `members`.
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self(members)
    }

    pub fn from_sorted(members: Vec<usize>) -> Result<Self> {
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "cluster members must be strictly increasing".into(),
            ));
        }
        Ok(Self(members))
    }

    pub fn singleton(point: usize) -> Self {
        Self(vec![point])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, point: usize) -> bool {
        self.0.binary_search(&point).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn difference(&self, other: &Cluster) -> Cluster {
        Cluster(self.iter().filter(|&p| !other.contains(p)).collect())
    }

    pub fn intersection(&self, other: &Cluster) -> Cluster {
        Cluster(self.iter().filter(|&p| other.contains(p)).collect())
    }

    pub fn union(&self, other: &Cluster) -> Cluster {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Cluster::new(v)
    }

    pub fn is_subset(&self, other: &Cluster) -> bool {
        self.iter().all(|p| other.contains(p))
    }

    pub fn is_disjoint(&self, other: &Cluster) -> bool {
        self.iter().all(|p| !other.contains(p))
    }
}

impl TryFrom<Vec<usize>> for Cluster {
    type Error = Error;

    fn try_from(members: Vec<usize>) -> Result<Self> {
        Cluster::from_sorted(members)
    }
}

impl From<Cluster> for Vec<usize> {
    fn from(c: Cluster) -> Self {
        c.0
    }
}

impl FromIterator<usize> for Cluster {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Cluster::new(iter.into_iter().collect())
    }
}

/// Nonnegative mass per point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PointMeasure {
    weights: Vec<f64>,
}

impl PointMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight {i} is {} (must be finite and nonnegative)",
                weights[i]
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Self {
            weights: vec![w; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, point: usize) -> f64 {
        self.weights[point]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self, cluster: &Cluster) -> f64 {
        compensated_sum(cluster.iter().map(|p| self.weights[p]))
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol
    }
}

impl TryFrom<Vec<f64>> for PointMeasure {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        PointMeasure::new(weights)
    }
}

impl From<PointMeasure> for Vec<f64> {
    fn from(m: PointMeasure) -> Self {
        m.weights
    }
}

/// Running sum using Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Result of a covering computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverEstimate {
    pub count: usize,
    /// True when the count comes from a heuristic and only bounds the minimum from above.
    pub is_upper_bound: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BallKind {
    Closed,
    Open,
}

pub fn diameter(space: &FiniteMetricSpace, a: &Cluster) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let m = a.members();
    let mut best = 0.0f64;
    for (k, &i) in m.iter().enumerate() {
        let row = space.row(i);
        for &j in &m[k + 1..] {
            best = best.max(row[j]);
        }
    }
    Ok(best)
}

/// `{y in a : d(y, center) <= r}` (closed) or `< r` (open).
pub fn ball(
    space: &FiniteMetricSpace,
    a: &Cluster,
    center: usize,
    r: f64,
    kind: BallKind,
) -> Result<Cluster> {
    space.check_index(center)?;
    space.check_cluster(a)?;
    let row = space.row(center);
    let members = a
        .iter()
        .filter(|&y| match kind {
            BallKind::Closed => row[y] <= r,
            BallKind::Open => row[y] < r,
        })
        .collect();
    Ok(Cluster(members))
}

pub fn set_distance(space: &FiniteMetricSpace, a: &Cluster, b: &Cluster) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut best = f64::INFINITY;
    for x in a.iter() {
        let row = space.row(x);
        for y in b.iter() {
            best = best.min(row[y]);
        }
    }
    Ok(best)
}

/// Largest mass of a closed ball of radius `diam(a)/4` centred in `a`, restricted to `a`.
pub fn mu_star(space: &FiniteMetricSpace, mu: &PointMeasure, a: &Cluster) -> Result<f64> {
    let radius = diameter(space, a)? / 4.0;
    let best = a
        .iter()
        .map(|c| {
            let row = space.row(c);
            compensated_sum(a.iter().filter(|&y| row[y] <= radius).map(|y| mu.weight(y)))
        })
        .fold(0.0, f64::max);
    Ok(best)
}

/// Greedy cover of `a` by pieces of diameter at most `target_diam`.
///
/// Each round seeds a piece at the smallest uncovered index, then scans the
/// uncovered points of the closed ball of radius `target_diam` around the
/// seed in order of distance and adds every point that keeps the piece's
/// diameter within `target_diam`.
pub fn greedy_cover(space: &FiniteMetricSpace, a: &Cluster, target_diam: f64) -> Vec<Cluster> {
    let m = a.members();
    let mut covered = vec![false; m.len()];
    let mut pieces = Vec::new();
    let mut candidates: Vec<usize> = Vec::new();
    for s in 0..m.len() {
        if covered[s] {
            continue;
        }
        let seed = m[s];
        let row = space.row(seed);
        candidates.clear();
        candidates.extend((s + 1..m.len()).filter(|&k| !covered[k] && row[m[k]] <= target_diam));
        candidates.sort_by(|&x, &y| row[m[x]].total_cmp(&row[m[y]]).then(x.cmp(&y)));
        covered[s] = true;
        let mut piece = vec![seed];
        for &k in &candidates {
            let p = m[k];
            let prow = space.row(p);
            if piece.iter().all(|&q| prow[q] <= target_diam) {
                piece.push(p);
                covered[k] = true;
            }
        }
        pieces.push(Cluster::new(piece));
    }
    pieces
}

pub fn greedy_cover_count(space: &FiniteMetricSpace, a: &Cluster, target_diam: f64) -> CoverEstimate {
    CoverEstimate {
        count: greedy_cover(space, a, target_diam).len(),
        is_upper_bound: true,
    }
}

/// Largest cluster accepted by [`exact_cover_count`].
pub const EXACT_COVER_LIMIT: usize = 12;

/// Minimal number of pieces of diameter at most `target_diam` covering `a`,
/// by exhaustive search. Only for `|a| <= 12`.
pub fn exact_cover_count(
    space: &FiniteMetricSpace,
    a: &Cluster,
    target_diam: f64,
) -> Result<CoverEstimate> {
    if a.len() > EXACT_COVER_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "exact covering supports at most {EXACT_COVER_LIMIT} points, got {}",
            a.len()
        )));
    }
    fn search(
        space: &FiniteMetricSpace,
        m: &[usize],
        k: usize,
        groups: &mut Vec<Vec<usize>>,
        target: f64,
        best: &mut usize,
    ) {
        if groups.len() >= *best {
            return;
        }
        if k == m.len() {
            *best = groups.len();
            return;
        }
        let p = m[k];
        for g in 0..groups.len() {
            if groups[g].iter().all(|&q| space.dist(p, q) <= target) {
                groups[g].push(p);
                search(space, m, k + 1, groups, target, best);
                groups[g].pop();
            }
        }
        groups.push(vec![p]);
        search(space, m, k + 1, groups, target, best);
        groups.pop();
    }
    let mut best = a.len();
    search(space, a.members(), 0, &mut Vec::new(), target_diam, &mut best);
    Ok(CoverEstimate {
        count: best,
        is_upper_bound: false,
    })
}

/// A violated metric axiom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NonzeroDiagonal { i: usize },
    Asymmetric { i: usize, j: usize },
    NonPositive { i: usize, j: usize },
    /// `d(i, k) > d(i, j) + d(j, k)`.
    Triangle { i: usize, j: usize, k: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonzeroDiagonal { i } => write!(f, "nonzero diagonal at ({i}, {i})"),
            Violation::Asymmetric { i, j } => write!(f, "symmetry violation at ({i}, {j})"),
            Violation::NonPositive { i, j } => {
                write!(f, "nonpositive distance between distinct points ({i}, {j})")
            }
            Violation::Triangle { i, j, k } => write!(f, "triangle violation at ({i}, {j}, {k})"),
        }
    }
}

/// Maximum number of violations collected by [`validate`].
pub const VIOLATION_CAP: usize = 64;

/// Lists violated metric axioms with exact comparisons. Empty means valid.
pub fn validate(space: &FiniteMetricSpace) -> Vec<Violation> {
    validate_with_tolerance(space, 0.0)
}

/// Like [`validate`], but a triangle inequality only counts as violated when
/// it fails by more than `tol` (absolute).
pub fn validate_with_tolerance(space: &FiniteMetricSpace, tol: f64) -> Vec<Violation> {
    let n = space.len();
    let mut out = Vec::new();
    let full = |out: &Vec<Violation>| out.len() >= VIOLATION_CAP;
    for i in 0..n {
        if space.dist(i, i) != 0.0 {
            out.push(Violation::NonzeroDiagonal { i });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if full(&out) {
                return out;
            }
            if space.dist(i, j) != space.dist(j, i) {
                out.push(Violation::Asymmetric { i, j });
            }
            if space.dist(i, j) <= 0.0 || space.dist(j, i) <= 0.0 {
                out.push(Violation::NonPositive { i, j });
            }
        }
    }
    // On a symmetric table the triple (i, j, k) mirrors (k, j, i).
    let symmetric = out.iter().all(|v| !matches!(v, Violation::Asymmetric { .. }));
    for i in 0..n {
        let ri = space.row(i);
        let first_k = if symmetric { i + 1 } else { 0 };
        for j in 0..n {
            if j == i {
                continue;
            }
            let rj = space.row(j);
            let bound = ri[j] + tol;
            // Branch-free scan first; violations are rare.
            let hit = ri[first_k..]
                .iter()
                .zip(&rj[first_k..])
                .fold(false, |acc, (&dik, &djk)| acc | (dik > bound + djk));
            if !hit {
                continue;
            }
            for k in first_k..n {
                if k != i && k != j && ri[k] > ri[j] + rj[k] + tol {
                    out.push(Violation::Triangle { i, j, k });
                    if full(&out) {
                        return out;
                    }
                }
            }
        }
    }
    out
}

/// Triangle slack used for distance tables that were computed in floating point.
pub fn computed_table_tolerance(space: &FiniteMetricSpace) -> f64 {
    1e-12 * space.max_distance().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> FiniteMetricSpace {
        FiniteMetricSpace::from_fn(n, |i, j| (j as f64 - i as f64).abs()).unwrap()
    }

    fn c(v: &[usize]) -> Cluster {
        Cluster::new(v.to_vec())
    }

    #[test]
    fn diameter_examples() {
        let s = line(5);
        assert_eq!(diameter(&s, &c(&[3])).unwrap(), 0.0);
        assert_eq!(diameter(&s, &c(&[0, 1, 2, 3])).unwrap(), 3.0);
        assert!(matches!(diameter(&s, &Cluster::default()), Err(Error::EmptyCluster)));
    }

    #[test]
    fn diameter_cantor_pair() {
        let xs: [f64; _] = [0.0, 2.0 / 9.0, 2.0 / 3.0, 8.0 / 9.0];
        let s = FiniteMetricSpace::from_fn(4, |i, j| (xs[i] - xs[j]).abs()).unwrap();
        assert_eq!(diameter(&s, &c(&[0, 2])).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn ball_examples() {
        let s = line(5);
        let all = s.all_points();
        assert_eq!(ball(&s, &all, 2, 0.0, BallKind::Closed).unwrap(), c(&[2]));
        assert!(ball(&s, &all, 2, 0.0, BallKind::Open).unwrap().is_empty());
        assert_eq!(ball(&s, &all, 2, 1.0, BallKind::Closed).unwrap(), c(&[1, 2, 3]));
        assert_eq!(ball(&s, &all, 2, 1.0, BallKind::Open).unwrap(), c(&[2]));
        // centre outside the cluster
        assert_eq!(ball(&s, &c(&[0, 1]), 4, 3.0, BallKind::Closed).unwrap(), c(&[1]));
        assert!(ball(&s, &all, 9, 1.0, BallKind::Closed).is_err());
    }

    #[test]
    fn set_distance_examples() {
        let s = line(5);
        assert_eq!(set_distance(&s, &c(&[0]), &c(&[0])).unwrap(), 0.0);
        assert_eq!(set_distance(&s, &c(&[0]), &c(&[3])).unwrap(), 3.0);
        assert_eq!(set_distance(&s, &c(&[0, 1]), &c(&[3, 4])).unwrap(), 2.0);
        assert!(set_distance(&s, &c(&[0]), &Cluster::default()).is_err());
    }

    #[test]
    fn mu_star_examples() {
        let s = line(4);
        let mu = PointMeasure::uniform(4);
        assert_eq!(mu_star(&s, &mu, &c(&[2])).unwrap(), 0.25);
        assert_eq!(mu_star(&s, &mu, &s.all_points()).unwrap(), 0.25);
        let w = PointMeasure::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(mu_star(&s, &w, &c(&[1])).unwrap(), 0.2);
        assert!(mu_star(&s, &mu, &Cluster::default()).is_err());
    }

    #[test]
    fn greedy_cover_examples() {
        let s = line(17);
        assert_eq!(greedy_cover_count(&s, &c(&[4]), 0.5).count, 1);
        let g = greedy_cover_count(&s, &s.all_points(), 1.0);
        assert_eq!(g.count, 9);
        assert!(g.is_upper_bound);
        assert_eq!(greedy_cover_count(&s, &s.all_points(), 16.0).count, 1);
        assert_eq!(greedy_cover_count(&s, &Cluster::default(), 1.0).count, 0);
        assert_eq!(greedy_cover_count(&s, &s.all_points(), 0.0).count, 17);
    }

    #[test]
    fn exact_cover_on_small_line() {
        let s = line(9);
        let e = exact_cover_count(&s, &s.all_points(), 1.0).unwrap();
        assert_eq!(e.count, 5);
        assert!(!e.is_upper_bound);
        assert!(exact_cover_count(&line(13), &line(13).all_points(), 1.0).is_err());
    }

    #[test]
    fn validate_examples() {
        let ok = FiniteMetricSpace::from_rows(&[
            vec![0.0, 1.0, 1.5],
            vec![1.0, 0.0, 1.0],
            vec![1.5, 1.0, 0.0],
        ])
        .unwrap();
        assert!(validate(&ok).is_empty());

        let asym = FiniteMetricSpace::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(validate(&asym), vec![Violation::Asymmetric { i: 0, j: 1 }]);

        let tri = FiniteMetricSpace::from_rows(&[
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 1.0],
            vec![3.0, 1.0, 0.0],
        ])
        .unwrap();
        let v = validate(&tri);
        assert!(v.contains(&Violation::Triangle { i: 0, j: 1, k: 2 }));
    }

    #[test]
    fn validate_flags_duplicates_and_diagonal() {
        let s = FiniteMetricSpace::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.0]]).unwrap();
        let v = validate(&s);
        assert!(v.contains(&Violation::NonzeroDiagonal { i: 0 }));
        assert!(v.contains(&Violation::NonPositive { i: 0, j: 1 }));
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        assert!(FiniteMetricSpace::from_rows(&[vec![0.0, 1.0]]).is_err());
        assert!(FiniteMetricSpace::from_flat(1, vec![f64::NAN]).is_err());
        assert!(PointMeasure::new(vec![-0.1]).is_err());
        assert!(Cluster::from_sorted(vec![2, 1]).is_err());
    }
}
