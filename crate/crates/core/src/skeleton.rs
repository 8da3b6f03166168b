//! Skeleton trees built by recursive Ramsey splits, the ultrametric they
//! induce on the surviving points, and the skeleton measure.
//!
//! Every non-singleton cluster `C_u` is split into `C_{u0} = P` and
//! `C_{u1} = Q`; singletons are leaves. The leaves form the subset `U`, and
//! `rho(x, y)` is the diameter of the cluster at the least common ancestor of
//! the two leaves. With `xi(u) = mu(C_u) / mu*(C_u)^(1/t)`, the skeleton
//! measure gives the root mass 1 and splits every node's mass between its
//! children in proportion to their `xi`.

use serde::{Deserialize, Serialize};

use crate::decomp::{bartal_decompose, xi_value, SplitWitness};
use crate::error::{Error, Result};
use crate::metric::{
    compensated_sum, computed_table_tolerance, diameter, greedy_cover_count, mu_star, validate_with_tolerance,
    Cluster, CompensatedSum, CoverEstimate, FiniteMetricSpace, PointMeasure,
};
use crate::report::{CheckReport, Tally};

pub type NodeId = usize;

/// Tolerance on `mu(X) = 1` for the skeleton measure.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Relative tolerance on inequalities between computed masses.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub delta: f64,
    pub mass: f64,
    /// `mu*(C_u)`.
    pub local_mass: f64,
    pub xi: f64,
    pub members: Cluster,
    pub children: Option<[NodeId; 2]>,
    pub witness: Option<SplitWitness>,
}

impl SkeletonNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonTree {
    /// Exponent used for `xi` on every node.
    pub t: usize,
    pub root: NodeId,
    pub n_points: usize,
    pub nodes: Vec<SkeletonNode>,
}

impl SkeletonTree {
    pub fn node(&self, id: NodeId) -> &SkeletonNode {
        &self.nodes[id]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &SkeletonNode> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// The subset `U`: one point per leaf.
    pub fn skeleton_points(&self) -> Cluster {
        self.leaves().flat_map(|n| n.members.iter()).collect()
    }

    /// `leaf_of[p]` is the leaf holding point `p`, if `p` is in `U`.
    pub fn leaf_table(&self) -> Vec<Option<NodeId>> {
        let mut table = vec![None; self.n_points];
        for leaf in self.leaves() {
            if let Some(&p) = leaf.members.members().first() {
                if p < table.len() {
                    table[p] = Some(leaf.id);
                }
            }
        }
        table
    }

    pub fn depth(&self, mut id: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[id].parent {
            id = p;
            d += 1;
        }
        d
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> NodeId {
        let (mut a, mut b) = (a, b);
        let (mut da, mut db) = (self.depth(a), self.depth(b));
        while da > db {
            a = self.nodes[a].parent.unwrap();
            da -= 1;
        }
        while db > da {
            b = self.nodes[b].parent.unwrap();
            db -= 1;
        }
        while a != b {
            a = self.nodes[a].parent.unwrap();
            b = self.nodes[b].parent.unwrap();
        }
        a
    }

    /// Depth-first leaf order (child 0 first) and, per node, the half-open
    /// range of its leaves in that order.
    pub fn leaf_ranges(&self) -> (Vec<NodeId>, Vec<(usize, usize)>) {
        let mut order = Vec::new();
        let mut ranges = vec![(0, 0); self.nodes.len()];
        let mut stack = vec![(self.root, false)];
        while let Some((id, done)) = stack.pop() {
            let node = &self.nodes[id];
            if done {
                ranges[id].1 = order.len();
                continue;
            }
            ranges[id].0 = order.len();
            match node.children {
                None => {
                    order.push(id);
                    ranges[id].1 = order.len();
                }
                Some([c0, c1]) => {
                    stack.push((id, true));
                    stack.push((c1, false));
                    stack.push((c0, false));
                }
            }
        }
        (order, ranges)
    }

    /// Calls `f(x, y, rho(x, y))` once for every unordered pair of distinct
    /// skeleton points.
    pub fn for_each_pair(&self, mut f: impl FnMut(usize, usize, f64)) {
        let (order, ranges) = self.leaf_ranges();
        let point = |leaf: NodeId| self.nodes[leaf].members.members()[0];
        for node in &self.nodes {
            if let Some([c0, c1]) = node.children {
                let (a0, a1) = ranges[c0];
                let (b0, b1) = ranges[c1];
                for &la in &order[a0..a1] {
                    for &lb in &order[b0..b1] {
                        f(point(la), point(lb), node.delta);
                    }
                }
            }
        }
    }

    /// Topmost ancestor of `leaf` (inclusive) with `delta <= radius`; its
    /// leaves are exactly the closed `rho`-ball of that radius around the leaf.
    pub fn ball_node(&self, leaf: NodeId, radius: f64) -> NodeId {
        let mut v = leaf;
        while let Some(p) = self.nodes[v].parent {
            if self.nodes[p].delta <= radius {
                v = p;
            } else {
                break;
            }
        }
        v
    }
}

pub(crate) fn check_inputs(space: &FiniteMetricSpace, mu: &PointMeasure) -> Result<()> {
    if space.is_empty() {
        return Err(Error::InvalidParameter("metric space has no points".into()));
    }
    if mu.len() != space.len() {
        return Err(Error::Mismatch(format!(
            "measure has {} weights for {} points",
            mu.len(),
            space.len()
        )));
    }
    let violations = validate_with_tolerance(space, computed_table_tolerance(space));
    if !violations.is_empty() {
        return Err(Error::InvalidSpace(violations));
    }
    Ok(())
}

/// Shared recursion: `split_t(delta)` gives the split parameter for a
/// cluster of diameter `delta`.
pub(crate) fn grow_tree(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    xi_t: usize,
    split_t: impl Fn(f64) -> Result<usize>,
) -> Result<SkeletonTree> {
    check_inputs(space, mu)?;
    if xi_t < 2 {
        return Err(Error::InvalidParameter(format!("t must be at least 2, got {xi_t}")));
    }
    let make_node = |id: NodeId, parent: Option<NodeId>, members: Cluster| -> Result<SkeletonNode> {
        let delta = diameter(space, &members)?;
        let mass = mu.mass(&members);
        let local_mass = mu_star(space, mu, &members)?;
        let xi = xi_value(space, mu, &members, xi_t)?;
        Ok(SkeletonNode {
            id,
            parent,
            delta,
            mass,
            local_mass,
            xi,
            members,
            children: None,
            witness: None,
        })
    };

    let mut nodes = vec![make_node(0, None, space.all_points())?];
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        if nodes[id].members.len() < 2 {
            continue;
        }
        let t = split_t(nodes[id].delta)?;
        let dec = bartal_decompose(space, mu, &nodes[id].members, t)?;
        let c0 = nodes.len();
        let c1 = c0 + 1;
        nodes.push(make_node(c0, Some(id), dec.p)?);
        nodes.push(make_node(c1, Some(id), dec.q)?);
        nodes[id].children = Some([c0, c1]);
        nodes[id].witness = Some(dec.witness);
        stack.push(c1);
        stack.push(c0);
    }
    Ok(SkeletonTree {
        t: xi_t,
        root: 0,
        n_points: space.len(),
        nodes,
    })
}

pub fn build_skeleton(space: &FiniteMetricSpace, mu: &PointMeasure, t: usize) -> Result<SkeletonTree> {
    grow_tree(space, mu, t, |_| Ok(t))
}

pub fn ultrametric_distance(tree: &SkeletonTree, x: usize, y: usize) -> Result<f64> {
    let table = tree.leaf_table();
    let leaf = |p: usize| table.get(p).copied().flatten().ok_or(Error::NotInSkeleton(p));
    let (lx, ly) = (leaf(x)?, leaf(y)?);
    if lx == ly {
        return Ok(0.0);
    }
    Ok(tree.node(tree.lca(lx, ly)).delta)
}

/// The subset `U` with its skeleton measure.
#[derive(Clone, Debug)]
pub struct UltrametricSkeleton<'t> {
    pub tree: &'t SkeletonTree,
    pub points: Cluster,
    pub leaf_of: Vec<Option<NodeId>>,
    /// Atomic measure over all points, zero off `U`.
    pub nu: PointMeasure,
    /// `nu` of the leaves below every node.
    pub node_nu: Vec<f64>,
}

pub fn skeleton_measure(tree: &SkeletonTree) -> Result<UltrametricSkeleton<'_>> {
    let total = tree.node(tree.root).mass;
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::MeasureNotNormalized(total));
    }
    let mut node_nu = vec![0.0; tree.nodes.len()];
    node_nu[tree.root] = 1.0;
    let mut stack = vec![tree.root];
    while let Some(id) = stack.pop() {
        if let Some([c0, c1]) = tree.node(id).children {
            let (x0, x1) = (tree.node(c0).xi, tree.node(c1).xi);
            let here = node_nu[id];
            let sum = x0 + x1;
            if sum == 0.0 {
                node_nu[c0] = here / 2.0;
                node_nu[c1] = here / 2.0;
            } else {
                node_nu[c0] = x0 / sum * here;
                node_nu[c1] = x1 / sum * here;
            }
            stack.push(c1);
            stack.push(c0);
        }
    }
    let mut weights = vec![0.0; tree.n_points];
    for leaf in tree.leaves() {
        weights[leaf.members.members()[0]] = node_nu[leaf.id];
    }
    Ok(UltrametricSkeleton {
        tree,
        points: tree.skeleton_points(),
        leaf_of: tree.leaf_table(),
        nu: PointMeasure::new(weights)?,
        node_nu,
    })
}

/// `max rho(x, y) / d(x, y)` over distinct skeleton points.
pub fn distortion(space: &FiniteMetricSpace, tree: &SkeletonTree) -> Result<f64> {
    if tree.leaves().count() < 2 {
        return Err(Error::InvalidParameter(
            "distortion needs at least two skeleton points".into(),
        ));
    }
    let mut worst = 0.0f64;
    tree.for_each_pair(|x, y, rho| worst = worst.max(rho / space.dist(x, y)));
    Ok(worst)
}

/// Greedy doubling estimate used in place of the doubling constant.
///
/// The maximum of: the greedy count of half-diameter pieces over every tree
/// cluster and over every dyadic ball `B(x, diam * 2^-j)`; and, for every tree
/// cluster, the rounded-up square root of its greedy count of quarter-diameter
/// pieces (the quantity that bounds `mu(C) / mu*(C)`).
pub fn doubling_estimate(space: &FiniteMetricSpace, tree: &SkeletonTree) -> CoverEstimate {
    let mut best = 1usize;
    for node in &tree.nodes {
        if node.members.len() < 2 {
            continue;
        }
        best = best.max(greedy_cover_count(space, &node.members, node.delta / 2.0).count);
        let quarter = greedy_cover_count(space, &node.members, node.delta / 4.0).count;
        best = best.max(ceil_sqrt(quarter));
    }
    let diam = space.max_distance();
    if let Some(min) = space.min_positive_distance() {
        let all = space.all_points();
        let mut radius = diam;
        while radius >= min / 2.0 {
            for x in 0..space.len() {
                let row = space.row(x);
                let ball: Cluster = all.iter().filter(|&y| row[y] <= radius).collect();
                if ball.len() > 1 {
                    best = best.max(greedy_cover_count(space, &ball, radius).count);
                }
            }
            radius /= 2.0;
        }
    }
    CoverEstimate {
        count: best,
        is_upper_bound: true,
    }
}

fn ceil_sqrt(k: usize) -> usize {
    let mut r = (k as f64).sqrt() as usize;
    while r * r < k {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= k {
        r -= 1;
    }
    r
}

/// Checks the ball-growth bound of the skeleton measure at every jump radius.
///
/// For each `x` and each `r` in `{0} ∪ {d(x, u) : u in U}`, with `y` the
/// skeleton point nearest to `x` and `v` the node whose leaves form the
/// closed `rho`-ball `B_rho(y, 16 t r)`:
/// * `measure_growth_containment`: `B_d(x, r) ∩ U` lies inside `v`'s leaves;
/// * `measure_growth_xi`: `nu(B_d(x, r)) <= xi(v)`;
/// * `measure_growth_bound`:
///   `nu(B_d(x, r)) <= lambda^(2/t) mu(B_d(x, (16t + 1) r))^(1 - 1/t)`.
pub fn check_measure_growth(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    um: &UltrametricSkeleton<'_>,
    t: usize,
    lambda_hat: CoverEstimate,
) -> Result<CheckReport> {
    let tree = um.tree;
    if tree.n_points != space.len() || mu.len() != space.len() {
        return Err(Error::Mismatch(format!(
            "skeleton over {} points, space has {}, measure has {}",
            tree.n_points,
            space.len(),
            mu.len()
        )));
    }
    let (order, ranges) = tree.leaf_ranges();
    let mut position = vec![usize::MAX; space.len()];
    for (k, &leaf) in order.iter().enumerate() {
        position[tree.node(leaf).members.members()[0]] = k;
    }

    let mut contain = Tally::new("measure_growth_containment", 0.0);
    let mut sharp = Tally::new("measure_growth_xi", MASS_TOLERANCE);
    let mut headline = Tally::new("measure_growth_bound", MASS_TOLERANCE);

    let tf = t as f64;
    let lambda_factor = (lambda_hat.count as f64).powf(2.0 / tf);
    let exponent = 1.0 - 1.0 / tf;
    let skeleton: Vec<usize> = um.points.iter().collect();

    for x in 0..space.len() {
        let row = space.row(x);
        // Ambient masses by distance, for mu(B(x, R)) lookups.
        let mut ambient: Vec<(f64, f64)> = (0..space.len()).map(|y| (row[y], mu.weight(y))).collect();
        ambient.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = CompensatedSum::default();
        let prefix: Vec<f64> = ambient
            .iter()
            .map(|&(_, w)| {
                acc.add(w);
                acc.value()
            })
            .collect();
        let ambient_mass = |radius: f64| -> f64 {
            let k = ambient.partition_point(|&(d, _)| d <= radius);
            if k == 0 {
                0.0
            } else {
                prefix[k - 1]
            }
        };

        let mut near: Vec<usize> = skeleton.clone();
        near.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let Some(&y) = near.first() else { continue };
        let leaf_y = um.leaf_of[y].expect("skeleton point has a leaf");

        let mut radii: Vec<f64> = std::iter::once(0.0).chain(near.iter().map(|&u| row[u])).collect();
        radii.dedup();

        let mut k = 0usize;
        let mut lo = usize::MAX;
        let mut hi = 0usize;
        let mut nu_in = CompensatedSum::default();
        for &r in &radii {
            while k < near.len() && row[near[k]] <= r {
                let pos = position[near[k]];
                lo = lo.min(pos);
                hi = hi.max(pos + 1);
                nu_in.add(um.nu.weight(near[k]));
                k += 1;
            }
            if k == 0 {
                // Empty ball: nu = 0 and both bounds are nonnegative.
                sharp.le(0.0, 0.0, String::new);
                headline.le(0.0, lambda_factor * ambient_mass(r).powf(exponent), String::new);
                continue;
            }
            let nu_ball = nu_in.value();
            let v = tree.ball_node(leaf_y, 16.0 * tf * r);
            let (v0, v1) = ranges[v];
            contain.holds(v0 <= lo && hi <= v1, format!("B_d({x}, {r}) ∩ U escapes node {v}"));
            sharp.le(nu_ball, tree.node(v).xi, || format!("x = {x}, r = {r}, node {v}"));
            let big = ambient_mass((16.0 * tf + 1.0) * r);
            headline.le(nu_ball, lambda_factor * big.powf(exponent), || {
                format!("x = {x}, r = {r}")
            });
        }
    }

    let mut report = CheckReport::default();
    report.push(contain.finish());
    report.push(sharp.finish());
    report.push(headline.finish());
    Ok(report)
}

/// Empirical Frostman exponent: `measure(B(x, r)) <~ constant * r^exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrostmanFit {
    pub exponent: f64,
    pub constant: f64,
    /// `(r, max_x measure(B(x, r)))`.
    pub samples: Vec<(f64, f64)>,
}

/// Least-squares slope of `log M(r)` against `log r`, where `M(r)` is the
/// largest closed-ball mass over all centres.
pub fn frostman_fit(space: &FiniteMetricSpace, measure: &PointMeasure, radii: &[f64]) -> Result<FrostmanFit> {
    if measure.len() != space.len() {
        return Err(Error::Mismatch("measure and space sizes differ".into()));
    }
    if radii.len() < 3 || radii.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter(
            "need at least 3 positive finite radii".into(),
        ));
    }
    let (lo, hi) = radii
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    if hi < 4.0 * lo {
        return Err(Error::InvalidParameter(
            "radii must span at least two dyadic octaves".into(),
        ));
    }
    if !(measure.total() > 0.0) {
        return Err(Error::InvalidParameter("measure has no mass".into()));
    }
    let samples: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let m = (0..space.len())
                .map(|x| {
                    let row = space.row(x);
                    compensated_sum(
                        (0..space.len()).filter(|&y| row[y] <= r).map(|y| measure.weight(y)),
                    )
                })
                .fold(0.0, f64::max);
            (r, m)
        })
        .collect();
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(r, m)| (r.ln(), m.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    Ok(FrostmanFit {
        exponent,
        constant: (my - exponent * mx).exp(),
        samples,
    })
}

/// Powers of two inside `[lo, hi]`, increasing.
pub fn dyadic_radii(lo: f64, hi: f64) -> Vec<f64> {
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Vec::new();
    }
    let start = lo.log2().floor() as i32 - 1;
    let end = hi.log2().ceil() as i32 + 1;
    (start..=end)
        .map(|j| 2f64.powi(j))
        .filter(|&r| r >= lo && r <= hi)
        .collect()
}
