//! Invariant suites for stored or freshly built trees.
//!
//! Structural checks run first, so a tampered tree is reported by the most
//! specific structural check it breaks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomp::{bartal_decompose, verify_decomposition, xi_value, Decomposition};
use crate::error::{Error, Result};
use crate::io::{digest, LeafEntry, NuEntry, TreeDocument, TreeKind};
use crate::metric::{diameter, mu_star, CoverEstimate, FiniteMetricSpace, PointMeasure};
use crate::nearly::{
    check_mass_retention, check_scalewise_distortion, doubling_profile, rescale_to_half, scale_level,
    schedule_from_epsilon, MassRetention, ScaleSchedule, ScalewiseDistortion,
};
use crate::report::{Check, CheckReport, Tally};
use crate::skeleton::{
    check_measure_growth, distortion, doubling_estimate, skeleton_measure, SkeletonTree, MASS_TOLERANCE,
    NORMALIZATION_TOLERANCE,
};

/// Up to this many skeleton points every triple is checked.
pub const EXHAUSTIVE_TRIPLE_LIMIT: usize = 256;
/// Random triples checked on larger skeletons.
pub const RANDOM_TRIPLES: usize = 100_000;
const TRIPLE_SEED: u64 = 0x5eed;

/// Folds per-node reports into one check per name, keeping first-seen order.
fn merge_into(acc: &mut Vec<Check>, report: CheckReport, node: usize) {
    for c in report.checks {
        match acc.iter_mut().find(|a| a.name == c.name) {
            Some(a) => {
                a.pass &= c.pass;
                a.evaluated += c.evaluated;
                a.failures += c.failures;
                a.worst_slack = match (a.worst_slack, c.worst_slack) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                };
                if a.detail.is_none() {
                    a.detail = c.detail.map(|d| format!("node {node}: {d}"));
                }
            }
            None => {
                let detail = c.detail.clone().map(|d| format!("node {node}: {d}"));
                acc.push(Check { detail, ..c });
            }
        }
    }
}

/// Shape of the tree and agreement of every stored node field with a
/// recomputation from the space and measure.
pub fn structural_checks(space: &FiniteMetricSpace, mu: &PointMeasure, tree: &SkeletonTree) -> CheckReport {
    let n = space.len();
    let nodes = &tree.nodes;
    let mut report = CheckReport::default();

    let mut root = Tally::new("root_full", 0.0);
    root.holds(tree.n_points == n && mu.len() == n, "tree, space and measure sizes differ");
    let root_ok = tree.root < nodes.len();
    root.holds(root_ok, format!("root id {} out of range", tree.root));
    if root_ok {
        let r = &nodes[tree.root];
        root.holds(r.parent.is_none(), "root has a parent");
        root.holds(r.members == space.all_points(), "root cluster is not the whole space");
    }
    for (k, node) in nodes.iter().enumerate() {
        root.holds(node.id == k, format!("node at index {k} has id {}", node.id));
        let linked = match node.parent {
            None => k == tree.root,
            Some(p) => p < nodes.len() && nodes[p].children.is_some_and(|c| c.contains(&k)),
        };
        root.holds(linked, format!("node {k} is not linked to its parent"));
        if let Some([c0, c1]) = node.children {
            let ok = c0 < nodes.len() && c1 < nodes.len() && c0 != c1 && nodes[c0].parent == Some(k) && nodes[c1].parent == Some(k);
            root.holds(ok, format!("node {k} has bad children"));
        }
        root.holds(node.members.iter().all(|p| p < n), format!("node {k} holds unknown points"));
    }
    let shape_ok = root.finish();
    let shape_pass = shape_ok.pass;
    report.push(shape_ok);
    if !shape_pass {
        return report;
    }

    let mut partition = Tally::new("children_partition", 0.0);
    let mut singleton = Tally::new("leaves_singleton", 0.0);
    for node in nodes {
        match node.children {
            Some([c0, c1]) => {
                let (a, b) = (&nodes[c0].members, &nodes[c1].members);
                partition.holds(
                    a.is_disjoint(b) && a.is_subset(&node.members) && b.is_subset(&node.members),
                    format!("children of node {} are not disjoint subsets", node.id),
                );
                singleton.holds(node.members.len() >= 2, format!("internal node {} has {} points", node.id, node.members.len()));
            }
            None => {
                singleton.holds(node.members.len() == 1, format!("leaf {} has {} points", node.id, node.members.len()));
            }
        }
    }
    report.push(partition.finish());
    report.push(singleton.finish());

    let mut delta = Tally::new("delta_consistency", 0.0);
    for node in nodes {
        let d = diameter(space, &node.members).unwrap_or(f64::NAN);
        delta.holds(node.delta == d, format!("node {}: stored delta {} but diameter is {d}", node.id, node.delta));
    }
    report.push(delta.finish());

    let mut monotone = Tally::new("delta_monotone", 0.0);
    for node in nodes {
        if let Some([c0, c1]) = node.children {
            monotone.le(nodes[c1].delta, node.delta, || format!("node {}: child 1", node.id));
            monotone.le(nodes[c0].delta, node.delta / 2.0, || format!("node {}: child 0 above half", node.id));
        }
    }
    report.push(monotone.finish());

    let mut mass = Tally::new("mass_consistency", 0.0);
    let mut xi = Tally::new("xi_consistency", 0.0);
    for node in nodes {
        let m = mu.mass(&node.members);
        mass.holds(node.mass == m, format!("node {}: stored mass {} but mu(C) = {m}", node.id, node.mass));
        let local = mu_star(space, mu, &node.members).unwrap_or(f64::NAN);
        mass.holds(
            node.local_mass == local,
            format!("node {}: stored local mass {} but mu*(C) = {local}", node.id, node.local_mass),
        );
        let x = xi_value(space, mu, &node.members, tree.t).unwrap_or(f64::NAN);
        xi.holds(node.xi == x, format!("node {}: stored xi {} but recomputed {x}", node.id, node.xi));
    }
    report.push(mass.finish());
    report.push(xi.finish());

    let mut replay = Tally::new("split_replay", 0.0);
    let mut split_checks = Vec::new();
    for node in nodes {
        let Some([c0, c1]) = node.children else {
            replay.holds(node.witness.is_none(), format!("leaf {} carries a split witness", node.id));
            continue;
        };
        let Some(w) = &node.witness else {
            replay.holds(false, format!("node {} has no split witness", node.id));
            continue;
        };
        match bartal_decompose(space, mu, &node.members, w.t) {
            Ok(dec) => {
                let same = dec.p == nodes[c0].members && dec.q == nodes[c1].members && &dec.witness == w;
                replay.holds(same, format!("node {}: split does not replay", node.id));
            }
            Err(e) => {
                replay.holds(false, format!("node {}: {e}", node.id));
            }
        }
        let stored = Decomposition {
            p: nodes[c0].members.clone(),
            q: nodes[c1].members.clone(),
            witness: w.clone(),
        };
        if let Ok(r) = verify_decomposition(space, mu, &node.members, &stored) {
            merge_into(&mut split_checks, r, node.id);
        }
    }
    report.push(replay.finish());
    for c in split_checks {
        report.push(c);
    }
    report
}

/// Strong triangle inequality of `rho` on `U`.
pub fn ultrametric_check(tree: &SkeletonTree) -> Check {
    let mut tally = Tally::new("ultrametric_axioms", 0.0);
    let leaves: Vec<usize> = tree.leaves().map(|l| l.id).collect();
    let k = leaves.len();
    let check = |tally: &mut Tally, ab: f64, ac: f64, bc: f64, ctx: &dyn Fn() -> String| {
        tally.le(ab, ac.max(bc), ctx);
        tally.le(ac, ab.max(bc), ctx);
        tally.le(bc, ab.max(ac), ctx);
    };
    if k <= EXHAUSTIVE_TRIPLE_LIMIT {
        let index: std::collections::HashMap<usize, usize> =
            leaves.iter().enumerate().map(|(i, &l)| (tree.node(l).members.members()[0], i)).collect();
        let mut rho = vec![0.0; k * k];
        tree.for_each_pair(|x, y, r| {
            let (i, j) = (index[&x], index[&y]);
            rho[i * k + j] = r;
            rho[j * k + i] = r;
        });
        for i in 0..k {
            for j in (i + 1)..k {
                tally.holds(rho[i * k + j] > 0.0, format!("rho vanishes on leaves {i}, {j}"));
                for l in (j + 1)..k {
                    check(&mut tally, rho[i * k + j], rho[i * k + l], rho[j * k + l], &|| {
                        format!("triple of leaves ({}, {}, {})", leaves[i], leaves[j], leaves[l])
                    });
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(TRIPLE_SEED);
        let rho = |a: usize, b: usize| if a == b { 0.0 } else { tree.node(tree.lca(a, b)).delta };
        for _ in 0..RANDOM_TRIPLES {
            let (a, b, c) = (
                leaves[rng.gen_range(0..k)],
                leaves[rng.gen_range(0..k)],
                leaves[rng.gen_range(0..k)],
            );
            check(&mut tally, rho(a, b), rho(a, c), rho(b, c), &|| format!("triple of leaves ({a}, {b}, {c})"));
        }
    }
    tally.finish()
}

/// `mu(C)^(1-1/t) <= xi(u) <= lambda^(2/t) mu(C)^(1-1/t)` on every node.
fn xi_bounds(tree: &SkeletonTree, lambda: CoverEstimate) -> Check {
    let mut tally = Tally::new("xi_bounds", MASS_TOLERANCE);
    let t = tree.t as f64;
    let factor = (lambda.count as f64).powf(2.0 / t);
    for node in &tree.nodes {
        let base = node.mass.powf(1.0 - 1.0 / t);
        tally.ge(node.xi, base, || format!("node {} below mu^(1-1/t)", node.id));
        tally.le(node.xi, factor * base, || format!("node {} above lambda^(2/t) mu^(1-1/t)", node.id));
    }
    tally.finish()
}

#[derive(Clone, Debug)]
pub struct SkeletonVerification {
    pub report: CheckReport,
    pub lambda_hat: CoverEstimate,
    /// `None` with fewer than two skeleton points.
    pub distortion: Option<f64>,
    pub nu: PointMeasure,
}

/// Every guarantee of a fixed-`t` skeleton tree.
pub fn verify_skeleton_tree(space: &FiniteMetricSpace, mu: &PointMeasure, tree: &SkeletonTree) -> Result<SkeletonVerification> {
    let structure = structural_checks(space, mu, tree);
    if !structure.all_pass() {
        return Err(structural_error(&structure));
    }
    let mut v = skeleton_suite(space, mu, tree)?;
    let rest = std::mem::replace(&mut v.report, structure);
    v.report.extend(rest);
    Ok(v)
}

/// The non-structural part; assumes [`structural_checks`] passed.
fn skeleton_suite(space: &FiniteMetricSpace, mu: &PointMeasure, tree: &SkeletonTree) -> Result<SkeletonVerification> {
    let mut report = CheckReport::default();
    let t = tree.t;
    let lambda_hat = doubling_estimate(space, tree);

    let mut sub = Tally::new("xi_subadditive", MASS_TOLERANCE);
    for node in &tree.nodes {
        if let Some([c0, c1]) = node.children {
            sub.le(node.xi, tree.node(c0).xi + tree.node(c1).xi, || format!("node {}", node.id));
        }
    }
    report.push(sub.finish());
    report.push(xi_bounds(tree, lambda_hat));

    let mut sandwich = Tally::new("distortion_sandwich", 0.0);
    let stretch = 8.0 * t as f64;
    tree.for_each_pair(|x, y, rho| {
        let d = space.dist(x, y);
        sandwich.le(d, rho, || format!("pair ({x}, {y}): d > rho"));
        sandwich.le(rho, stretch * d, || format!("pair ({x}, {y}): rho > 8t d"));
    });
    report.push(sandwich.finish());
    report.push(ultrametric_check(tree));

    let um = skeleton_measure(tree)?;
    let mut total = Tally::new("nu_normalized", NORMALIZATION_TOLERANCE);
    total.le(um.nu.total(), 1.0, || "nu(U) above 1".into());
    total.ge(um.nu.total(), 1.0, || "nu(U) below 1".into());
    total.holds(
        um.nu.weights().iter().enumerate().all(|(p, &w)| w == 0.0 || um.points.contains(p)),
        "nu charges a point outside U",
    );
    report.push(total.finish());
    let mut domination = Tally::new("nu_xi_domination", MASS_TOLERANCE);
    for node in &tree.nodes {
        domination.le(um.node_nu[node.id], node.xi, || format!("node {}", node.id));
    }
    report.push(domination.finish());

    report.extend(check_measure_growth(space, mu, &um, t, lambda_hat)?);

    let distortion = distortion(space, tree).ok();
    Ok(SkeletonVerification {
        report,
        lambda_hat,
        distortion,
        nu: um.nu,
    })
}

#[derive(Clone, Debug)]
pub struct NearlyVerification {
    pub report: CheckReport,
    pub retention: MassRetention,
    pub scalewise: ScalewiseDistortion,
    pub nu: PointMeasure,
}

/// Every guarantee of a scheduled tree over a space of diameter at most 1/2.
pub fn verify_nearly_tree(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    tree: &SkeletonTree,
    schedule: &ScaleSchedule,
    beta: f64,
) -> Result<NearlyVerification> {
    let structure = structural_checks(space, mu, tree);
    if !structure.all_pass() {
        return Err(structural_error(&structure));
    }
    let mut v = nearly_suite(space, mu, tree, schedule, beta)?;
    let rest = std::mem::replace(&mut v.report, structure);
    v.report.extend(rest);
    Ok(v)
}

fn nearly_suite(
    space: &FiniteMetricSpace,
    mu: &PointMeasure,
    tree: &SkeletonTree,
    schedule: &ScaleSchedule,
    beta: f64,
) -> Result<NearlyVerification> {
    let mut report = CheckReport::default();
    let mut sched = Tally::new("schedule_consistency", 0.0);
    let root_level = scale_level(tree.node(tree.root).delta).unwrap_or(1);
    sched.holds(
        schedule.t_at(root_level).ok() == Some(tree.t),
        format!("xi exponent {} is not t at the root level {root_level}", tree.t),
    );
    for node in &tree.nodes {
        if let Some(w) = &node.witness {
            let expected = scale_level(node.delta).and_then(|l| schedule.t_at(l).ok());
            sched.holds(
                expected == Some(w.t),
                format!("node {}: split with t = {}, schedule gives {expected:?}", node.id, w.t),
            );
        }
    }
    report.push(sched.finish());
    report.push(xi_bounds(tree, doubling_estimate(space, tree)));
    report.push(ultrametric_check(tree));

    let um = skeleton_measure(tree)?;
    let mut total = Tally::new("nu_normalized", NORMALIZATION_TOLERANCE);
    total.le(um.nu.total(), 1.0, || "nu(U) above 1".into());
    total.ge(um.nu.total(), 1.0, || "nu(U) below 1".into());
    report.push(total.finish());

    let retention = check_mass_retention(space, mu, tree, schedule)?;
    report.extend(retention.report.clone());
    let scalewise = check_scalewise_distortion(space, tree, schedule, beta)?;
    report.extend(scalewise.report.clone());
    Ok(NearlyVerification {
        report,
        retention,
        scalewise,
        nu: um.nu,
    })
}

/// A structural failure makes the remaining suites meaningless; it is
/// reported as a failed check rather than an error by [`verify_document`].
fn structural_error(report: &CheckReport) -> Error {
    let c = report.first_failure().expect("structural failure");
    Error::Mismatch(format!("{} failed: {}", c.name, c.detail.clone().unwrap_or_default()))
}

pub fn leaf_entries(tree: &SkeletonTree) -> Vec<LeafEntry> {
    tree.leaf_table()
        .iter()
        .enumerate()
        .filter_map(|(point, leaf)| leaf.map(|leaf| LeafEntry { point, leaf }))
        .collect()
}

pub fn nu_entries(tree: &SkeletonTree, nu: &PointMeasure) -> Vec<NuEntry> {
    leaf_entries(tree)
        .iter()
        .map(|e| NuEntry {
            point: e.point,
            mass: nu.weight(e.point),
        })
        .collect()
}

/// Re-runs every suite on a stored tree against its input space.
///
/// `input` is the raw space file, used for the digest check.
pub fn verify_document(space: &FiniteMetricSpace, mu: &PointMeasure, input: &[u8], doc: &TreeDocument) -> Result<CheckReport> {
    let (work_space, alpha) = match doc.kind {
        TreeKind::Skeleton => (space.clone(), None),
        TreeKind::Nearly => {
            let (s, a) = rescale_to_half(space)?;
            (s, Some(a))
        }
    };
    let mut report = structural_checks(&work_space, mu, &doc.tree);
    if !report.all_pass() {
        return Ok(report);
    }

    let mut input_check = Tally::new("input_digest", 0.0);
    input_check.holds(digest(input) == doc.input_digest, "tree was built from a different input");
    report.push(input_check.finish());

    let mut document = Tally::new("document_consistency", 0.0);
    document.holds(doc.alpha == alpha, format!("stored alpha {:?}, recomputed {alpha:?}", doc.alpha));
    document.holds(doc.leaf_table == leaf_entries(&doc.tree), "leaf table differs from the tree");
    let suite = match doc.kind {
        TreeKind::Skeleton => {
            document.holds(doc.t == Some(doc.tree.t), format!("stored t {:?}, tree uses {}", doc.t, doc.tree.t));
            let v = skeleton_suite(&work_space, mu, &doc.tree)?;
            document.holds(doc.nu == nu_entries(&doc.tree, &v.nu), "nu table differs from the recomputed skeleton measure");
            v.report
        }
        TreeKind::Nearly => {
            let (Some(schedule), Some(beta)) = (&doc.schedule, doc.beta) else {
                return Err(Error::Mismatch("scheduled tree document lacks its schedule or beta".into()));
            };
            if let Some(eps) = doc.epsilon {
                let rebuilt = schedule_from_epsilon(&doubling_profile(&work_space, schedule.max_level), eps)?;
                document.holds(&rebuilt == schedule, "stored schedule differs from the recomputed one");
            }
            let v = nearly_suite(&work_space, mu, &doc.tree, schedule, beta)?;
            document.holds(doc.nu == nu_entries(&doc.tree, &v.nu), "nu table differs from the recomputed skeleton measure");
            v.report
        }
    };
    report.push(document.finish());
    report.extend(suite);
    Ok(report)
}
