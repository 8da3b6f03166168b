//! Fixed-t ultrametric skeleton of a random doubling set.

use um_skeleton::instances::{generate, InstanceSpec};
use um_skeleton::skeleton::{build_skeleton, distortion, skeleton_measure, ultrametric_distance};
use um_skeleton::verify::verify_skeleton_tree;

fn main() -> um_skeleton::error::Result<()> {
    let (space, mu) = generate(&InstanceSpec::random_doubling(7))?;
    let t = 2;
    let tree = build_skeleton(&space, &mu, t)?;
    let um = skeleton_measure(&tree)?;

    println!("{} points, skeleton keeps {}, tree has {} nodes", space.len(), um.points.len(), tree.nodes.len());
    println!("distortion max rho/d = {:.3} (bound 8t = {})", distortion(&space, &tree)?, 8 * t);

    let pts: Vec<usize> = um.points.iter().take(4).collect();
    for (k, &x) in pts.iter().enumerate() {
        for &y in &pts[k + 1..] {
            println!("  d({x},{y}) = {:.4}  rho = {:.4}", space.dist(x, y), ultrametric_distance(&tree, x, y)?);
        }
    }

    let v = verify_skeleton_tree(&space, &mu, &tree)?;
    println!("lambda_hat = {}, all checks pass: {}", v.lambda_hat.count, v.report.all_pass());
    Ok(())
}
