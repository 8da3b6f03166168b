//! The skeleton measure nu against the ball masses of mu.

use um_skeleton::instances::{generate, InstanceSpec};
use um_skeleton::skeleton::{build_skeleton, check_measure_growth, doubling_estimate, skeleton_measure};

fn main() -> um_skeleton::error::Result<()> {
    let (space, mu) = generate(&InstanceSpec::grid(2, 12))?;
    let t = 3;
    let tree = build_skeleton(&space, &mu, t)?;
    let um = skeleton_measure(&tree)?;
    println!("nu(U) = {:.15}, |U| = {}", um.nu.total(), um.points.len());

    let heaviest = um.points.iter().max_by(|&a, &b| um.nu.weight(a).total_cmp(&um.nu.weight(b))).unwrap();
    println!("heaviest atom: point {heaviest}, nu = {:.5}, mu = {:.5}", um.nu.weight(heaviest), mu.weight(heaviest));

    let report = check_measure_growth(&space, &mu, &um, t, doubling_estimate(&space, &tree))?;
    for c in &report.checks {
        println!("  {:<24} pass = {} worst slack = {:?} over {} balls", c.name, c.pass, c.worst_slack, c.evaluated);
    }
    Ok(())
}
