//! Scale-dependent schedule, mass retention and scale-wise distortion.

use um_skeleton::instances::{generate, InstanceSpec};
use um_skeleton::nearly::{build_nearly_um_skeleton, default_max_level, doubling_profile, rescale_to_half, schedule_from_epsilon};
use um_skeleton::verify::verify_nearly_tree;

fn main() -> um_skeleton::error::Result<()> {
    let (space, mu) = generate(&InstanceSpec::grid(1, 128))?;
    let (scaled, alpha) = rescale_to_half(&space)?;
    let max_level = default_max_level(&scaled);
    let profile = doubling_profile(&scaled, max_level);
    let epsilon = 0.5;
    let schedule = schedule_from_epsilon(&profile, epsilon)?;

    println!("alpha = {alpha}, levels 1..={max_level}");
    for i in 1..=max_level {
        println!("  level {i:>2}: lambda = {:>3}  eta = {:.4}  t = {}", schedule.lambda_at(i), schedule.eta[i - 1], schedule.t_of[i - 1]);
    }

    let tree = build_nearly_um_skeleton(&scaled, &mu, &schedule)?;
    let v = verify_nearly_tree(&scaled, &mu, &tree, &schedule, 0.9)?;
    println!("mass retained mu(U) = {} (product bound {:.4})", v.retention.mass_retained, v.retention.product_bound);
    println!("C(0.9) = {:?}", v.scalewise.nearly_lipschitz_constant);
    println!("all checks pass: {}", v.report.all_pass());
    Ok(())
}
