//! Empirical Frostman exponents of mu and of the skeleton measure.

use um_skeleton::instances::{generate, InstanceSpec};
use um_skeleton::skeleton::{build_skeleton, dyadic_radii, frostman_fit, skeleton_measure};

fn main() -> um_skeleton::error::Result<()> {
    let (space, mu) = generate(&InstanceSpec::cantor(7, 1.0 / 3.0))?;
    let radii = dyadic_radii(space.min_positive_distance().unwrap(), space.max_distance());
    let before = frostman_fit(&space, &mu, &radii)?;

    let t = 4;
    let tree = build_skeleton(&space, &mu, t)?;
    let um = skeleton_measure(&tree)?;
    let after = frostman_fit(&space, &um.nu, &radii)?;

    println!("log 2 / log 3          = {:.4}", 2f64.ln() / 3f64.ln());
    println!("exponent of mu         = {:.4}", before.exponent);
    println!("exponent of nu (t={t})  = {:.4}", after.exponent);
    println!("(1 - 1/t) * mu exponent = {:.4}", (1.0 - 1.0 / t as f64) * before.exponent);
    Ok(())
}
