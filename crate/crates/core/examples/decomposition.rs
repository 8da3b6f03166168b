//! One Bartal split of a Cantor set, with the guarantees it must satisfy.

use um_skeleton::decomp::{ap_guarantee, bartal_decompose, verify_decomposition};
use um_skeleton::instances::{generate, InstanceSpec};

fn main() -> um_skeleton::error::Result<()> {
    let (space, mu) = generate(&InstanceSpec::cantor(4, 1.0 / 3.0))?;
    let z = space.all_points();
    let t = 3;
    let dec = bartal_decompose(&space, &mu, &z, t)?;

    let w = &dec.witness;
    println!("centre x_P = {}, ring i = {} of t = {t}", w.x_p, w.ring_index);
    println!("ring masses: {:?}", w.ring_masses);
    println!("|P| = {}, |Q| = {}, mu(P) = {:.4}, mu(Q) = {:.4}", dec.p.len(), dec.q.len(), mu.mass(&dec.p), mu.mass(&dec.q));

    let (lhs, rhs) = ap_guarantee(&space, &mu, &dec, &z)?;
    println!("mu(P) * cover^(1/t) = {lhs:.4} >= mu(Z \\ Q) = {rhs:.4}");

    for check in verify_decomposition(&space, &mu, &z, &dec)?.checks {
        println!("  {:<28} {}", check.name, if check.pass { "PASS" } else { "FAIL" });
    }
    Ok(())
}
