//! Tree documents: save, reload, re-verify, and catch tampering.

use um_skeleton::instances::{generate, InstanceSpec};
use um_skeleton::io::{digest, write_space, TreeDocument, TreeKind};
use um_skeleton::skeleton::build_skeleton;
use um_skeleton::verify::{leaf_entries, nu_entries, verify_document, verify_skeleton_tree};

fn main() -> um_skeleton::error::Result<()> {
    let (space, mu) = generate(&InstanceSpec::cantor(4, 1.0 / 3.0))?;
    let input = write_space(&space, Some(&mu));
    let tree = build_skeleton(&space, &mu, 2)?;
    let nu = verify_skeleton_tree(&space, &mu, &tree)?.nu;

    let doc = TreeDocument {
        kind: TreeKind::Skeleton,
        input_digest: digest(input.as_bytes()),
        t: Some(2),
        epsilon: None,
        beta: None,
        alpha: None,
        schedule: None,
        leaf_table: leaf_entries(&tree),
        nu: nu_entries(&tree, &nu),
        tree,
    };
    let json = doc.to_json()?;
    println!("document: {} bytes", json.len());

    let report = verify_document(&space, &mu, input.as_bytes(), &TreeDocument::from_json(&json)?)?;
    println!("reloaded: {} checks, all pass = {}", report.checks.len(), report.all_pass());

    let mut bad = TreeDocument::from_json(&json)?;
    let inner = bad.tree.nodes.iter().position(|n| n.children.is_some()).unwrap();
    bad.tree.nodes[inner].delta *= 1.5;
    let report = verify_document(&space, &mu, input.as_bytes(), &bad)?;
    println!("tampered: first failure = {:?}", report.first_failure().map(|c| &c.name));
    Ok(())
}
