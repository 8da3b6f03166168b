//! Instance generation and the text format for metric-measure spaces.

use um_skeleton::instances::{generate, InstanceSpec, MeasureSpec};
use um_skeleton::io::{digest, parse_space, write_space};

fn main() -> um_skeleton::error::Result<()> {
    let specs = [
        InstanceSpec::cantor(2, 1.0 / 3.0),
        InstanceSpec::cantor(2, 1.0 / 3.0).with_measure(MeasureSpec::SelfSimilar { branch: [0.25, 0.75] }),
        InstanceSpec::snowflake(0.5, InstanceSpec::grid(1, 4)),
    ];
    for spec in &specs {
        let (space, mu) = generate(spec)?;
        let text = write_space(&space, Some(&mu));
        println!("{}", serde_json::to_string(spec).unwrap());
        print!("{text}");
        let (back, back_mu) = parse_space(&text)?;
        assert_eq!(back, space);
        assert_eq!(back_mu.as_ref(), Some(&mu));
        println!("sha256 {}\n", digest(text.as_bytes()));
    }

    match parse_space("n=3\n0\n1,0\n5,1,0\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
