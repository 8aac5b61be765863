use std::env;

use triproxy::dag::{builtin, check_proposition, classify_designs};

fn main() -> triproxy::Result<()> {
    let figure = env::args().nth(1).unwrap_or_else(|| "fig2a".into());
    let g = builtin(&figure)?;
    println!("{figure}: nodes {:?}", g.nodes());
    println!("edges {:?}", g.edges());

    for (design, roles) in classify_designs(&g)?.designs {
        println!("design {design:?} with roles {roles:?}");
    }
    for id in 1..=7 {
        match check_proposition(&g, id) {
            Ok(r) => {
                for c in r.conclusions {
                    println!("  P{id} {}: {:?}", c.label, c.status);
                }
            }
            Err(e) => println!("  P{id} skipped: {e}"),
        }
    }
    Ok(())
}
