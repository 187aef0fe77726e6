//! Decide the three approximate-opacity properties of a model at several
//! measurement precisions.
//!
//! ```bash
//! cargo run -p opacheck --example verify_opacity
//! ```

use opacheck::opacity::{verify, OpacityProperty};
use opacheck::system::MetricSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ex1.json");
    let system = MetricSystem::from_json_str(&std::fs::read_to_string(path)?)?;
    println!(
        "loaded {} states, {} transitions from {path}",
        system.n_states(),
        system.n_transitions()
    );

    for property in [
        OpacityProperty::Initial,
        OpacityProperty::Current,
        OpacityProperty::Infinite,
    ] {
        for delta in [0.05, 0.1, 0.15] {
            let verdict = verify(&system, property, delta, &Default::default())?;
            print!(
                "{property:>13} opacity at delta = {delta:<4}: {}",
                if verdict.holds { "holds" } else { "fails" }
            );
            if verdict.trivially_failed {
                print!(" (non-triviality assumption violated)");
            }
            if let Some(witness) = &verdict.witness {
                let labels: Vec<&str> =
                    witness.states.iter().map(|&x| system.label(x)).collect();
                print!("  witness run: {}", labels.join(" -> "));
            }
            println!();
        }
        println!();
    }
    Ok(())
}
