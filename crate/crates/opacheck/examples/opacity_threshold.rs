//! Compute the least measurement precision at which each opacity property
//! holds. Verdicts only change at pairwise output distances, so the search
//! runs over that finite candidate grid.
//!
//! ```bash
//! cargo run -p opacheck --example opacity_threshold
//! ```

use opacheck::opacity::{opacity_threshold, OpacityProperty};
use opacheck::system::MetricSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ex1.json");
    let system = MetricSystem::from_json_str(&std::fs::read_to_string(path)?)?;

    let candidates = system.pairwise_distance_candidates();
    println!("candidate deltas: {candidates:?}\n");

    for property in [
        OpacityProperty::Initial,
        OpacityProperty::Current,
        OpacityProperty::Infinite,
    ] {
        match opacity_threshold(&system, property)? {
            Some(threshold) => {
                println!("{property} opacity holds from delta = {threshold:.4}")
            }
            None => println!("{property} opacity fails at every candidate delta"),
        }
    }
    Ok(())
}
