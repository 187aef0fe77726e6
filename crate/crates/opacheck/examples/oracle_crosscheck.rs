//! Cross-validate the estimator-based verifier against the brute-force
//! oracle, which enumerates runs and evaluates the opacity definitions
//! literally. The oracle verdict is exact once the depth reaches the
//! estimator node count.
//!
//! ```bash
//! cargo run -p opacheck --example oracle_crosscheck
//! ```

use opacheck::estimator::EstimatorOptions;
use opacheck::opacity::{verify, OpacityProperty};
use opacheck::oracle::{count_runs, oracle_opacity, sufficient_depth, OracleOptions};
use opacheck::system::MetricSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ex1.json");
    let system = MetricSystem::from_json_str(&std::fs::read_to_string(path)?)?;
    let options = EstimatorOptions::default();

    println!("delta     property   verifier  oracle  depth  runs");
    for &delta in &system.pairwise_distance_candidates() {
        for property in [
            OpacityProperty::Initial,
            OpacityProperty::Current,
            OpacityProperty::Infinite,
        ] {
            let verdict = verify(&system, property, delta, &options)?;
            let depth = sufficient_depth(&system, delta, property, &options)?;
            let runs = count_runs(&system, system.initial_states(), depth);
            let oracle = oracle_opacity(&system, delta, property, depth, &OracleOptions::default())?;
            assert_eq!(verdict.holds, oracle.holds_up_to_depth, "must always agree");
            println!(
                "{delta:<8.5} {property:<14} {:<9} {:<7} {depth:<6} {runs}",
                verdict.holds, oracle.holds_up_to_depth
            );
        }
    }
    println!("\nverifier and oracle agree on every candidate delta");
    Ok(())
}
