//! Build the initial-state and current-state estimators of a model and dump
//! their reachable fragments.
//!
//! ```bash
//! cargo run -p opacheck --example build_estimator
//! ```

use opacheck::estimator::{Estimator, EstimatorKind, EstimatorOptions};
use opacheck::system::MetricSystem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ex1.json");
    let system = MetricSystem::from_json_str(&std::fs::read_to_string(path)?)?;

    for (kind, delta) in [
        (EstimatorKind::Initial, 0.1),
        (EstimatorKind::Initial, 0.15),
        (EstimatorKind::Current, 0.1),
    ] {
        let estimator = Estimator::build(&system, kind, delta, &EstimatorOptions::default())?;
        println!(
            "{kind:?} estimator at delta = {delta}: {} nodes, {} transitions",
            estimator.n_nodes(),
            estimator.n_transitions()
        );
        for (id, node) in estimator.nodes().iter().enumerate() {
            let belief: Vec<&str> = node.belief.iter().map(|x| system.label(x)).collect();
            println!(
                "  node {id}{}: ({}, {{{}}})",
                if estimator.is_initial_node(id) { "*" } else { " " },
                system.label(node.reference),
                belief.join(",")
            );
        }
        for (from, input, to) in estimator.transitions() {
            println!("  {from} -{}-> {to}", system.input_label(input));
        }
        println!();
    }

    // The DOT export renders with GraphViz: `dot -Tpng estimator.dot`.
    let estimator = Estimator::build(
        &system,
        EstimatorKind::Initial,
        0.1,
        &EstimatorOptions::default(),
    )?;
    println!("DOT rendering of the 0.1 initial-state estimator:\n{}", estimator.to_dot());
    Ok(())
}
