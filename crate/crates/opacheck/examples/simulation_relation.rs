//! Validate a hand-written opacity-preserving simulation relation, then
//! compute the maximal relation between two systems by greatest-fixpoint
//! refinement.
//!
//! ```bash
//! cargo run -p opacheck --example simulation_relation
//! ```

use std::collections::BTreeSet;

use opacheck::simulation::{
    check_relation, compute_maximal_relation, RelationCheck, RelationKind,
};
use opacheck::system::{Metric, MetricSystem, StateSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ex1.json");
    let system = MetricSystem::from_json_str(&std::fs::read_to_string(path)?)?;

    // The identity relation always validates against the system itself.
    let identity: BTreeSet<(usize, usize)> = (0..system.n_states()).map(|i| (i, i)).collect();
    for kind in [RelationKind::InitSop, RelationKind::CurSop, RelationKind::InfSop] {
        match check_relation(&system, &system, &identity, 0.0, kind)? {
            RelationCheck::Validated(r) => {
                println!("identity validates as a 0-{kind} relation ({} pairs)", r.pairs.len())
            }
            RelationCheck::Violation(v) => println!("unexpected violation: {v:?}"),
        }
    }

    // Perturb the outputs: the identity is still inside the maximal relation
    // at an epsilon covering the perturbation.
    let epsilon = 0.06;
    let perturbed = {
        let states: Vec<StateSpec> = (0..system.n_states())
            .map(|i| StateSpec {
                label: system.label(i).to_owned(),
                output: system.output(i).iter().map(|v| v + 0.03).collect(),
                initial: system.is_initial(i),
                secret: system.is_secret(i),
            })
            .collect();
        MetricSystem::new(
            states,
            vec!["u".into()],
            system.transitions().collect(),
            Metric::InfinityNorm,
        )?
    };
    println!("\nmaximal relations against a +0.03-shifted copy at epsilon = {epsilon}:");
    for kind in [RelationKind::InitSop, RelationKind::CurSop, RelationKind::InfSop] {
        let maximal = compute_maximal_relation(&system, &perturbed, epsilon, kind)?;
        println!(
            "  {kind}: {} pairs, condition (1) {}",
            maximal.relation.pairs.len(),
            if maximal.simulates { "holds  (original <= shifted)" } else { "fails" }
        );
        for &(a, b) in &maximal.relation.pairs {
            print!(" ({},{})", system.label(a), perturbed.label(b));
        }
        println!();
    }

    // A relation that pairs states with far-apart outputs is rejected with
    // the failed clause.
    let mut too_wide = identity.clone();
    too_wide.insert((0, 1));
    if let RelationCheck::Violation(v) =
        check_relation(&system, &system, &too_wide, 0.05, RelationKind::CurSop)?
    {
        println!(
            "\nadding (A,B) at epsilon = 0.05 violates clause {}: {}",
            v.clause, v.description
        );
    }
    Ok(())
}
