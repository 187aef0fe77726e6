//! Transfer an opacity verdict across a validated simulation relation: a
//! verdict at delta on the simulating system yields a verdict at
//! delta + 2*epsilon on the simulated one, without re-verification.
//!
//! ```bash
//! cargo run -p opacheck --example transfer_theorem
//! ```

use std::collections::BTreeSet;

use opacheck::opacity::OpacityProperty;
use opacheck::simulation::{transfer, RelationKind, SimRelation, TransferPremise};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // An InitSOP relation at epsilon = 0.1 validated elsewhere. The pair set
    // is irrelevant to the arithmetic, only `validated` and epsilon matter.
    let relation = SimRelation {
        kind: RelationKind::InitSop,
        epsilon: 0.1,
        pairs: BTreeSet::new(),
        validated: true,
    };

    // Sb was verified 0.1-approximate initial-state opaque. With Sa
    // simulated by Sb at epsilon = 0.1, Sa is opaque at 0.3 = 0.1 + 2*0.1.
    let premise = TransferPremise {
        system: "Sb".into(),
        property: OpacityProperty::Initial,
        delta: 0.1,
        holds: true,
    };
    let result = transfer(&premise, &relation, 0.3, "Sa")?;
    println!(
        "{} holds at {} ==> {} holds at {} ({:?} direction)",
        result.premise.system,
        result.premise.delta,
        result.conclusion.system,
        result.conclusion.delta,
        result.direction
    );
    println!("{}", result.to_json_string());

    // Negative direction: Sb failing at delta + 2*epsilon refutes Sa at
    // delta, with the relation oriented Sb <= Sa.
    let refutation = TransferPremise {
        system: "Sb".into(),
        property: OpacityProperty::Initial,
        delta: 0.3,
        holds: false,
    };
    let result = transfer(&refutation, &relation, 0.1, "Sa")?;
    println!(
        "\n{} fails at {} ==> {} fails at {}",
        result.premise.system, result.premise.delta, result.conclusion.system, result.conclusion.delta
    );

    // The positive direction needs epsilon <= delta / 2 and refuses otherwise.
    match transfer(&premise, &relation, 0.15, "Sa") {
        Err(error) => println!("\ntarget delta 0.15 refused: {error}"),
        Ok(_) => unreachable!("epsilon 0.1 exceeds 0.15 / 2"),
    }
    Ok(())
}
