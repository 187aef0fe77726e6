//! Certify opacity of a continuous-state control system through its finite
//! quotient: build the symbolic model, verify at delta - 2*epsilon, and
//! transfer the verdict back.
//!
//! ```bash
//! cargo run -p opacheck --example end_to_end_pipeline
//! ```

use opacheck::abstraction::{end_to_end_verify, load_config_str, BoxUnion, PipelineConclusion, PipelineOptions};
use opacheck::opacity::OpacityProperty;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/scalar.toml");
    let loaded = load_config_str(&std::fs::read_to_string(path)?)?;

    let report = end_to_end_verify(
        &loaded.system,
        &PipelineOptions {
            epsilon: 0.4,
            delta: 0.9,
            property: OpacityProperty::Current,
            quantization: loaded.quantization.map(|q| (q.eta, q.mu)),
            estimator: Default::default(),
        },
    )?;
    println!(
        "verified the {}-state model at delta - 2*epsilon = {}",
        report.model.n_states(),
        report.abstraction_delta
    );
    match &report.conclusion {
        PipelineConclusion::Holds => {
            println!("conclusion: the control system is 0.9-approximate current-state opaque")
        }
        PipelineConclusion::Inconclusive { refutes_at } => {
            println!(
                "conclusion: inconclusive at 0.9 (abstraction verdict fails at {}{})",
                report.abstraction_delta,
                match refutes_at {
                    Some(level) => format!("; the system is provably NOT {level}-opaque"),
                    None => String::new(),
                }
            );
        }
    }

    // With no secret region every property holds at any delta.
    let mut open = loaded.system.clone();
    open.secret_domain = BoxUnion::empty();
    open.complement_domain = open.state_domain.clone();
    let report = end_to_end_verify(
        &open,
        &PipelineOptions {
            epsilon: 0.4,
            delta: 0.9,
            property: OpacityProperty::Current,
            quantization: Some((0.1, 0.05)),
            estimator: Default::default(),
        },
    )?;
    println!("\nwithout secrets: {:?}", report.conclusion);
    println!("\nfull report of the second run:\n{}", report.to_json_string());
    Ok(())
}
