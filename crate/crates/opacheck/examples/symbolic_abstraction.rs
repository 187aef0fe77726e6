//! Quantize a one-dimensional incrementally stable control system into a
//! finite symbolic model: check the quantization inequality, build the grid
//! model, and stress the certificate with random samples.
//!
//! ```bash
//! cargo run -p opacheck --example symbolic_abstraction
//! ```

use opacheck::abstraction::{
    build_symbolic_model, canonical_relation_check, check_quantization_iss, load_config_str,
    suggest_quantization, Certificate,
};
use opacheck::kfunction::KFunction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/scalar.toml");
    let loaded = load_config_str(&std::fs::read_to_string(path)?)?;
    let q = loaded.quantization.expect("fixture pins eta, mu, epsilon");
    let Certificate::Iss(certificate) = &loaded.system.certificate else {
        unreachable!("fixture uses an ISS certificate")
    };

    let feasibility =
        check_quantization_iss(&certificate.beta1, &certificate.gamma, &KFunction::identity(), &q)?;
    println!(
        "quantization eta = {}, mu = {}, epsilon = {}: {} (margin {:+.3e}, threshold {})",
        q.eta,
        q.mu,
        q.epsilon,
        if feasibility.feasible { "feasible" } else { "infeasible" },
        feasibility.margin,
        feasibility.threshold
    );

    let suggested = suggest_quantization(&loaded.system.certificate, &loaded.system.alpha, q.epsilon, &loaded.system)?
        .expect("a feasible quantization exists");
    println!(
        "largest suggested eta at this epsilon: {:.6} (mu = eta/2 = {:.6})",
        suggested.eta, suggested.mu
    );

    let model = build_symbolic_model(&loaded.system, &q)?;
    println!(
        "\nsymbolic model: {} states, {} inputs, {} transitions",
        model.n_states(),
        model.n_inputs(),
        model.n_transitions()
    );
    let secret: Vec<String> = model
        .secret_states()
        .iter()
        .map(|s| format!("{}", model.output(s)[0]))
        .collect();
    println!("secret grid states: {{{}}}", secret.join(", "));
    let x = model.state_by_label("4").unwrap();
    let u = model.input_by_label("1").unwrap();
    let successors: Vec<String> = model
        .successors(x, u)
        .iter()
        .map(|s| format!("{}", model.output(s)[0]))
        .collect();
    println!("successors of grid point 0.4 under input 0.05: {{{}}}", successors.join(", "));

    let clean = canonical_relation_check(&loaded.system, &q, 10_000, 42)?;
    println!(
        "\ncanonical-relation sampling: {} samples, {} counterexamples",
        clean.samples, clean.counterexamples
    );

    // Understating the input gain is caught by the same sampling.
    let mut broken = loaded.system.clone();
    broken.certificate = Certificate::Iss(opacheck::abstraction::IssCertificate {
        beta1: KFunction::linear(0.5)?,
        gamma: KFunction::linear(0.1)?,
    });
    let falsified = canonical_relation_check(&broken, &q, 10_000, 42)?;
    println!(
        "with gamma understated to 0.1 r: {} counterexamples, first: {:?}",
        falsified.counterexamples,
        falsified.examples.first().map(|cx| (cx.kind, cx.lhs, cx.rhs))
    );
    Ok(())
}
