//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measurements (run with `--nocapture` to see them).

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::{ex1, random_system, state, ALL_PROPERTIES};
use opacheck::estimator::{build_initial_estimator, Estimator, EstimatorKind, EstimatorOptions};
use opacheck::opacity::{opacity_threshold, verify, verify_current_state, verify_initial_state, OpacityProperty};
use opacheck::oracle::{count_runs, oracle_belief, oracle_opacity, sufficient_depth, OracleOptions};
use opacheck::simulation::{compute_maximal_relation, transfer, RelationKind, TransferPremise};
use opacheck::system::{MetricSystem, Run, StateSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn criterion_1_golden_example_suite() {
    let started = Instant::now();
    let s = ex1();
    let (b, d) = (state(&s, "B"), state(&s, "D"));

    let current_low = verify_current_state(&s, 0.05).unwrap();
    assert!(!current_low.holds, "not 0.05-approximate current-state opaque");
    assert_eq!(
        current_low.witness,
        Some(Run {
            states: vec![b, d, b],
            inputs: vec![0, 0]
        }),
        "witness must be the run B -> D -> B"
    );

    assert!(verify_current_state(&s, 0.1).unwrap().holds);
    assert!(!verify_initial_state(&s, 0.1).unwrap().holds);
    assert!(verify_initial_state(&s, 0.15).unwrap().holds);

    let threshold = opacity_threshold(&s, OpacityProperty::Initial)
        .unwrap()
        .expect("initial-state opacity holds for large delta");
    assert!(
        (threshold - 0.15).abs() <= 1e-12,
        "initial threshold {threshold} != 0.15"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "criterion 1 took {elapsed:?}");
    println!("criterion 1 PASS: golden Example-1 verdicts and witness reproduced in {elapsed:?}");
}

#[test]
fn criterion_2_estimator_golden_checks() {
    let s = ex1();
    let (a, b, c, d) = (
        state(&s, "A"),
        state(&s, "B"),
        state(&s, "C"),
        state(&s, "D"),
    );
    let set = |indices: &[usize]| StateSet::from_indices(s.n_states(), indices.iter().copied());

    let low = build_initial_estimator(&s, 0.1).unwrap();
    let from = low
        .find_node(d, &set(&[d]))
        .expect("(D,{D}) is an initial node of S_I at 0.1");
    let to = low
        .find_node(b, &set(&[b, c]))
        .expect("(B,{B,C}) is reachable in S_I at 0.1");
    assert!(low.contains_transition(from, 0, to));

    let high = build_initial_estimator(&s, 0.15).unwrap();
    let b_nodes: Vec<&opacheck::estimator::EstimatorNode> =
        high.nodes().iter().filter(|n| n.reference == b).collect();
    assert_eq!(b_nodes.len(), 1, "exactly one node with reference B");
    assert_eq!(b_nodes[0].belief, set(&[a, b, c]), "its belief is {{A,B,C}}");

    println!("criterion 2 PASS: S_I golden transition and unique reference-B node match");
}

/// Corpus filter: keep the oracle tractable. Depth is capped by the
/// estimator-node-count bound; run counts by a budget that keeps the whole
/// suite fast. Filtered-out systems are replaced, so the corpus stays at the
/// required size.
fn oracle_corpus(seed: u64, count: usize) -> Vec<(MetricSystem, Vec<f64>)> {
    const DEPTH_CAP: usize = 30;
    const RUN_CAP: u128 = 1_500;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    let options = EstimatorOptions::default();
    'generate: while corpus.len() < count {
        let system = random_system(&mut rng, 6, 2);
        let candidates = system.pairwise_distance_candidates();
        for &delta in &candidates {
            for property in ALL_PROPERTIES {
                let Ok(depth) = sufficient_depth(&system, delta, property, &options) else {
                    continue 'generate;
                };
                if depth > DEPTH_CAP {
                    continue 'generate;
                }
                if count_runs(&system, system.initial_states(), depth) > RUN_CAP {
                    continue 'generate;
                }
            }
        }
        corpus.push((system, candidates));
    }
    corpus
}

#[test]
fn criterion_3_oracle_equivalence() {
    let started = Instant::now();
    let corpus = oracle_corpus(1001, 200);
    let options = EstimatorOptions::default();
    let oracle_options = OracleOptions::default();
    let mut comparisons = 0usize;
    for (system, candidates) in &corpus {
        for &delta in candidates {
            for property in ALL_PROPERTIES {
                let verdict = verify(system, property, delta, &options).unwrap();
                let depth = sufficient_depth(system, delta, property, &options).unwrap();
                let oracle = oracle_opacity(system, delta, property, depth, &oracle_options)
                    .unwrap();
                assert_eq!(
                    verdict.holds, oracle.holds_up_to_depth,
                    "verifier/oracle disagreement: {property} at {delta} on {system:?}"
                );
                comparisons += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "criterion 3 took {elapsed:?}");
    println!(
        "criterion 3 PASS: {} systems, {comparisons} verifier/oracle comparisons, zero disagreements in {elapsed:?}",
        corpus.len()
    );
}

/// All estimator paths up to `depth` transitions, as (start node, inputs,
/// references) triples, capped in count.
fn estimator_paths(
    estimator: &Estimator<'_>,
    depth: usize,
    cap: usize,
) -> Vec<(usize, Vec<usize>, Vec<usize>)> {
    let adjacency = estimator.adjacency();
    let mut paths = Vec::new();
    let mut stack: Vec<(usize, usize, Vec<usize>, Vec<usize>)> = estimator
        .initial_nodes()
        .iter()
        .map(|&n| (n, n, Vec::new(), Vec::new()))
        .collect();
    while let Some((start, node, inputs, references)) = stack.pop() {
        if paths.len() >= cap {
            break;
        }
        paths.push((start, inputs.clone(), references.clone()));
        if inputs.len() == depth {
            continue;
        }
        for &(input, next) in &adjacency[node] {
            let mut inputs = inputs.clone();
            let mut references = references.clone();
            inputs.push(input);
            references.push(estimator.node(next).reference);
            stack.push((start, next, inputs, references));
        }
    }
    paths
}

#[test]
fn criterion_4_proposition_suites() {
    let corpus = oracle_corpus(2002, 200);
    let options = EstimatorOptions::default();
    let oracle_options = OracleOptions::default();
    let mut checked = 0usize;
    for (system, candidates) in &corpus {
        // A spread of deltas is enough here; every candidate delta is
        // already exercised end-to-end by criterion 3.
        let mut picks = vec![
            candidates[0],
            candidates[candidates.len() / 2],
            candidates[candidates.len() - 1],
        ];
        picks.dedup();
        for delta in picks {
            for kind in [EstimatorKind::Initial, EstimatorKind::Current] {
                let estimator = Estimator::build(system, kind, delta, &options).unwrap();
                for (start, inputs, references) in estimator_paths(&estimator, 6, 200) {
                    let replayed = estimator
                        .belief_after(start, &inputs, &references)
                        .expect("enumerated paths exist");
                    let mut full_refs = vec![estimator.node(start).reference];
                    full_refs.extend(&references);
                    let enumerated =
                        oracle_belief(system, delta, kind, &full_refs, &oracle_options).unwrap();
                    assert_eq!(
                        replayed, enumerated,
                        "belief mismatch on {kind:?} path {full_refs:?} at {delta} on {system:?}"
                    );
                    checked += 1;
                }
            }
        }
    }
    println!("criterion 4 PASS: {checked} estimator paths matched the enumerated beliefs");
}

#[test]
fn criterion_5_transfer_theorem_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let options = EstimatorOptions::default();
    let kinds = [
        (RelationKind::InitSop, OpacityProperty::Initial),
        (RelationKind::CurSop, OpacityProperty::Current),
        (RelationKind::InfSop, OpacityProperty::Infinite),
    ];
    let mut certified = 0usize;
    let mut attempts = 0usize;
    while certified < 100 {
        attempts += 1;
        assert!(attempts < 5000, "transfer corpus generation stalled");
        let (kind, property) = kinds[attempts % kinds.len()];
        let sb = random_system(&mut rng, 5, 2);
        let epsilon = if attempts % 2 == 0 { 0.05 } else { 0.1 };
        let sa = common::perturbed_copy(&sb, &mut rng, epsilon / 2.0);

        let maximal = compute_maximal_relation(&sa, &sb, epsilon, kind).unwrap();
        if !maximal.simulates {
            continue;
        }
        // Find a premise level at which Sb is opaque.
        let Some(premise_delta) = sb
            .pairwise_distance_candidates()
            .into_iter()
            .find(|&d| verify(&sb, property, d, &options).unwrap().holds)
        else {
            continue;
        };
        let delta = premise_delta + 2.0 * epsilon;
        let premise = TransferPremise {
            system: "Sb".into(),
            property,
            delta: premise_delta,
            holds: true,
        };
        let transferred = transfer(&premise, &maximal.relation, delta, "Sa")
            .expect("certified premise must transfer");
        assert!(transferred.conclusion.holds);

        let direct = verify(&sa, property, delta, &options).unwrap();
        assert!(
            direct.holds,
            "transfer counterexample: {property} epsilon {epsilon} premise {premise_delta} \
             delta {delta}\nSa = {sa:?}\nSb = {sb:?}"
        );
        certified += 1;
    }
    println!(
        "criterion 5 PASS: {certified} certified transfer instances confirmed by direct verification ({attempts} attempts)"
    );
}

#[test]
fn criterion_6_abstraction_suite() {
    use opacheck::abstraction::*;
    use opacheck::kfunction::KFunction;

    let started = Instant::now();
    let loaded = load_config_str(
        &std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/scalar.toml"
        ))
        .unwrap(),
    )
    .unwrap();
    let q = loaded.quantization.unwrap();
    assert_eq!((q.eta, q.mu, q.epsilon), (0.1, 0.05, 0.4));

    let Certificate::Iss(certificate) = &loaded.system.certificate else {
        panic!("fixture carries an ISS certificate");
    };
    let feasibility =
        check_quantization_iss(&certificate.beta1, &certificate.gamma, &KFunction::identity(), &q)
            .unwrap();
    assert!(feasibility.feasible, "0.2 + 0.1 + 0.1 <= 0.4");
    assert!(
        feasibility.margin.abs() <= 1e-12,
        "margin {} should be zero",
        feasibility.margin
    );

    let model = build_symbolic_model(&loaded.system, &q).unwrap();
    assert_eq!(model.n_states(), 11);
    assert_eq!(model.n_inputs(), 3);
    let secret: Vec<f64> = model
        .secret_states()
        .iter()
        .map(|s| model.output(s)[0])
        .collect();
    assert_eq!(secret.len(), 3);
    for (value, expected) in secret.iter().zip([0.0, 0.1, 0.2]) {
        assert!((value - expected).abs() <= 1e-12);
    }

    let x = model.state_by_label("4").unwrap(); // grid point 0.4
    let u = model.input_by_label("1").unwrap(); // input grid point 0.05
    let successor_values: Vec<f64> = model
        .successors(x, u)
        .iter()
        .map(|s| model.output(s)[0])
        .collect();
    assert_eq!(successor_values.len(), 2);
    assert!((successor_values[0] - 0.2).abs() <= 1e-9);
    assert!((successor_values[1] - 0.3).abs() <= 1e-9);

    let report = canonical_relation_check(&loaded.system, &q, 10_000, 42).unwrap();
    assert_eq!(report.samples, 10_000);
    assert_eq!(
        report.counterexamples, 0,
        "exact certificate must produce no counterexamples: {:?}",
        report.examples
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "criterion 6 took {elapsed:?}");
    println!("criterion 6 PASS: feasibility margin 0, 11-state model, exact successors, 10000 clean samples in {elapsed:?}");
}

#[test]
fn criterion_7_monotonicity_and_implications() {
    let corpus = oracle_corpus(4004, 200);
    let options = EstimatorOptions::default();
    let mut verdicts = 0usize;
    for (system, candidates) in &corpus {
        for property in ALL_PROPERTIES {
            let mut previous = None;
            for &delta in candidates {
                let holds = verify(system, property, delta, &options).unwrap().holds;
                if let Some(previous) = previous {
                    assert!(
                        !(previous && !holds),
                        "monotonicity violated for {property} on {system:?} at {delta}"
                    );
                }
                previous = Some(holds);
                verdicts += 1;
            }
        }
        for &delta in candidates {
            let infinite = verify(system, OpacityProperty::Infinite, delta, &options)
                .unwrap()
                .holds;
            if infinite {
                let initial = verify(system, OpacityProperty::Initial, delta, &options)
                    .unwrap()
                    .holds;
                let current = verify(system, OpacityProperty::Current, delta, &options)
                    .unwrap()
                    .holds;
                assert!(
                    initial && current,
                    "infinite-step at {delta} must imply both on {system:?}"
                );
            }
        }
    }
    println!(
        "criterion 7 PASS: delta-monotonicity and the implication chain held across {} systems ({verdicts} verdicts)",
        corpus.len()
    );
}

#[test]
fn criterion_8_transfer_arithmetic() {
    use opacheck::simulation::{SimRelation, TransferError};

    let relation = SimRelation {
        kind: RelationKind::InitSop,
        epsilon: 0.1,
        pairs: BTreeSet::new(),
        validated: true,
    };
    let premise = TransferPremise {
        system: "Sb".into(),
        property: OpacityProperty::Initial,
        delta: 0.1,
        holds: true,
    };
    let result = transfer(&premise, &relation, 0.3, "Sa").unwrap();
    assert!(result.conclusion.holds);
    assert_eq!(result.conclusion.delta, 0.3);

    let oversized = SimRelation {
        kind: RelationKind::InitSop,
        epsilon: 0.2,
        pairs: BTreeSet::new(),
        validated: true,
    };
    assert!(matches!(
        transfer(&premise, &oversized, 0.3, "Sa"),
        Err(TransferError::EpsilonTooLarge { .. })
    ));
    println!("criterion 8 PASS: holds-at-0.1 with epsilon 0.1 transfers to holds-at-0.3; epsilon > delta/2 refused");
}
