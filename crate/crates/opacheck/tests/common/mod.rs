//! Shared fixtures and generators for the integration suites.

#![allow(dead_code)]

use opacheck::opacity::OpacityProperty;
use opacheck::system::{Metric, MetricSystem, StateSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn ex1() -> MetricSystem {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ex1.json");
    MetricSystem::from_json_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn state(system: &MetricSystem, label: &str) -> usize {
    system.state_by_label(label).unwrap()
}

/// Small random system: up to `max_states` states and `max_inputs` inputs,
/// outputs on the 1-d grid {0, 0.05, ..., 0.3}, sparse transitions.
pub fn random_system(rng: &mut ChaCha8Rng, max_states: usize, max_inputs: usize) -> MetricSystem {
    let n = rng.gen_range(2..=max_states);
    let k = rng.gen_range(1..=max_inputs);
    let states: Vec<StateSpec> = (0..n)
        .map(|i| StateSpec {
            label: format!("s{i}"),
            output: vec![0.05 * rng.gen_range(0..=6) as f64],
            initial: i == 0 || rng.gen_bool(0.5),
            secret: rng.gen_bool(0.35),
        })
        .collect();
    let mut transitions = Vec::new();
    for x in 0..n {
        for u in 0..k {
            let out_degree = match rng.gen_range(0..100) {
                0..=19 => 0,
                20..=74 => 1,
                _ => 2,
            };
            let mut targets = std::collections::BTreeSet::new();
            for _ in 0..out_degree {
                targets.insert(rng.gen_range(0..n));
            }
            for t in targets {
                transitions.push((x, u, t));
            }
        }
    }
    MetricSystem::new(
        states,
        (0..k).map(|i| format!("u{i}")).collect(),
        transitions,
        Metric::InfinityNorm,
    )
    .unwrap()
}

/// Copy of `base` with every output shifted by at most `max_shift`, keeping
/// labels, flags and transitions. Cross-system output distances change by at
/// most `max_shift`, so the identity relation stays inside the
/// `2 * max_shift`-ball relation.
pub fn perturbed_copy(
    base: &MetricSystem,
    rng: &mut ChaCha8Rng,
    max_shift: f64,
) -> MetricSystem {
    let states: Vec<StateSpec> = (0..base.n_states())
        .map(|i| StateSpec {
            label: base.label(i).to_owned(),
            output: base
                .output(i)
                .iter()
                .map(|v| v + rng.gen_range(-max_shift..=max_shift))
                .collect(),
            initial: base.is_initial(i),
            secret: base.is_secret(i),
        })
        .collect();
    MetricSystem::new(
        states,
        (0..base.n_inputs())
            .map(|u| base.input_label(u).to_owned())
            .collect(),
        base.transitions().collect(),
        Metric::InfinityNorm,
    )
    .unwrap()
}

/// Independent implementation of exact opacity (delta = 0) by literal run
/// enumeration with output *equality* instead of a distance comparison.
/// Used only to cross-check the oracle at delta = 0.
pub fn exact_opacity(system: &MetricSystem, property: OpacityProperty, depth: usize) -> bool {
    let mut stack: Vec<Vec<usize>> = system
        .initial_states()
        .iter()
        .filter(|&x| match property {
            OpacityProperty::Initial => system.is_secret(x),
            _ => true,
        })
        .map(|x| vec![x])
        .collect();
    while let Some(run) = stack.pop() {
        if violates_exactly(system, property, &run) {
            return false;
        }
        if run.len() <= depth {
            let last = *run.last().unwrap();
            for u in 0..system.n_inputs() {
                for next in system.successors(last, u).iter() {
                    let mut extended = run.clone();
                    extended.push(next);
                    stack.push(extended);
                }
            }
        }
    }
    true
}

fn violates_exactly(system: &MetricSystem, property: OpacityProperty, states: &[usize]) -> bool {
    let same_output = |a: usize, b: usize| system.output(a) == system.output(b);
    // Endpoints of runs from `roots` whose outputs equal the reference
    // outputs position by position.
    let matched_forward = |roots: &dyn Fn(usize) -> bool| -> Vec<Vec<usize>> {
        let mut layers: Vec<Vec<usize>> = Vec::new();
        layers.push(
            (0..system.n_states())
                .filter(|&x| roots(x) && same_output(x, states[0]))
                .collect(),
        );
        for (i, &reference) in states.iter().enumerate().skip(1) {
            let previous = &layers[i - 1];
            let mut next = Vec::new();
            for &y in previous {
                for u in 0..system.n_inputs() {
                    for z in system.successors(y, u).iter() {
                        if same_output(z, reference) && !next.contains(&z) {
                            next.push(z);
                        }
                    }
                }
            }
            layers.push(next);
        }
        layers
    };
    match property {
        OpacityProperty::Initial => {
            if !(system.is_initial(states[0]) && system.is_secret(states[0])) {
                return false;
            }
            let nonsecret_initial =
                |x: usize| system.is_initial(x) && !system.is_secret(x);
            matched_forward(&nonsecret_initial).last().unwrap().is_empty()
        }
        OpacityProperty::Current => {
            let last = *states.last().unwrap();
            if !system.is_secret(last) {
                return false;
            }
            let layers = matched_forward(&|x: usize| system.is_initial(x));
            layers
                .last()
                .unwrap()
                .iter()
                .all(|&x| system.is_secret(x))
        }
        OpacityProperty::Infinite => {
            let layers = matched_forward(&|x: usize| system.is_initial(x));
            // Backward reachability of matching suffixes.
            let mut co: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
            let last = states.len() - 1;
            co[last] = (0..system.n_states())
                .filter(|&x| same_output(x, states[last]))
                .collect();
            for i in (0..last).rev() {
                co[i] = (0..system.n_states())
                    .filter(|&x| {
                        same_output(x, states[i])
                            && (0..system.n_inputs()).any(|u| {
                                system.successors(x, u).iter().any(|y| co[i + 1].contains(&y))
                            })
                    })
                    .collect();
            }
            states.iter().enumerate().any(|(k, &x)| {
                system.is_secret(x)
                    && layers[k]
                        .iter()
                        .filter(|y| co[k].contains(y))
                        .all(|&y| system.is_secret(y))
            })
        }
    }
}

pub const ALL_PROPERTIES: [OpacityProperty; 3] = [
    OpacityProperty::Initial,
    OpacityProperty::Current,
    OpacityProperty::Infinite,
];
