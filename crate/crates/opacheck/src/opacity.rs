//! Decides the three approximate-opacity properties from estimator
//! reachability and extracts violating witness runs.
//!
//! The verdicts come straight from the estimator characterizations:
//!
//! - initial-state: no reachable `S_I` node `(x, q)` with `x` a secret
//!   initial state may have `q ∩ X0 ⊆ XS`;
//! - current-state: no reachable `S_C` node may have its belief inside `XS`;
//! - infinite-step: for every pair of reachable `S_I`/`S_C` nodes sharing a
//!   secret reference, the belief intersection must leave `XS`.
//!
//! Witnesses are recovered from the estimator paths: a current-state witness
//! is the reference run to the offending node, an initial-state witness is
//! the reversed reference run, and an infinite-step witness concatenates a
//! forward `S_C` path with a reversed `S_I` path at the shared reference.
//! Witness search is breadth-first, so witnesses are shortest; when the only
//! zero-length violation is the trivial one (the non-triviality assumption
//! itself fails) a shortest positive-length revealing run is preferred, so
//! the witness still demonstrates a run, and `trivially_failed` carries the
//! assumption failure.

use serde::Serialize;
use thiserror::Error;

use crate::estimator::{Estimator, EstimatorKind, EstimatorOptions};
use crate::system::{MetricSystem, Run};

pub use crate::estimator::EstimatorError;

/// The three state-based opacity notions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpacityProperty {
    Initial,
    Current,
    Infinite,
}

impl std::fmt::Display for OpacityProperty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OpacityProperty::Initial => "initial-state",
            OpacityProperty::Current => "current-state",
            OpacityProperty::Infinite => "infinite-step",
        })
    }
}

#[derive(Debug, Error)]
pub enum OpacityError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Node/transition counts of the estimators a verdict was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub transitions: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VerdictStats {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_estimator: Option<GraphStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current_estimator: Option<GraphStats>,
}

/// Outcome of one opacity check.
#[derive(Debug, Clone, PartialEq)]
pub struct OpacityVerdict {
    pub property: OpacityProperty,
    pub delta: f64,
    pub holds: bool,
    /// The standing non-triviality assumption failed: some initial state's
    /// delta-close initial neighborhood consists of secret states only.
    pub trivially_failed: bool,
    /// Present iff `holds` is false; replays in the source system and
    /// violates the property definition.
    pub witness: Option<Run>,
    pub stats: VerdictStats,
}

impl OpacityVerdict {
    /// Stable JSON form: `{property, delta, holds, trivially_failed,
    /// witness: {states, inputs, outputs} | null, stats}`.
    pub fn to_json_string(&self, system: &MetricSystem) -> String {
        serde_json::to_string_pretty(&self.to_json_value(system))
            .expect("verdict serialization cannot fail")
    }

    pub fn to_json_value(&self, system: &MetricSystem) -> serde_json::Value {
        #[derive(Serialize)]
        struct WitnessDoc {
            states: Vec<String>,
            inputs: Vec<String>,
            outputs: Vec<Vec<f64>>,
        }
        #[derive(Serialize)]
        struct VerdictDoc<'a> {
            property: OpacityProperty,
            delta: f64,
            holds: bool,
            trivially_failed: bool,
            witness: Option<WitnessDoc>,
            stats: &'a VerdictStats,
        }
        let doc = VerdictDoc {
            property: self.property,
            delta: self.delta,
            holds: self.holds,
            trivially_failed: self.trivially_failed,
            witness: self.witness.as_ref().map(|run| WitnessDoc {
                states: run.states.iter().map(|&x| system.label(x).to_owned()).collect(),
                inputs: run.inputs.iter().map(|&u| system.input_label(u).to_owned()).collect(),
                outputs: system.run_outputs(run),
            }),
            stats: &self.stats,
        };
        serde_json::to_value(doc).expect("verdict serialization cannot fail")
    }
}

/// Decides delta-approximate initial-state opacity.
pub fn verify_initial_state(
    system: &MetricSystem,
    delta: f64,
) -> Result<OpacityVerdict, OpacityError> {
    verify(system, OpacityProperty::Initial, delta, &EstimatorOptions::default())
}

/// Decides delta-approximate current-state opacity.
pub fn verify_current_state(
    system: &MetricSystem,
    delta: f64,
) -> Result<OpacityVerdict, OpacityError> {
    verify(system, OpacityProperty::Current, delta, &EstimatorOptions::default())
}

/// Decides delta-approximate infinite-step opacity.
pub fn verify_infinite_step(
    system: &MetricSystem,
    delta: f64,
) -> Result<OpacityVerdict, OpacityError> {
    verify(system, OpacityProperty::Infinite, delta, &EstimatorOptions::default())
}

/// Decides one opacity property at one delta.
pub fn verify(
    system: &MetricSystem,
    property: OpacityProperty,
    delta: f64,
    options: &EstimatorOptions,
) -> Result<OpacityVerdict, OpacityError> {
    let trivially_failed = system.check_nontriviality(delta).is_some();
    match property {
        OpacityProperty::Initial => {
            let estimator = Estimator::build(system, EstimatorKind::Initial, delta, options)?;
            let offending = |node: &crate::estimator::EstimatorNode| {
                system.is_initial(node.reference)
                    && system.is_secret(node.reference)
                    && node
                        .belief
                        .intersection(system.initial_states())
                        .is_subset(system.secret_states())
            };
            let witness = find_witness(&estimator, &offending).map(|(refs, inputs)| Run {
                states: refs.into_iter().rev().collect(),
                inputs: inputs.into_iter().rev().collect(),
            });
            Ok(OpacityVerdict {
                property,
                delta,
                holds: witness.is_none(),
                trivially_failed,
                witness,
                stats: VerdictStats {
                    initial_estimator: Some(stats_of(&estimator)),
                    current_estimator: None,
                },
            })
        }
        OpacityProperty::Current => {
            let estimator = Estimator::build(system, EstimatorKind::Current, delta, options)?;
            let offending = |node: &crate::estimator::EstimatorNode| {
                node.belief.is_subset(system.secret_states())
            };
            let witness = find_witness(&estimator, &offending)
                .map(|(refs, inputs)| Run { states: refs, inputs });
            Ok(OpacityVerdict {
                property,
                delta,
                holds: witness.is_none(),
                trivially_failed,
                witness,
                stats: VerdictStats {
                    initial_estimator: None,
                    current_estimator: Some(stats_of(&estimator)),
                },
            })
        }
        OpacityProperty::Infinite => {
            let backward = Estimator::build(system, EstimatorKind::Initial, delta, options)?;
            let forward = Estimator::build(system, EstimatorKind::Current, delta, options)?;
            let witness = find_infinite_witness(system, &backward, &forward);
            Ok(OpacityVerdict {
                property,
                delta,
                holds: witness.is_none(),
                trivially_failed,
                witness,
                stats: VerdictStats {
                    initial_estimator: Some(stats_of(&backward)),
                    current_estimator: Some(stats_of(&forward)),
                },
            })
        }
    }
}

/// Least delta in `{0} ∪ {pairwise output distances}` at which the property
/// holds, or `None` if it fails even at the largest candidate. Verdicts are
/// monotone in delta and can only change at pairwise distances, so a binary
/// search over the candidate grid decides the exact threshold.
pub fn opacity_threshold(
    system: &MetricSystem,
    property: OpacityProperty,
) -> Result<Option<f64>, OpacityError> {
    opacity_threshold_with(system, property, &EstimatorOptions::default())
}

pub fn opacity_threshold_with(
    system: &MetricSystem,
    property: OpacityProperty,
    options: &EstimatorOptions,
) -> Result<Option<f64>, OpacityError> {
    let candidates = system.pairwise_distance_candidates();
    let holds_at = |delta: f64| -> Result<bool, OpacityError> {
        Ok(verify(system, property, delta, options)?.holds)
    };
    if !holds_at(*candidates.last().expect("candidate set contains 0"))? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if holds_at(candidates[mid])? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(candidates[lo]))
}

fn stats_of(estimator: &Estimator<'_>) -> GraphStats {
    GraphStats {
        nodes: estimator.n_nodes(),
        transitions: estimator.n_transitions(),
    }
}

/// Breadth-first layers of an estimator graph.
struct ShortestPaths {
    depth: Vec<Option<usize>>,
    parent: Vec<Option<(usize, usize)>>,
}

fn shortest_paths(estimator: &Estimator<'_>) -> ShortestPaths {
    let adjacency = estimator.adjacency();
    let mut depth = vec![None; estimator.n_nodes()];
    let mut parent = vec![None; estimator.n_nodes()];
    let mut queue = std::collections::VecDeque::new();
    for &seed in estimator.initial_nodes() {
        depth[seed] = Some(0);
        queue.push_back(seed);
    }
    while let Some(node) = queue.pop_front() {
        for &(input, next) in &adjacency[node] {
            if depth[next].is_none() {
                depth[next] = Some(depth[node].unwrap() + 1);
                parent[next] = Some((node, input));
                queue.push_back(next);
            }
        }
    }
    ShortestPaths { depth, parent }
}

impl ShortestPaths {
    /// Reference run of the tree path to `node`: `(references, inputs)`.
    fn reference_path(&self, estimator: &Estimator<'_>, node: usize) -> (Vec<usize>, Vec<usize>) {
        let mut refs = vec![estimator.node(node).reference];
        let mut inputs = Vec::new();
        let mut current = node;
        while let Some((pred, input)) = self.parent[current] {
            refs.push(estimator.node(pred).reference);
            inputs.push(input);
            current = pred;
        }
        refs.reverse();
        inputs.reverse();
        (refs, inputs)
    }

    /// Length and entry edge of a shortest positive-length path to `node`
    /// (re-entering initial nodes through an incoming edge is allowed).
    fn positive_entry(&self, estimator: &Estimator<'_>, node: usize) -> Option<(usize, usize, usize)> {
        estimator
            .transitions()
            .filter(|&(_, _, to)| to == node)
            .filter_map(|(from, input, _)| self.depth[from].map(|d| (d + 1, from, input)))
            .min()
    }

    /// Path to `node` of positive length when `force_positive` is set,
    /// otherwise the BFS tree path. Returns `(references, inputs)`.
    fn path_to(
        &self,
        estimator: &Estimator<'_>,
        node: usize,
        force_positive: bool,
    ) -> Option<(Vec<usize>, Vec<usize>)> {
        let depth = self.depth[node]?;
        if !force_positive || depth > 0 {
            return Some(self.reference_path(estimator, node));
        }
        let (_, from, input) = self.positive_entry(estimator, node)?;
        let (mut refs, mut inputs) = self.reference_path(estimator, from);
        refs.push(estimator.node(node).reference);
        inputs.push(input);
        Some((refs, inputs))
    }
}

/// Shortest reference run to an offending node. Zero-length candidates (the
/// trivial violations) are kept only when no positive-length revealing run
/// exists at all.
fn find_witness(
    estimator: &Estimator<'_>,
    offending: &dyn Fn(&crate::estimator::EstimatorNode) -> bool,
) -> Option<(Vec<usize>, Vec<usize>)> {
    let offenders: Vec<usize> = (0..estimator.n_nodes())
        .filter(|&id| offending(estimator.node(id)))
        .collect();
    if offenders.is_empty() {
        return None;
    }
    let sp = shortest_paths(estimator);
    let positive_best = offenders
        .iter()
        .filter_map(|&node| {
            let depth = sp.depth[node].expect("estimator nodes are reachable");
            if depth > 0 {
                Some((depth, node, false))
            } else {
                sp.positive_entry(estimator, node)
                    .map(|(len, _, _)| (len, node, true))
            }
        })
        .min();
    if let Some((_, node, force)) = positive_best {
        return sp.path_to(estimator, node, force);
    }
    let zero = offenders
        .into_iter()
        .min()
        .expect("offender list is nonempty");
    sp.path_to(estimator, zero, false)
}

/// Witness for an infinite-step violation: forward `S_C` run to the secret
/// reference followed by the reversed `S_I` run onward.
fn find_infinite_witness(
    system: &MetricSystem,
    backward: &Estimator<'_>,
    forward: &Estimator<'_>,
) -> Option<Run> {
    let mut by_reference: Vec<(Vec<usize>, Vec<usize>)> =
        vec![(Vec::new(), Vec::new()); system.n_states()];
    for (id, node) in backward.nodes().iter().enumerate() {
        if system.is_secret(node.reference) {
            by_reference[node.reference].0.push(id);
        }
    }
    for (id, node) in forward.nodes().iter().enumerate() {
        if system.is_secret(node.reference) {
            by_reference[node.reference].1.push(id);
        }
    }

    let mut offending: Vec<(usize, usize, usize)> = Vec::new(); // (reference, backward id, forward id)
    for (reference, (back_ids, fwd_ids)) in by_reference.iter().enumerate() {
        for &bi in back_ids {
            for &fi in fwd_ids {
                let meet = backward.node(bi).belief.intersection(&forward.node(fi).belief);
                if meet.is_subset(system.secret_states()) {
                    offending.push((reference, bi, fi));
                }
            }
        }
    }
    if offending.is_empty() {
        return None;
    }

    let sp_back = shortest_paths(backward);
    let sp_fwd = shortest_paths(forward);
    // Candidate witness lengths, preferring positive total length. The
    // forced-positive variants only matter when both halves have depth zero.
    let mut best: Option<(usize, usize, usize, usize, bool, bool)> = None; // (len, ref, fi, bi, force_fwd, force_back)
    let mut zero: Option<(usize, usize, usize)> = None;
    for &(reference, bi, fi) in &offending {
        let db = sp_back.depth[bi].expect("reachable");
        let df = sp_fwd.depth[fi].expect("reachable");
        if db + df > 0 {
            let cand = (db + df, reference, fi, bi, false, false);
            if best.map_or(true, |b| cand < b) {
                best = Some(cand);
            }
        } else {
            if zero.map_or(true, |z| (reference, fi, bi) < z) {
                zero = Some((reference, fi, bi));
            }
            let fwd_entry = sp_fwd.positive_entry(forward, fi).map(|(len, _, _)| len);
            let back_entry = sp_back.positive_entry(backward, bi).map(|(len, _, _)| len);
            for (len, ff, fb) in [
                fwd_entry.map(|l| (l, true, false)),
                back_entry.map(|l| (l, false, true)),
            ]
            .into_iter()
            .flatten()
            {
                let cand = (len, reference, fi, bi, ff, fb);
                if best.map_or(true, |b| cand < b) {
                    best = Some(cand);
                }
            }
        }
    }

    let (fi, bi, force_fwd, force_back) = match best {
        Some((_, _, fi, bi, ff, fb)) => (fi, bi, ff, fb),
        None => {
            let (reference, _, _) = zero?;
            return Some(Run::single(reference));
        }
    };
    let (fwd_refs, fwd_inputs) = sp_fwd.path_to(forward, fi, force_fwd)?;
    let (back_refs, back_inputs) = sp_back.path_to(backward, bi, force_back)?;
    // Backward half: the S_I reference path reversed is a run of the system
    // starting at the shared reference, which is the last forward state.
    let mut states = fwd_refs;
    let mut inputs = fwd_inputs;
    states.extend(back_refs.iter().rev().skip(1));
    inputs.extend(back_inputs.iter().rev());
    Some(Run { states, inputs })
}
