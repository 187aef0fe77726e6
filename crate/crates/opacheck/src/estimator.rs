//! Reachable fragments of the delta-approximate initial-state estimator
//! (`S_I`) and current-state estimator (`S_C`).
//!
//! Estimator states are pairs of a *reference* system state and a *belief*
//! set. The initial-state estimator tracks beliefs backwards — from a node
//! `(x, q)`, an input `u` leads to `(x', q')` for every `u`-predecessor `x'`
//! of `x`, with
//!
//! ```text
//! q' = ( ∪_u Pre_u(q) ) ∩ { x'' : d(H(x'), H(x'')) <= delta }
//! ```
//!
//! The current-state estimator tracks beliefs forwards with `Post` in place
//! of `Pre` and successors in place of predecessors. The `Post` is taken
//! over the whole belief; the variant that propagates only the reference
//! state's successors is available behind [`EstimatorOptions::strict_def5`]
//! for comparison, but it does not satisfy the forward-run characterization
//! of beliefs and is not used by the verification layer.
//!
//! Construction is a breadth-first exploration with canonical node keys; the
//! final node list is sorted by (reference, belief), so two builds of the
//! same inputs are structurally identical.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::system::{MetricSystem, StateSet};

/// Which estimator to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Initial,
    Current,
}

#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    /// Hard bound on the number of estimator nodes. Exceeding it is an
    /// error: a truncated estimator would make verification unsound.
    pub node_cap: usize,
    /// Propagate `Post` from the reference state only, exactly as displayed
    /// in the current-state estimator's transition rule, instead of from the
    /// whole belief.
    pub strict_def5: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            node_cap: 1_000_000,
            strict_def5: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("delta must be a finite nonnegative number, got {0}")]
    InvalidDelta(f64),
    #[error("estimator node cap exceeded ({0} nodes); rerun with a larger --node-cap")]
    NodeCapExceeded(usize),
    #[error("estimator node {0} is not an initial node")]
    NotAnInitialNode(usize),
    #[error("inputs and references must have equal length (got {inputs} and {references})")]
    PathShapeMismatch { inputs: usize, references: usize },
    #[error("no estimator transition matches step {step} (input {input}, reference {reference})")]
    PathNotFound {
        step: usize,
        input: usize,
        reference: usize,
    },
}

/// One estimator state: a reference system state plus a belief set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EstimatorNode {
    pub reference: usize,
    pub belief: StateSet,
}

/// Reachable fragment of `S_I` or `S_C` for one system and one delta.
#[derive(Debug)]
pub struct Estimator<'s> {
    kind: EstimatorKind,
    delta: f64,
    system: &'s MetricSystem,
    nodes: Vec<EstimatorNode>,
    initial_nodes: Vec<usize>,
    transitions: BTreeSet<(usize, usize, usize)>,
}

/// Builds the delta-approximate initial-state estimator with default options.
pub fn build_initial_estimator(
    system: &MetricSystem,
    delta: f64,
) -> Result<Estimator<'_>, EstimatorError> {
    Estimator::build(system, EstimatorKind::Initial, delta, &EstimatorOptions::default())
}

/// Builds the delta-approximate current-state estimator with default options.
pub fn build_current_estimator(
    system: &MetricSystem,
    delta: f64,
) -> Result<Estimator<'_>, EstimatorError> {
    Estimator::build(system, EstimatorKind::Current, delta, &EstimatorOptions::default())
}

impl<'s> Estimator<'s> {
    pub fn build(
        system: &'s MetricSystem,
        kind: EstimatorKind,
        delta: f64,
        options: &EstimatorOptions,
    ) -> Result<Self, EstimatorError> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(EstimatorError::InvalidDelta(delta));
        }
        let n = system.n_states();
        let close: Vec<StateSet> = (0..n).map(|x| system.close_set(x, delta)).collect();

        let seeds: Vec<EstimatorNode> = match kind {
            EstimatorKind::Initial => (0..n)
                .map(|x| EstimatorNode {
                    reference: x,
                    belief: close[x].clone(),
                })
                .collect(),
            EstimatorKind::Current => system
                .initial_states()
                .iter()
                .map(|x0| EstimatorNode {
                    reference: x0,
                    belief: close[x0].intersection(system.initial_states()),
                })
                .collect(),
        };

        let mut index: HashMap<(usize, StateSet), usize> = HashMap::new();
        let mut nodes: Vec<EstimatorNode> = Vec::new();
        let mut initial_nodes = Vec::new();
        let mut queue = VecDeque::new();
        for seed in seeds {
            let key = (seed.reference, seed.belief.clone());
            let id = *index.entry(key).or_insert_with(|| {
                nodes.push(seed);
                nodes.len() - 1
            });
            initial_nodes.push(id);
            queue.push_back(id);
        }

        let mut transitions = BTreeSet::new();
        while let Some(id) = queue.pop_front() {
            let reference = nodes[id].reference;
            let propagated = match kind {
                EstimatorKind::Initial => system.pre_any(&nodes[id].belief),
                EstimatorKind::Current if options.strict_def5 => {
                    system.any_successors(reference).clone()
                }
                EstimatorKind::Current => system.post_any(&nodes[id].belief),
            };
            for input in 0..system.n_inputs() {
                let targets = match kind {
                    EstimatorKind::Initial => system.predecessors(reference, input),
                    EstimatorKind::Current => system.successors(reference, input),
                };
                for next_ref in targets.iter() {
                    let belief = propagated.intersection(&close[next_ref]);
                    let key = (next_ref, belief);
                    let next_id = match index.get(&key) {
                        Some(&existing) => existing,
                        None => {
                            if nodes.len() >= options.node_cap {
                                return Err(EstimatorError::NodeCapExceeded(options.node_cap));
                            }
                            nodes.push(EstimatorNode {
                                reference: key.0,
                                belief: key.1.clone(),
                            });
                            index.insert(key, nodes.len() - 1);
                            queue.push_back(nodes.len() - 1);
                            nodes.len() - 1
                        }
                    };
                    transitions.insert((id, input, next_id));
                }
            }
        }

        // Canonical node order: lexicographic by reference, then belief.
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].cmp(&nodes[b]));
        let mut remap = vec![0usize; nodes.len()];
        for (new_id, &old_id) in order.iter().enumerate() {
            remap[old_id] = new_id;
        }
        let mut sorted_nodes: Vec<Option<EstimatorNode>> = nodes.into_iter().map(Some).collect();
        let nodes: Vec<EstimatorNode> = order
            .iter()
            .map(|&old| sorted_nodes[old].take().expect("node moved once"))
            .collect();
        let transitions = transitions
            .into_iter()
            .map(|(a, u, b)| (remap[a], u, remap[b]))
            .collect();
        let mut initial_nodes: Vec<usize> = initial_nodes.into_iter().map(|i| remap[i]).collect();
        initial_nodes.sort_unstable();
        initial_nodes.dedup();

        Ok(Estimator {
            kind,
            delta,
            system,
            nodes,
            initial_nodes,
            transitions,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn system(&self) -> &'s MetricSystem {
        self.system
    }

    pub fn nodes(&self) -> &[EstimatorNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &EstimatorNode {
        &self.nodes[id]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn initial_nodes(&self) -> &[usize] {
        &self.initial_nodes
    }

    pub fn is_initial_node(&self, id: usize) -> bool {
        self.initial_nodes.binary_search(&id).is_ok()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.transitions.iter().copied()
    }

    pub fn contains_transition(&self, from: usize, input: usize, to: usize) -> bool {
        self.transitions.contains(&(from, input, to))
    }

    /// Looks a node up by content; node ids are stable within one build.
    pub fn find_node(&self, reference: usize, belief: &StateSet) -> Option<usize> {
        self.nodes
            .binary_search_by(|node| {
                node.reference
                    .cmp(&reference)
                    .then_with(|| node.belief.cmp(belief))
            })
            .ok()
    }

    /// Outgoing edges per node, sorted by (input, target).
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(from, input, to) in &self.transitions {
            adj[from].push((input, to));
        }
        adj
    }

    /// Replays one estimator path from an initial node and returns the final
    /// belief. `references` are the node references visited after the start
    /// node, so both slices have one entry per step taken.
    pub fn belief_after(
        &self,
        start: usize,
        inputs: &[usize],
        references: &[usize],
    ) -> Result<StateSet, EstimatorError> {
        if !self.is_initial_node(start) {
            return Err(EstimatorError::NotAnInitialNode(start));
        }
        if inputs.len() != references.len() {
            return Err(EstimatorError::PathShapeMismatch {
                inputs: inputs.len(),
                references: references.len(),
            });
        }
        let mut current = start;
        for (step, (&input, &reference)) in inputs.iter().zip(references).enumerate() {
            let next = self
                .transitions
                .range((current, input, 0)..=(current, input, usize::MAX))
                .map(|&(_, _, to)| to)
                .find(|&to| self.nodes[to].reference == reference);
            match next {
                Some(to) => current = to,
                None => {
                    return Err(EstimatorError::PathNotFound {
                        step,
                        input,
                        reference,
                    })
                }
            }
        }
        Ok(self.nodes[current].belief.clone())
    }

    /// Diagnostic JSON export (stable field order, no timestamps).
    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct NodeDoc<'a> {
            id: usize,
            reference: &'a str,
            belief: Vec<&'a str>,
            initial: bool,
        }
        #[derive(Serialize)]
        struct StatsDoc {
            nodes: usize,
            transitions: usize,
        }
        #[derive(Serialize)]
        struct EstimatorDoc<'a> {
            kind: EstimatorKind,
            delta: f64,
            nodes: Vec<NodeDoc<'a>>,
            transitions: Vec<(usize, &'a str, usize)>,
            stats: StatsDoc,
        }
        let doc = EstimatorDoc {
            kind: self.kind,
            delta: self.delta,
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, node)| NodeDoc {
                    id,
                    reference: self.system.label(node.reference),
                    belief: node.belief.iter().map(|x| self.system.label(x)).collect(),
                    initial: self.is_initial_node(id),
                })
                .collect(),
            transitions: self
                .transitions
                .iter()
                .map(|&(a, u, b)| (a, self.system.input_label(u), b))
                .collect(),
            stats: StatsDoc {
                nodes: self.nodes.len(),
                transitions: self.transitions.len(),
            },
        };
        serde_json::to_string_pretty(&doc).expect("estimator document serialization cannot fail")
    }

    /// GraphViz DOT export. Initial nodes are drawn with double peripheries.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph estimator {\n  rankdir=LR;\n  node [shape=box];\n");
        for (id, node) in self.nodes.iter().enumerate() {
            let belief: Vec<&str> = node.belief.iter().map(|x| self.system.label(x)).collect();
            let peripheries = if self.is_initial_node(id) { 2 } else { 1 };
            out.push_str(&format!(
                "  n{id} [label=\"{} | {{{}}}\", peripheries={peripheries}];\n",
                self.system.label(node.reference),
                belief.join(",")
            ));
        }
        for &(a, u, b) in &self.transitions {
            out.push_str(&format!(
                "  n{a} -> n{b} [label=\"{}\"];\n",
                self.system.input_label(u)
            ));
        }
        out.push_str("}\n");
        out
    }
}
