//! Finite metric transition systems and the primitive set operators that the
//! estimator, verification, simulation and abstraction layers are built on.
//!
//! A [`MetricSystem`] is a finite transition system whose states carry a
//! real-vector output; the output set is equipped with a metric (the infinity
//! norm by default, or an explicit distance table). Secret states and initial
//! states are flagged per state. All operations on a constructed system are
//! pure and the type is immutable, so it can be shared freely across threads.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing or loading a system.
#[derive(Debug, Error)]
pub enum SystemError {
    #[error("model document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("system has no states")]
    NoStates,
    #[error("state `{0}` has an empty output vector")]
    EmptyOutput(String),
    #[error("state `{state}` has output dimension {found}, expected {expected}")]
    DimensionMismatch {
        state: String,
        expected: usize,
        found: usize,
    },
    #[error("state `{0}` has a non-finite output component")]
    NonFiniteOutput(String),
    #[error("duplicate state label `{0}`")]
    DuplicateState(String),
    #[error("duplicate input label `{0}`")]
    DuplicateInput(String),
    #[error("{context}: unknown label `{label}`")]
    UnknownLabel { context: String, label: String },
    #[error("transition {0} is out of range")]
    TransitionOutOfRange(String),
    #[error("duplicate transition {0}")]
    DuplicateTransition(String),
    #[error("no initial state declared")]
    NoInitialStates,
    #[error("distance table entry ({a},{b}) is {value}, which is not a finite nonnegative number")]
    TableBadValue { a: String, b: String, value: f64 },
    #[error("distance table is asymmetric at ({a},{b}): {forward} vs {backward}")]
    TableAsymmetric {
        a: String,
        b: String,
        forward: f64,
        backward: f64,
    },
    #[error("distance table has nonzero diagonal entry at ({0},{0})")]
    TableDiagonal(String),
    #[error("distance table is missing an entry for ({a},{b})")]
    TableIncomplete { a: String, b: String },
    #[error("distance table given twice for ({a},{b}) with conflicting values")]
    TableConflict { a: String, b: String },
    #[error("unknown metric type `{0}` (expected \"infinity\" or \"table\")")]
    UnknownMetricKind(String),
    #[error("metric type \"infinity\" must not carry table entries")]
    UnexpectedTableEntries,
}

/// Fixed-width bitset over the state indices of one system.
///
/// Set operations are exact; `Ord` compares the ascending index sequences
/// lexicographically so collections of sets have a canonical order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    bits: Vec<u64>,
}

impl StateSet {
    pub fn empty(universe: usize) -> Self {
        StateSet {
            bits: vec![0; universe.div_ceil(64)],
        }
    }

    pub fn singleton(universe: usize, index: usize) -> Self {
        let mut s = Self::empty(universe);
        s.insert(index);
        s
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(universe: usize, indices: I) -> Self {
        let mut s = Self::empty(universe);
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, index: usize) {
        self.bits[index / 64] |= 1u64 << (index % 64);
    }

    pub fn remove(&mut self, index: usize) {
        self.bits[index / 64] &= !(1u64 << (index % 64));
    }

    pub fn contains(&self, index: usize) -> bool {
        self.bits
            .get(index / 64)
            .map_or(false, |b| b & (1u64 << (index % 64)) != 0)
    }

    pub fn union_with(&mut self, other: &StateSet) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &StateSet) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= b;
        }
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        let mut out = self.clone();
        for (a, b) in out.bits.iter_mut().zip(&other.bits) {
            *a &= !b;
        }
        out
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &StateSet) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & b == 0)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|b| *b == 0)
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(block, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(block * 64 + tz)
                }
            })
        })
    }
}

impl Ord for StateSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl PartialOrd for StateSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Metric on the output set.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// Infinity norm of the output difference (default).
    InfinityNorm,
    /// Explicit symmetric state-pair distance table, row-major `n x n`.
    Table(Vec<f64>),
}

/// One state record passed to [`MetricSystem::new`].
#[derive(Debug, Clone)]
pub struct StateSpec {
    pub label: String,
    pub output: Vec<f64>,
    pub initial: bool,
    pub secret: bool,
}

/// A finite run: a nonempty state sequence plus the inputs taken between
/// consecutive states (`inputs.len() == states.len() - 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub states: Vec<usize>,
    pub inputs: Vec<usize>,
}

impl Run {
    pub fn single(state: usize) -> Self {
        Run {
            states: vec![state],
            inputs: Vec::new(),
        }
    }

    /// Number of transitions taken.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Finite metric transition system with secret states.
#[derive(Clone)]
pub struct MetricSystem {
    labels: Vec<String>,
    outputs: Vec<Vec<f64>>,
    output_dim: usize,
    initial: StateSet,
    secret: StateSet,
    inputs: Vec<String>,
    transitions: BTreeSet<(usize, usize, usize)>,
    metric: Metric,
    comparison_slack: f64,
    // Derived adjacency, indexed [input][state].
    post: Vec<Vec<StateSet>>,
    pre: Vec<Vec<StateSet>>,
    post_any: Vec<StateSet>,
    pre_any: Vec<StateSet>,
}

impl PartialEq for MetricSystem {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.outputs == other.outputs
            && self.initial == other.initial
            && self.secret == other.secret
            && self.inputs == other.inputs
            && self.transitions == other.transitions
            && self.metric == other.metric
    }
}

impl fmt::Debug for MetricSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricSystem")
            .field("states", &self.labels)
            .field("inputs", &self.inputs)
            .field("transitions", &self.transitions.len())
            .finish()
    }
}

impl MetricSystem {
    /// Builds and validates a system from index-based transitions.
    pub fn new(
        states: Vec<StateSpec>,
        inputs: Vec<String>,
        transitions: Vec<(usize, usize, usize)>,
        metric: Metric,
    ) -> Result<Self, SystemError> {
        if states.is_empty() {
            return Err(SystemError::NoStates);
        }
        let n = states.len();
        let output_dim = states[0].output.len();
        let mut seen = BTreeSet::new();
        for s in &states {
            if s.output.is_empty() {
                return Err(SystemError::EmptyOutput(s.label.clone()));
            }
            if s.output.len() != output_dim {
                return Err(SystemError::DimensionMismatch {
                    state: s.label.clone(),
                    expected: output_dim,
                    found: s.output.len(),
                });
            }
            if s.output.iter().any(|v| !v.is_finite()) {
                return Err(SystemError::NonFiniteOutput(s.label.clone()));
            }
            if !seen.insert(s.label.clone()) {
                return Err(SystemError::DuplicateState(s.label.clone()));
            }
        }
        let mut seen_inputs = BTreeSet::new();
        for u in &inputs {
            if !seen_inputs.insert(u.clone()) {
                return Err(SystemError::DuplicateInput(u.clone()));
            }
        }

        let mut set = BTreeSet::new();
        for &(src, inp, tgt) in &transitions {
            if src >= n || tgt >= n || inp >= inputs.len() {
                return Err(SystemError::TransitionOutOfRange(format!(
                    "({src},{inp},{tgt})"
                )));
            }
            if !set.insert((src, inp, tgt)) {
                return Err(SystemError::DuplicateTransition(format!(
                    "({},{},{})",
                    states[src].label, inputs[inp], states[tgt].label
                )));
            }
        }

        if let Metric::Table(dist) = &metric {
            debug_assert_eq!(dist.len(), n * n);
            for i in 0..n {
                for j in 0..n {
                    let d = dist[i * n + j];
                    if !d.is_finite() || d < 0.0 {
                        return Err(SystemError::TableBadValue {
                            a: states[i].label.clone(),
                            b: states[j].label.clone(),
                            value: d,
                        });
                    }
                    if d != dist[j * n + i] {
                        return Err(SystemError::TableAsymmetric {
                            a: states[i].label.clone(),
                            b: states[j].label.clone(),
                            forward: d,
                            backward: dist[j * n + i],
                        });
                    }
                }
                if dist[i * n + i] != 0.0 {
                    return Err(SystemError::TableDiagonal(states[i].label.clone()));
                }
            }
        }

        let initial = StateSet::from_indices(
            n,
            states
                .iter()
                .enumerate()
                .filter(|(_, s)| s.initial)
                .map(|(i, _)| i),
        );
        if initial.is_empty() {
            return Err(SystemError::NoInitialStates);
        }
        let secret = StateSet::from_indices(
            n,
            states
                .iter()
                .enumerate()
                .filter(|(_, s)| s.secret)
                .map(|(i, _)| i),
        );

        let mut post = vec![vec![StateSet::empty(n); n]; inputs.len()];
        let mut pre = vec![vec![StateSet::empty(n); n]; inputs.len()];
        let mut post_any = vec![StateSet::empty(n); n];
        let mut pre_any = vec![StateSet::empty(n); n];
        for &(src, inp, tgt) in &set {
            post[inp][src].insert(tgt);
            pre[inp][tgt].insert(src);
            post_any[src].insert(tgt);
            pre_any[tgt].insert(src);
        }

        Ok(MetricSystem {
            labels: states.iter().map(|s| s.label.clone()).collect(),
            outputs: states.into_iter().map(|s| s.output).collect(),
            output_dim,
            initial,
            secret,
            inputs,
            transitions: set,
            metric,
            comparison_slack: 0.0,
            post,
            pre,
            post_any,
            pre_any,
        })
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn label(&self, state: usize) -> &str {
        &self.labels[state]
    }

    pub fn input_label(&self, input: usize) -> &str {
        &self.inputs[input]
    }

    pub fn output(&self, state: usize) -> &[f64] {
        &self.outputs[state]
    }

    pub fn state_by_label(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn input_by_label(&self, label: &str) -> Option<usize> {
        self.inputs.iter().position(|l| l == label)
    }

    pub fn initial_states(&self) -> &StateSet {
        &self.initial
    }

    pub fn secret_states(&self) -> &StateSet {
        &self.secret
    }

    pub fn is_initial(&self, state: usize) -> bool {
        self.initial.contains(state)
    }

    pub fn is_secret(&self, state: usize) -> bool {
        self.secret.contains(state)
    }

    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.transitions.iter().copied()
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    /// Additive slack applied to every `d <= delta` comparison. Defaults to
    /// zero; comparisons are otherwise exact IEEE comparisons.
    pub fn comparison_slack(&self) -> f64 {
        self.comparison_slack
    }

    pub fn set_comparison_slack(&mut self, slack: f64) {
        self.comparison_slack = slack;
    }

    /// Distance between the outputs of two states.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        match &self.metric {
            Metric::InfinityNorm => self.outputs[x]
                .iter()
                .zip(&self.outputs[y])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            Metric::Table(dist) => dist[x * self.labels.len() + y],
        }
    }

    /// `d(H(x), H(y)) <= delta`, with the configured slack.
    pub fn within(&self, x: usize, y: usize, delta: f64) -> bool {
        self.distance(x, y) <= delta + self.comparison_slack
    }

    /// States whose output is within `delta` of state `x`'s output.
    pub fn close_set(&self, x: usize, delta: f64) -> StateSet {
        let n = self.labels.len();
        StateSet::from_indices(n, (0..n).filter(|&y| self.within(x, y, delta)))
    }

    /// All `u`-successors of the members of `q`.
    pub fn post_set(&self, q: &StateSet, input: usize) -> StateSet {
        let mut out = StateSet::empty(self.labels.len());
        for x in q.iter() {
            out.union_with(&self.post[input][x]);
        }
        out
    }

    /// All `u`-predecessors of the members of `q`.
    pub fn pre_set(&self, q: &StateSet, input: usize) -> StateSet {
        let mut out = StateSet::empty(self.labels.len());
        for x in q.iter() {
            out.union_with(&self.pre[input][x]);
        }
        out
    }

    /// Successors of `q` under any input.
    pub fn post_any(&self, q: &StateSet) -> StateSet {
        let mut out = StateSet::empty(self.labels.len());
        for x in q.iter() {
            out.union_with(&self.post_any[x]);
        }
        out
    }

    /// Predecessors of `q` under any input.
    pub fn pre_any(&self, q: &StateSet) -> StateSet {
        let mut out = StateSet::empty(self.labels.len());
        for x in q.iter() {
            out.union_with(&self.pre_any[x]);
        }
        out
    }

    pub fn successors(&self, state: usize, input: usize) -> &StateSet {
        &self.post[input][state]
    }

    pub fn predecessors(&self, state: usize, input: usize) -> &StateSet {
        &self.pre[input][state]
    }

    /// Successors of one state under any input.
    pub fn any_successors(&self, state: usize) -> &StateSet {
        &self.post_any[state]
    }

    /// Predecessors of one state under any input.
    pub fn any_predecessors(&self, state: usize) -> &StateSet {
        &self.pre_any[state]
    }

    /// Checks the standing non-triviality assumption: no initial state's
    /// delta-close initial neighborhood may consist of secret states only.
    /// Returns the smallest offending initial state, or `None` if the
    /// assumption holds.
    pub fn check_nontriviality(&self, delta: f64) -> Option<usize> {
        for x0 in self.initial.iter() {
            let close_initial = self.close_set(x0, delta).intersection(&self.initial);
            if close_initial.is_subset(&self.secret) {
                return Some(x0);
            }
        }
        None
    }

    pub fn is_valid_run(&self, run: &Run) -> bool {
        !run.states.is_empty()
            && run.inputs.len() + 1 == run.states.len()
            && run
                .inputs
                .iter()
                .enumerate()
                .all(|(i, &u)| self.transitions.contains(&(run.states[i], u, run.states[i + 1])))
    }

    pub fn run_outputs(&self, run: &Run) -> Vec<Vec<f64>> {
        run.states.iter().map(|&x| self.outputs[x].clone()).collect()
    }

    /// Sorted, deduplicated `{0} ∪ {d(H(x), H(x'))}` — the only values at
    /// which opacity verdicts can change.
    pub fn pairwise_distance_candidates(&self) -> Vec<f64> {
        let n = self.labels.len();
        let mut out = vec![0.0];
        for x in 0..n {
            for y in (x + 1)..n {
                out.push(self.distance(x, y));
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup();
        out
    }

    /// Largest pairwise output distance.
    pub fn output_diameter(&self) -> f64 {
        self.pairwise_distance_candidates()
            .last()
            .copied()
            .unwrap_or(0.0)
    }

    /// Parses and validates a model document (see the JSON schema in the
    /// README). Unknown keys are rejected.
    pub fn from_json_str(document: &str) -> Result<Self, SystemError> {
        let doc: ModelDocument = serde_json::from_str(document)?;
        Self::from_document(doc)
    }

    fn from_document(doc: ModelDocument) -> Result<Self, SystemError> {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for (i, s) in doc.states.iter().enumerate() {
            if index.insert(s.label.clone(), i).is_some() {
                return Err(SystemError::DuplicateState(s.label.clone()));
            }
        }
        let mut input_index: BTreeMap<String, usize> = BTreeMap::new();
        for (i, u) in doc.inputs.iter().enumerate() {
            if input_index.insert(u.clone(), i).is_some() {
                return Err(SystemError::DuplicateInput(u.clone()));
            }
        }
        let lookup = |context: String, label: &str, map: &BTreeMap<String, usize>| {
            map.get(label).copied().ok_or(SystemError::UnknownLabel {
                context,
                label: label.to_owned(),
            })
        };
        let mut transitions = Vec::new();
        for (k, (src, inp, tgt)) in doc.transitions.iter().enumerate() {
            let context = |role: &str| format!("transition {k} ({role})");
            transitions.push((
                lookup(context("source"), src, &index)?,
                lookup(context("input"), inp, &input_index)?,
                lookup(context("target"), tgt, &index)?,
            ));
        }

        let n = doc.states.len();
        let metric = match doc.metric {
            None => Metric::InfinityNorm,
            Some(m) if m.kind == "infinity" => {
                if !m.entries.is_empty() {
                    return Err(SystemError::UnexpectedTableEntries);
                }
                Metric::InfinityNorm
            }
            Some(m) if m.kind == "table" => {
                let mut dist = vec![f64::NAN; n * n];
                for i in 0..n {
                    dist[i * n + i] = 0.0;
                }
                for (a, b, d) in &m.entries {
                    let i = lookup(format!("metric entry ({a},{b})"), a, &index)?;
                    let j = lookup(format!("metric entry ({a},{b})"), b, &index)?;
                    for &(r, c) in &[(i, j), (j, i)] {
                        let slot = &mut dist[r * n + c];
                        if !slot.is_nan() && *slot != *d {
                            return Err(SystemError::TableConflict {
                                a: a.clone(),
                                b: b.clone(),
                            });
                        }
                        *slot = *d;
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        if dist[i * n + j].is_nan() {
                            return Err(SystemError::TableIncomplete {
                                a: doc.states[i].label.clone(),
                                b: doc.states[j].label.clone(),
                            });
                        }
                    }
                }
                Metric::Table(dist)
            }
            Some(m) => return Err(SystemError::UnknownMetricKind(m.kind)),
        };

        Self::new(
            doc.states
                .into_iter()
                .map(|s| StateSpec {
                    label: s.label,
                    output: s.output,
                    initial: s.initial,
                    secret: s.secret,
                })
                .collect(),
            doc.inputs,
            transitions,
            metric,
        )
    }

    /// Serializes back to the model document schema. Together with
    /// [`MetricSystem::from_json_str`] this round-trips bit-exactly.
    pub fn to_json_string(&self) -> String {
        let doc = ModelDocument {
            states: (0..self.labels.len())
                .map(|i| StateDocument {
                    label: self.labels[i].clone(),
                    output: self.outputs[i].clone(),
                    initial: self.initial.contains(i),
                    secret: self.secret.contains(i),
                })
                .collect(),
            inputs: self.inputs.clone(),
            transitions: self
                .transitions
                .iter()
                .map(|&(s, u, t)| {
                    (
                        self.labels[s].clone(),
                        self.inputs[u].clone(),
                        self.labels[t].clone(),
                    )
                })
                .collect(),
            metric: match &self.metric {
                Metric::InfinityNorm => None,
                Metric::Table(dist) => {
                    let n = self.labels.len();
                    let mut entries = Vec::new();
                    for i in 0..n {
                        for j in (i + 1)..n {
                            entries.push((
                                self.labels[i].clone(),
                                self.labels[j].clone(),
                                dist[i * n + j],
                            ));
                        }
                    }
                    Some(MetricDocument {
                        kind: "table".to_owned(),
                        entries,
                    })
                }
            },
        };
        serde_json::to_string_pretty(&doc).expect("model document serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    states: Vec<StateDocument>,
    inputs: Vec<String>,
    transitions: Vec<(String, String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric: Option<MetricDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDocument {
    label: String,
    output: Vec<f64>,
    #[serde(default)]
    initial: bool,
    #[serde(default)]
    secret: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricDocument {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    entries: Vec<(String, String, f64)>,
}
