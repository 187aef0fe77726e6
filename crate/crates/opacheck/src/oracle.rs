//! Definition-level brute-force checker, used to certify fixtures and to
//! property-test the estimator pipeline on small systems.
//!
//! [`oracle_opacity`] enumerates every run of the system up to a depth bound
//! and evaluates the opacity definitions literally: for each enumerated run
//! it decides the existential side (is there a delta-close run ending, or
//! starting, or passing outside the secret set?) by propagating the set of
//! matching-run endpoints along the run. [`oracle_belief`] enumerates the
//! matching runs themselves and collects their start or end states, with no
//! set propagation at all, so estimator beliefs can be checked against a
//! computation that shares none of the estimator machinery.
//!
//! A shortest violation always corresponds to a simple path of the relevant
//! estimator, so a depth of `S_I`'s (respectively `S_C`'s) reachable node
//! count — their sum for infinite-step opacity — makes the bounded verdict
//! exact. [`sufficient_depth`] computes that bound.
//!
//! This is a certification tool for toy sizes. Enumeration cost is guarded:
//! the oracle refuses to start when the run count exceeds the budget instead
//! of silently truncating.

use thiserror::Error;

use crate::estimator::{Estimator, EstimatorKind, EstimatorOptions};
use crate::opacity::OpacityProperty;
use crate::system::{MetricSystem, Run, StateSet};

#[derive(Debug, Clone)]
pub struct OracleOptions {
    /// Maximum number of run prefixes the enumeration may visit.
    pub budget: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { budget: 10_000_000 }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("delta must be a finite nonnegative number, got {0}")]
    InvalidDelta(f64),
    #[error("enumeration budget exceeded ({visited} run prefixes, budget {budget})")]
    BudgetExceeded { visited: u64, budget: u64 },
    #[error("reference run must contain at least one state")]
    EmptyReferenceRun,
    #[error("run is not a valid run of the system")]
    InvalidRun,
}

/// Bounded-depth verdict from literal run enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleVerdict {
    pub property: OpacityProperty,
    pub delta: f64,
    pub depth: usize,
    /// No violating run of length up to `depth` exists.
    pub holds_up_to_depth: bool,
    pub witness: Option<Run>,
}

/// Number of runs of length at most `depth` starting in `roots`, saturating.
/// Useful as a tractability estimate before calling the oracle.
pub fn count_runs(system: &MetricSystem, roots: &StateSet, depth: usize) -> u128 {
    let n = system.n_states();
    let mut layer = vec![0u128; n];
    for x in roots.iter() {
        layer[x] = 1;
    }
    let mut total: u128 = layer.iter().sum();
    for _ in 0..depth {
        let mut next = vec![0u128; n];
        for (x, u, y) in system.transitions() {
            let _ = u;
            next[y] = next[y].saturating_add(layer[x]);
        }
        let layer_sum: u128 = next.iter().fold(0, |acc, v| acc.saturating_add(*v));
        if layer_sum == 0 {
            break;
        }
        total = total.saturating_add(layer_sum);
        layer = next;
    }
    total
}

/// Estimator node count, which bounds the length of a shortest violation
/// and therefore makes [`oracle_opacity`] exact at that depth.
pub fn sufficient_depth(
    system: &MetricSystem,
    delta: f64,
    property: OpacityProperty,
    options: &EstimatorOptions,
) -> Result<usize, crate::estimator::EstimatorError> {
    let build = |kind| Estimator::build(system, kind, delta, options).map(|e| e.n_nodes());
    Ok(match property {
        OpacityProperty::Initial => build(EstimatorKind::Initial)?,
        OpacityProperty::Current => build(EstimatorKind::Current)?,
        OpacityProperty::Infinite => build(EstimatorKind::Initial)? + build(EstimatorKind::Current)?,
    })
}

/// Enumerates all runs of length up to `depth` and tests the opacity
/// definition literally. Violations of positive length are preferred as
/// witnesses; a zero-length witness is returned only when it is the sole
/// kind of violation within the depth bound.
pub fn oracle_opacity(
    system: &MetricSystem,
    delta: f64,
    property: OpacityProperty,
    depth: usize,
    options: &OracleOptions,
) -> Result<OracleVerdict, OracleError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(OracleError::InvalidDelta(delta));
    }
    let n = system.n_states();
    let close: Vec<StateSet> = (0..n).map(|x| system.close_set(x, delta)).collect();
    let roots: Vec<usize> = match property {
        OpacityProperty::Initial => system
            .initial_states()
            .intersection(system.secret_states())
            .iter()
            .collect(),
        _ => system.initial_states().iter().collect(),
    };
    let match_seed = match property {
        OpacityProperty::Initial => system
            .initial_states()
            .difference(system.secret_states()),
        _ => system.initial_states().clone(),
    };

    let mut search = Search {
        system,
        delta,
        property,
        close: &close,
        budget: options.budget,
        visited: 0,
        target: 0,
        reached_target: false,
        states: Vec::new(),
        inputs: Vec::new(),
        matched: Vec::new(),
        zero_witness: None,
    };

    // Iterative deepening: runs are checked shortest-first, and the first
    // violation at each length is the first in enumeration order.
    for target in 0..=depth {
        search.target = target;
        search.reached_target = false;
        for &root in &roots {
            search.visit(1)?;
            search.states.push(root);
            search.matched.push(close[root].intersection(&match_seed));
            let found = search.explore()?;
            search.states.pop();
            search.matched.pop();
            if let Some(witness) = found {
                return Ok(OracleVerdict {
                    property,
                    delta,
                    depth,
                    holds_up_to_depth: false,
                    witness: Some(witness),
                });
            }
        }
        if !search.reached_target {
            // No run of this length exists, so none longer does either.
            break;
        }
    }
    let witness = search.zero_witness;
    Ok(OracleVerdict {
        property,
        delta,
        depth,
        holds_up_to_depth: witness.is_none(),
        witness,
    })
}

struct Search<'a> {
    system: &'a MetricSystem,
    delta: f64,
    property: OpacityProperty,
    close: &'a [StateSet],
    budget: u64,
    visited: u64,
    target: usize,
    reached_target: bool,
    states: Vec<usize>,
    inputs: Vec<usize>,
    matched: Vec<StateSet>,
    zero_witness: Option<Run>,
}

impl Search<'_> {
    fn visit(&mut self, count: u64) -> Result<(), OracleError> {
        self.visited += count;
        if self.visited > self.budget {
            return Err(OracleError::BudgetExceeded {
                visited: self.visited,
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn explore(&mut self) -> Result<Option<Run>, OracleError> {
        if self.inputs.len() == self.target {
            self.reached_target = true;
            if self.violates() {
                let run = Run {
                    states: self.states.clone(),
                    inputs: self.inputs.clone(),
                };
                if self.target == 0 {
                    if self.zero_witness.is_none() {
                        self.zero_witness = Some(run);
                    }
                } else {
                    return Ok(Some(run));
                }
            }
            return Ok(None);
        }
        let current = *self.states.last().expect("run is nonempty");
        for input in 0..self.system.n_inputs() {
            for next in self.system.successors(current, input).iter() {
                self.visit(1)?;
                let matched = self
                    .system
                    .post_any(self.matched.last().expect("seeded"))
                    .intersection(&self.close[next]);
                self.states.push(next);
                self.inputs.push(input);
                self.matched.push(matched);
                let found = self.explore()?;
                self.states.pop();
                self.inputs.pop();
                self.matched.pop();
                if found.is_some() {
                    return Ok(found);
                }
            }
        }
        Ok(None)
    }

    fn violates(&self) -> bool {
        let secret = self.system.secret_states();
        match self.property {
            OpacityProperty::Initial => self.matched.last().expect("seeded").is_empty(),
            OpacityProperty::Current => {
                let last = *self.states.last().expect("run is nonempty");
                self.system.is_secret(last)
                    && self.matched.last().expect("seeded").is_subset(secret)
            }
            OpacityProperty::Infinite => {
                let backward = backward_sets(self.system, self.delta, &self.states);
                self.states.iter().enumerate().any(|(k, &x)| {
                    self.system.is_secret(x)
                        && self.matched[k].intersection(&backward[k]).is_subset(secret)
                })
            }
        }
    }
}

/// End states (for the current kind) or start states (for the initial kind)
/// of all runs that delta-match the given reference state sequence, computed
/// by literal enumeration of the matching runs.
///
/// For the initial kind the reference sequence is read the way initial-state
/// estimator paths are: a matching run traverses it in reverse, so position
/// `j` of a matching run is compared against reference `n - j`, and the
/// collected states are the matching runs' start states.
pub fn oracle_belief(
    system: &MetricSystem,
    delta: f64,
    kind: EstimatorKind,
    references: &[usize],
    options: &OracleOptions,
) -> Result<StateSet, OracleError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(OracleError::InvalidDelta(delta));
    }
    if references.is_empty() {
        return Err(OracleError::EmptyReferenceRun);
    }
    let n = system.n_states();
    // Output targets in run-position order.
    let targets: Vec<usize> = match kind {
        EstimatorKind::Current => references.to_vec(),
        EstimatorKind::Initial => references.iter().rev().copied().collect(),
    };
    let mut result = StateSet::empty(n);
    let mut visited: u64 = 0;
    let roots: Vec<usize> = (0..n)
        .filter(|&x| system.within(targets[0], x, delta))
        .filter(|&x| match kind {
            EstimatorKind::Current => system.is_initial(x),
            EstimatorKind::Initial => true,
        })
        .collect();

    // Plain depth-first enumeration of matching runs; prefixes that already
    // exceed the distance bound cannot extend to a match, so they are cut.
    fn extend(
        system: &MetricSystem,
        targets: &[usize],
        delta: f64,
        position: usize,
        state: usize,
        kind: EstimatorKind,
        result: &mut StateSet,
        root: usize,
        visited: &mut u64,
        budget: u64,
    ) -> Result<bool, OracleError> {
        *visited += 1;
        if *visited > budget {
            return Err(OracleError::BudgetExceeded {
                visited: *visited,
                budget,
            });
        }
        if position == targets.len() - 1 {
            match kind {
                EstimatorKind::Current => result.insert(state),
                EstimatorKind::Initial => result.insert(root),
            }
            return Ok(true);
        }
        let mut matched = false;
        for input in 0..system.n_inputs() {
            for next in system.successors(state, input).iter() {
                if !system.within(targets[position + 1], next, delta) {
                    continue;
                }
                let hit = extend(
                    system, targets, delta, position + 1, next, kind, result, root, visited, budget,
                )?;
                matched |= hit;
                // For the initial kind only the root membership matters, so
                // one completed match per root is enough.
                if matched && kind == EstimatorKind::Initial {
                    return Ok(true);
                }
            }
        }
        Ok(matched)
    }

    for root in roots {
        extend(
            system,
            &targets,
            delta,
            0,
            root,
            kind,
            &mut result,
            root,
            &mut visited,
            options.budget,
        )?;
    }
    Ok(result)
}

/// Definition-level check that a concrete run violates the property: the
/// run exhibits the secret (starts in, ends in, or visits a secret state)
/// and no delta-close run provides the required non-secret alternative.
pub fn run_is_violation(
    system: &MetricSystem,
    delta: f64,
    property: OpacityProperty,
    run: &Run,
) -> Result<bool, OracleError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(OracleError::InvalidDelta(delta));
    }
    if !system.is_valid_run(run) {
        return Err(OracleError::InvalidRun);
    }
    let start = run.states[0];
    let end = *run.states.last().expect("run is nonempty");
    Ok(match property {
        OpacityProperty::Initial => {
            system.is_initial(start)
                && system.is_secret(start)
                && forward_sets(
                    system,
                    delta,
                    &run.states,
                    &system.initial_states().difference(system.secret_states()),
                )
                .last()
                .expect("nonempty")
                .is_empty()
        }
        OpacityProperty::Current => {
            system.is_initial(start)
                && system.is_secret(end)
                && forward_sets(system, delta, &run.states, system.initial_states())
                    .last()
                    .expect("nonempty")
                    .is_subset(system.secret_states())
        }
        OpacityProperty::Infinite => {
            if !system.is_initial(start) {
                return Ok(false);
            }
            let forward = forward_sets(system, delta, &run.states, system.initial_states());
            let backward = backward_sets(system, delta, &run.states);
            run.states.iter().enumerate().any(|(k, &x)| {
                system.is_secret(x)
                    && forward[k]
                        .intersection(&backward[k])
                        .is_subset(system.secret_states())
            })
        }
    })
}

/// `sets[i]` = states reachable at position `i` by runs from `roots` whose
/// outputs stay delta-close to the given states up to position `i`.
fn forward_sets(
    system: &MetricSystem,
    delta: f64,
    states: &[usize],
    roots: &StateSet,
) -> Vec<StateSet> {
    let mut sets = Vec::with_capacity(states.len());
    sets.push(system.close_set(states[0], delta).intersection(roots));
    for &x in &states[1..] {
        let next = system
            .post_any(sets.last().expect("seeded"))
            .intersection(&system.close_set(x, delta));
        sets.push(next);
    }
    sets
}

/// `sets[i]` = states from which some delta-close continuation of positions
/// `i..` exists.
fn backward_sets(system: &MetricSystem, delta: f64, states: &[usize]) -> Vec<StateSet> {
    let mut sets = vec![StateSet::empty(system.n_states()); states.len()];
    let last = states.len() - 1;
    sets[last] = system.close_set(states[last], delta);
    for i in (0..last).rev() {
        sets[i] = system
            .pre_any(&sets[i + 1])
            .intersection(&system.close_set(states[i], delta));
    }
    sets
}
