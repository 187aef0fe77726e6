//! Epsilon-approximate opacity-preserving simulation relations: validation
//! of user-supplied relations, greatest-fixpoint computation of the maximal
//! relation, and the opacity transfer rules between related systems.
//!
//! A relation is checked clause by clause against its kind's definition:
//! condition (1) constrains how initial (and secret/non-secret initial)
//! states are covered, condition (2) bounds the output distance of every
//! related pair by epsilon, and condition (3) demands matching successors —
//! for the current-state and infinite-step kinds also secret-successor and
//! non-secret-successor matching. All condition-(3) clauses are monotone in
//! the relation, so the greatest fixpoint below the epsilon-ball relation
//! exists and chaotic iteration (here: round-based removal) computes it.
//! Condition (1) is a global property of the final relation and is checked
//! after the fixpoint.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;
use crate::opacity::OpacityProperty;
use crate::system::{Metric, MetricSystem, StateSet};

/// Which opacity notion a relation preserves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    #[serde(rename = "initial")]
    InitSop,
    #[serde(rename = "current")]
    CurSop,
    #[serde(rename = "infinite")]
    InfSop,
}

impl RelationKind {
    pub fn property(self) -> OpacityProperty {
        match self {
            RelationKind::InitSop => OpacityProperty::Initial,
            RelationKind::CurSop => OpacityProperty::Current,
            RelationKind::InfSop => OpacityProperty::Infinite,
        }
    }
}

impl std::fmt::Display for RelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RelationKind::InitSop => "InitSOP",
            RelationKind::CurSop => "CurSOP",
            RelationKind::InfSop => "InfSOP",
        })
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("epsilon must be a finite nonnegative number, got {0}")]
    InvalidEpsilon(f64),
    #[error("output dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(
        "explicit distance tables are per-system and define no cross-system distance; \
         simulation operations need the infinity-norm metric on both systems"
    )]
    TableMetricUnsupported,
    #[error("relation pair ({0},{1}) is out of range")]
    PairOutOfRange(usize, usize),
    #[error("relation references unknown state label `{0}`")]
    UnknownLabel(String),
}

/// A set of cross-system state pairs together with the kind and epsilon it
/// was validated for.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRelation {
    pub kind: RelationKind,
    pub epsilon: f64,
    pub pairs: BTreeSet<(usize, usize)>,
    pub validated: bool,
}

/// One failed clause, with the states it failed at.
#[derive(Debug, Clone, Serialize)]
pub struct RelationViolation {
    /// Clause identifier relative to the kind's definition, e.g. "1a", "2", "3c".
    pub clause: &'static str,
    pub state_a: Option<String>,
    pub state_b: Option<String>,
    pub description: String,
}

/// Outcome of validating a user-supplied relation.
#[derive(Debug)]
pub enum RelationCheck {
    Validated(SimRelation),
    Violation(RelationViolation),
}

/// Maximal relation plus whether condition (1) holds on it, i.e. whether the
/// left system is simulated by the right one at this epsilon and kind.
#[derive(Debug, Clone)]
pub struct MaximalRelation {
    pub relation: SimRelation,
    pub simulates: bool,
}

/// On-disk relation format: `{kind, epsilon, pairs: [[labelA, labelB], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationDocument {
    pub kind: RelationKind,
    pub epsilon: f64,
    pub pairs: Vec<(String, String)>,
}

impl SimRelation {
    pub fn to_document(&self, sa: &MetricSystem, sb: &MetricSystem) -> RelationDocument {
        RelationDocument {
            kind: self.kind,
            epsilon: self.epsilon,
            pairs: self
                .pairs
                .iter()
                .map(|&(a, b)| (sa.label(a).to_owned(), sb.label(b).to_owned()))
                .collect(),
        }
    }
}

/// Resolves a relation document's label pairs against two systems.
pub fn resolve_relation_pairs(
    document: &RelationDocument,
    sa: &MetricSystem,
    sb: &MetricSystem,
) -> Result<BTreeSet<(usize, usize)>, SimulationError> {
    document
        .pairs
        .iter()
        .map(|(la, lb)| {
            let a = sa
                .state_by_label(la)
                .ok_or_else(|| SimulationError::UnknownLabel(la.clone()))?;
            let b = sb
                .state_by_label(lb)
                .ok_or_else(|| SimulationError::UnknownLabel(lb.clone()))?;
            Ok((a, b))
        })
        .collect()
}

fn cross_distance(sa: &MetricSystem, sb: &MetricSystem, xa: usize, xb: usize) -> f64 {
    sa.output(xa)
        .iter()
        .zip(sb.output(xb))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn validate_inputs(
    sa: &MetricSystem,
    sb: &MetricSystem,
    epsilon: f64,
) -> Result<(), SimulationError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(SimulationError::InvalidEpsilon(epsilon));
    }
    if sa.output_dim() != sb.output_dim() {
        return Err(SimulationError::DimensionMismatch(
            sa.output_dim(),
            sb.output_dim(),
        ));
    }
    if !matches!(sa.metric(), Metric::InfinityNorm) || !matches!(sb.metric(), Metric::InfinityNorm)
    {
        return Err(SimulationError::TableMetricUnsupported);
    }
    Ok(())
}

struct PairMatrix {
    rows: Vec<StateSet>, // per a-state: related b-states
    cols: Vec<StateSet>, // per b-state: related a-states
}

impl PairMatrix {
    fn from_pairs(na: usize, nb: usize, pairs: &BTreeSet<(usize, usize)>) -> Self {
        let mut rows = vec![StateSet::empty(nb); na];
        let mut cols = vec![StateSet::empty(na); nb];
        for &(a, b) in pairs {
            rows[a].insert(b);
            cols[b].insert(a);
        }
        PairMatrix { rows, cols }
    }

    fn remove(&mut self, a: usize, b: usize) {
        self.rows[a].remove(b);
        self.cols[b].remove(a);
    }

    fn pairs(&self) -> BTreeSet<(usize, usize)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.iter().map(move |b| (a, b)))
            .collect()
    }
}

/// First violated condition-(1) clause, scanning states in index order.
fn condition1_violation(
    sa: &MetricSystem,
    sb: &MetricSystem,
    kind: RelationKind,
    matrix: &PairMatrix,
) -> Option<RelationViolation> {
    let secret_initial_b = sb.initial_states().intersection(sb.secret_states());
    let nonsecret_initial_a = sa.initial_states().difference(sa.secret_states());
    let nonsecret_initial_b = sb.initial_states().difference(sb.secret_states());

    let plain = |clause: &'static str| -> Option<RelationViolation> {
        for xa0 in sa.initial_states().iter() {
            if matrix.rows[xa0].intersection(sb.initial_states()).is_empty() {
                return Some(RelationViolation {
                    clause,
                    state_a: Some(sa.label(xa0).to_owned()),
                    state_b: None,
                    description: format!(
                        "initial state {} is not related to any initial state",
                        sa.label(xa0)
                    ),
                });
            }
        }
        None
    };
    let secret = |clause: &'static str| -> Option<RelationViolation> {
        for xa0 in sa
            .initial_states()
            .intersection(sa.secret_states())
            .iter()
        {
            if matrix.rows[xa0].intersection(&secret_initial_b).is_empty() {
                return Some(RelationViolation {
                    clause,
                    state_a: Some(sa.label(xa0).to_owned()),
                    state_b: None,
                    description: format!(
                        "secret initial state {} is not related to any secret initial state",
                        sa.label(xa0)
                    ),
                });
            }
        }
        None
    };
    let nonsecret = |clause: &'static str| -> Option<RelationViolation> {
        for xb0 in nonsecret_initial_b.iter() {
            if matrix.cols[xb0].intersection(&nonsecret_initial_a).is_empty() {
                return Some(RelationViolation {
                    clause,
                    state_a: None,
                    state_b: Some(sb.label(xb0).to_owned()),
                    description: format!(
                        "non-secret initial state {} is not related to any non-secret initial state",
                        sb.label(xb0)
                    ),
                });
            }
        }
        None
    };

    match kind {
        RelationKind::InitSop => secret("1a").or_else(|| nonsecret("1b")),
        RelationKind::CurSop => plain("1"),
        RelationKind::InfSop => secret("1b")
            .or_else(|| plain("1a"))
            .or_else(|| nonsecret("1c")),
    }
}

/// First violated pair-level clause for `(xa, xb)`: condition (2) when
/// requested, then the kind's condition-(3) clauses.
fn pair_violation(
    sa: &MetricSystem,
    sb: &MetricSystem,
    kind: RelationKind,
    epsilon: f64,
    xa: usize,
    xb: usize,
    matrix: &PairMatrix,
    include_condition2: bool,
) -> Option<RelationViolation> {
    let at = |clause: &'static str, description: String| RelationViolation {
        clause,
        state_a: Some(sa.label(xa).to_owned()),
        state_b: Some(sb.label(xb).to_owned()),
        description,
    };
    if include_condition2 {
        let d = cross_distance(sa, sb, xa, xb);
        if d > epsilon {
            return Some(at(
                "2",
                format!(
                    "d(H({}), H({})) = {d} exceeds epsilon = {epsilon}",
                    sa.label(xa),
                    sb.label(xb)
                ),
            ));
        }
    }

    let succ_a = sa.any_successors(xa);
    let succ_b = sb.any_successors(xb);
    // (3)(a): every a-successor is matched by some related b-successor.
    for a2 in succ_a.iter() {
        if matrix.rows[a2].intersection(succ_b).is_empty() {
            return Some(at(
                "3a",
                format!("successor {} of {} has no related successor of {}",
                    sa.label(a2), sa.label(xa), sb.label(xb)),
            ));
        }
    }
    match kind {
        RelationKind::InitSop => {
            // (3)(b): every b-successor is matched by some related a-successor.
            for b2 in succ_b.iter() {
                if matrix.cols[b2].intersection(succ_a).is_empty() {
                    return Some(at(
                        "3b",
                        format!("successor {} of {} has no related successor of {}",
                            sb.label(b2), sb.label(xb), sa.label(xa)),
                    ));
                }
            }
        }
        RelationKind::CurSop | RelationKind::InfSop => {
            // (3)(b): secret a-successors need related secret b-successors.
            for a2 in succ_a.intersection(sa.secret_states()).iter() {
                if matrix.rows[a2]
                    .intersection(succ_b)
                    .intersection(sb.secret_states())
                    .is_empty()
                {
                    return Some(at(
                        "3b",
                        format!("secret successor {} of {} has no related secret successor of {}",
                            sa.label(a2), sa.label(xa), sb.label(xb)),
                    ));
                }
            }
            // (3)(c): every b-successor is matched by some related a-successor.
            for b2 in succ_b.iter() {
                if matrix.cols[b2].intersection(succ_a).is_empty() {
                    return Some(at(
                        "3c",
                        format!("successor {} of {} has no related successor of {}",
                            sb.label(b2), sb.label(xb), sa.label(xa)),
                    ));
                }
            }
            // (3)(d): non-secret b-successors need related non-secret a-successors.
            let nonsecret_succ_a = succ_a.difference(sa.secret_states());
            for b2 in succ_b.difference(sb.secret_states()).iter() {
                if matrix.cols[b2].intersection(&nonsecret_succ_a).is_empty() {
                    return Some(at(
                        "3d",
                        format!(
                            "non-secret successor {} of {} has no related non-secret successor of {}",
                            sb.label(b2), sb.label(xb), sa.label(xa)),
                    ));
                }
            }
        }
    }
    None
}

/// Validates a user-supplied relation against its kind's definition.
pub fn check_relation(
    sa: &MetricSystem,
    sb: &MetricSystem,
    pairs: &BTreeSet<(usize, usize)>,
    epsilon: f64,
    kind: RelationKind,
) -> Result<RelationCheck, SimulationError> {
    validate_inputs(sa, sb, epsilon)?;
    for &(a, b) in pairs {
        if a >= sa.n_states() || b >= sb.n_states() {
            return Err(SimulationError::PairOutOfRange(a, b));
        }
    }
    let matrix = PairMatrix::from_pairs(sa.n_states(), sb.n_states(), pairs);
    if let Some(violation) = condition1_violation(sa, sb, kind, &matrix) {
        return Ok(RelationCheck::Violation(violation));
    }
    for &(xa, xb) in pairs {
        if let Some(violation) = pair_violation(sa, sb, kind, epsilon, xa, xb, &matrix, true) {
            return Ok(RelationCheck::Violation(violation));
        }
    }
    Ok(RelationCheck::Validated(SimRelation {
        kind,
        epsilon,
        pairs: pairs.clone(),
        validated: true,
    }))
}

/// Greatest relation satisfying conditions (2) and (3), computed by
/// round-based removal from the epsilon-ball relation. Every relation that
/// passes [`check_relation`] is a subset of the result. `simulates` reports
/// condition (1) on the result.
pub fn compute_maximal_relation(
    sa: &MetricSystem,
    sb: &MetricSystem,
    epsilon: f64,
    kind: RelationKind,
) -> Result<MaximalRelation, SimulationError> {
    validate_inputs(sa, sb, epsilon)?;
    let (na, nb) = (sa.n_states(), sb.n_states());
    let mut seed = BTreeSet::new();
    for xa in 0..na {
        for xb in 0..nb {
            if cross_distance(sa, sb, xa, xb) <= epsilon {
                seed.insert((xa, xb));
            }
        }
    }
    let mut matrix = PairMatrix::from_pairs(na, nb, &seed);
    // Each round removes the pairs that violate some condition-(3) clause
    // with respect to the current relation; at most na*nb rounds.
    loop {
        let mut removals = Vec::new();
        for xa in 0..na {
            for xb in matrix.rows[xa].iter() {
                if pair_violation(sa, sb, kind, epsilon, xa, xb, &matrix, false).is_some() {
                    removals.push((xa, xb));
                }
            }
        }
        if removals.is_empty() {
            break;
        }
        for (xa, xb) in removals {
            matrix.remove(xa, xb);
        }
    }
    let simulates = condition1_violation(sa, sb, kind, &matrix).is_none();
    Ok(MaximalRelation {
        relation: SimRelation {
            kind,
            epsilon,
            pairs: matrix.pairs(),
            validated: true,
        },
        simulates,
    })
}

/// A verdict about one system, stated as the premise of a transfer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferPremise {
    pub system: String,
    pub property: OpacityProperty,
    pub delta: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferDirection {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferConclusion {
    pub system: String,
    pub property: OpacityProperty,
    pub delta: f64,
    pub holds: bool,
}

/// A conclusion guaranteed by the transfer theorems, with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferResult {
    pub direction: TransferDirection,
    pub relation_kind: RelationKind,
    pub epsilon: f64,
    pub premise: TransferPremise,
    pub conclusion: TransferConclusion,
}

impl TransferResult {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("transfer result serialization cannot fail")
    }
}

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("relation has not been validated")]
    NotValidated,
    #[error("relation kind {kind} does not preserve property {property}")]
    KindMismatch {
        kind: RelationKind,
        property: OpacityProperty,
    },
    #[error("delta must be a finite nonnegative number, got {0}")]
    InvalidDelta(f64),
    #[error("positive transfer requires epsilon <= delta/2 (epsilon {epsilon}, delta {delta})")]
    EpsilonTooLarge { epsilon: f64, delta: f64 },
    #[error(
        "premise delta {premise} does not cover target delta {target}: a positive premise must \
         hold at delta - 2*epsilon = {required}"
    )]
    InsufficientPremise {
        premise: f64,
        target: f64,
        required: f64,
    },
    #[error(
        "premise delta {premise} does not cover target delta {target}: a negative premise must \
         fail at delta + 2*epsilon = {required}"
    )]
    InsufficientNegativePremise {
        premise: f64,
        target: f64,
        required: f64,
    },
}

/// Applies the transfer theorems along a validated relation.
///
/// Positive direction (premise holds, relation certifies premise-system
/// simulating the conclusion system's behavior): "holds at `delta - 2e`"
/// becomes "holds at `delta`", and requires `epsilon <= delta/2`. Negative
/// direction (premise fails, relation oriented the other way): "fails at
/// `delta + 2e`" becomes "fails at `delta`". Verification is never invoked
/// on the conclusion system.
pub fn transfer(
    premise: &TransferPremise,
    relation: &SimRelation,
    delta: f64,
    conclusion_system: &str,
) -> Result<TransferResult, TransferError> {
    if !relation.validated {
        return Err(TransferError::NotValidated);
    }
    transfer_arithmetic(premise, relation.kind, relation.epsilon, delta, conclusion_system)
}

/// The delta/epsilon arithmetic of the transfer theorems, shared with the
/// abstraction pipeline where the relation is certified by the quantization
/// feasibility theorems instead of an explicit pair set.
pub(crate) fn transfer_arithmetic(
    premise: &TransferPremise,
    kind: RelationKind,
    epsilon: f64,
    delta: f64,
    conclusion_system: &str,
) -> Result<TransferResult, TransferError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(TransferError::InvalidDelta(delta));
    }
    if kind.property() != premise.property {
        return Err(TransferError::KindMismatch {
            kind,
            property: premise.property,
        });
    }
    let tol = numeric::tolerance(delta.max(epsilon));
    if premise.holds {
        if epsilon > delta / 2.0 + tol {
            return Err(TransferError::EpsilonTooLarge { epsilon, delta });
        }
        let required = delta - 2.0 * epsilon;
        if premise.delta > required + tol {
            return Err(TransferError::InsufficientPremise {
                premise: premise.delta,
                target: delta,
                required,
            });
        }
        Ok(TransferResult {
            direction: TransferDirection::Positive,
            relation_kind: kind,
            epsilon,
            premise: premise.clone(),
            conclusion: TransferConclusion {
                system: conclusion_system.to_owned(),
                property: premise.property,
                delta,
                holds: true,
            },
        })
    } else {
        let required = delta + 2.0 * epsilon;
        if premise.delta < required - tol {
            return Err(TransferError::InsufficientNegativePremise {
                premise: premise.delta,
                target: delta,
                required,
            });
        }
        Ok(TransferResult {
            direction: TransferDirection::Negative,
            relation_kind: kind,
            epsilon,
            premise: premise.clone(),
            conclusion: TransferConclusion {
                system: conclusion_system.to_owned(),
                property: premise.property,
                delta,
                holds: false,
            },
        })
    }
}
