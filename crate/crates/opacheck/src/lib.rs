//! Toolkit for deciding approximate (delta-parameterized) opacity of finite
//! metric transition systems, checking epsilon-approximate opacity-preserving
//! simulation relations between systems, and constructing opacity-preserving
//! finite symbolic models of incrementally stable discrete-time control
//! systems.
//!
//! The crate is organized around five layers:
//!
//! - [`system`] — metric transition systems, runs, and the set primitives
//!   (`Post`, `Pre`, delta-closeness) everything else consumes;
//! - [`estimator`] — reachable fragments of the delta-approximate
//!   initial-state and current-state estimators;
//! - [`opacity`] — verdicts for initial-state, current-state and
//!   infinite-step opacity, witness extraction, and opacity thresholds;
//! - [`simulation`] — validation and greatest-fixpoint computation of
//!   opacity-preserving simulation relations, plus the opacity transfer
//!   rules between related systems;
//! - [`abstraction`] — grid quantization of control systems, feasibility of
//!   quantization parameters under ISS / Lyapunov certificates, and symbolic
//!   model construction.
//!
//! [`oracle`] holds an independent brute-force checker used to certify
//! fixtures and cross-validate the estimator pipeline on small systems.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `opacheck` binary for the command-line front end.

pub mod abstraction;
pub mod estimator;
pub mod kfunction;
pub mod opacity;
pub mod oracle;
pub mod simulation;
pub mod system;

pub use abstraction::{
    build_symbolic_model, canonical_relation_check, check_quantization_iss,
    check_quantization_lyapunov, end_to_end_verify, grid_points, linear_certificate,
    suggest_quantization, BoxDomain, BoxUnion, Certificate, ControlSystem, Dynamics,
    IssCertificate, LyapunovCertificate, OutputMap, PipelineConclusion, PipelineOptions,
    Quantization,
};
pub use estimator::{
    build_current_estimator, build_initial_estimator, Estimator, EstimatorKind, EstimatorNode,
    EstimatorOptions,
};
pub use kfunction::KFunction;
pub use opacity::{
    opacity_threshold, verify, verify_current_state, verify_infinite_step, verify_initial_state,
    OpacityProperty, OpacityVerdict,
};
pub use oracle::{oracle_belief, oracle_opacity, run_is_violation, sufficient_depth, OracleVerdict};
pub use simulation::{
    check_relation, compute_maximal_relation, transfer, MaximalRelation, RelationCheck,
    RelationKind, SimRelation, TransferPremise, TransferResult,
};
pub use system::{Metric, MetricSystem, Run, StateSet, StateSpec};

pub(crate) mod numeric {
    /// Relative floating-point slack for derived-arithmetic comparisons
    /// (quantization feasibility, transfer preconditions), where acceptance
    /// thresholds routinely sit exactly on rounding boundaries. Metric
    /// comparisons `d <= delta` are exact IEEE comparisons and do not go
    /// through this.
    pub(crate) fn tolerance(scale: f64) -> f64 {
        1e-12 * scale.abs().max(1.0)
    }
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use crate::system::MetricSystem;

    /// Four-state example system used throughout the unit tests.
    pub fn ex1() -> MetricSystem {
        MetricSystem::from_json_str(include_str!("../fixtures/ex1.json")).unwrap()
    }
}
