//! Command-line front end. All computation lives in the library; this binary
//! parses arguments, loads files, and maps outcomes to exit codes:
//! 0 = property holds / relation certified, 1 = fails / violated / not
//! certified / inconclusive, 2 = any error. Output JSON is deterministic.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use opacheck::abstraction::{self, PipelineConclusion, PipelineOptions};
use opacheck::estimator::{Estimator, EstimatorKind, EstimatorOptions};
use opacheck::opacity::{self, OpacityProperty};
use opacheck::oracle;
use opacheck::simulation::{self, RelationCheck, RelationDocument, RelationKind};
use opacheck::system::MetricSystem;

#[derive(Parser)]
#[command(
    name = "opacheck",
    version,
    about = "Approximate-opacity verification for metric transition systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropertyArg {
    Initial,
    Current,
    Infinite,
}

impl From<PropertyArg> for OpacityProperty {
    fn from(value: PropertyArg) -> Self {
        match value {
            PropertyArg::Initial => OpacityProperty::Initial,
            PropertyArg::Current => OpacityProperty::Current,
            PropertyArg::Infinite => OpacityProperty::Infinite,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorKindArg {
    Init,
    Cur,
}

#[derive(Clone, Copy, ValueEnum)]
enum RelationKindArg {
    #[value(alias = "initial")]
    Init,
    #[value(alias = "current")]
    Cur,
    #[value(alias = "infinite")]
    Inf,
}

impl From<RelationKindArg> for RelationKind {
    fn from(value: RelationKindArg) -> Self {
        match value {
            RelationKindArg::Init => RelationKind::InitSop,
            RelationKindArg::Cur => RelationKind::CurSop,
            RelationKindArg::Inf => RelationKind::InfSop,
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model file (JSON).
    model: PathBuf,
    /// Additive slack for every `d <= delta` comparison.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    slack: f64,
}

#[derive(Args, Clone)]
struct EstimatorArgs {
    /// Maximum number of estimator nodes before giving up.
    #[arg(long, default_value_t = 1_000_000)]
    node_cap: usize,
    /// Use the verbatim current-state estimator rule (Post of the reference
    /// state instead of the belief). Diagnostic only.
    #[arg(long)]
    strict_def5: bool,
}

impl EstimatorArgs {
    fn options(&self) -> EstimatorOptions {
        EstimatorOptions {
            node_cap: self.node_cap,
            strict_def5: self.strict_def5,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide an approximate-opacity property and print the verdict.
    Verify {
        #[arg(long, value_enum)]
        property: PropertyArg,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Also write the verdict JSON to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a state estimator and export it as JSON (and optionally DOT).
    Estimator {
        #[arg(long, value_enum)]
        kind: EstimatorKindArg,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a GraphViz rendering to this path.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Validate a relation file, or compute the maximal relation.
    Relate {
        #[arg(long, value_enum)]
        kind: Option<RelationKindArg>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Left system (the simulated one).
        a: PathBuf,
        /// Right system (the simulating one).
        b: PathBuf,
        /// Relation file to validate; when absent the maximal relation is
        /// computed.
        #[arg(long)]
        relation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the least delta at which a property holds.
    Threshold {
        #[arg(long, value_enum)]
        property: PropertyArg,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Build the symbolic model of a control system and emit it as model JSON.
    Abstract {
        #[arg(long)]
        config: PathBuf,
        /// Precision used to suggest a quantization when the config does not
        /// pin one.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Abstract, verify at delta - 2*epsilon, and transfer the verdict.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_enum)]
        property: PropertyArg,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force a property by literal run enumeration (small systems).
    Oracle {
        #[arg(long, value_enum)]
        property: PropertyArg,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        /// Enumeration depth; defaults to the estimator-node-count bound that
        /// makes the bounded verdict exact.
        #[arg(long)]
        depth: Option<usize>,
        /// Maximum number of run prefixes to enumerate.
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type CliError = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()).into())
}

fn load_model(args: &ModelArgs) -> Result<MetricSystem, CliError> {
    if !args.slack.is_finite() || args.slack < 0.0 {
        return Err(format!("slack must be a finite nonnegative number, got {}", args.slack).into());
    }
    let mut system = MetricSystem::from_json_str(&read(&args.model)?)
        .map_err(|e| format!("{}: {e}", args.model.display()))?;
    system.set_comparison_slack(args.slack);
    Ok(system)
}

fn require_delta(delta: f64) -> Result<(), CliError> {
    if !delta.is_finite() || delta < 0.0 {
        return Err("delta must be nonnegative".into());
    }
    Ok(())
}

fn emit(payload: &str, out: Option<&Path>) -> Result<(), CliError> {
    println!("{payload}");
    if let Some(path) = out {
        std::fs::write(path, format!("{payload}\n"))
            .map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    Ok(())
}

/// Rounds to 13 significant digits for plain-text display; JSON payloads
/// carry the exact values.
fn display_value(v: f64) -> f64 {
    format!("{v:.12e}").parse().unwrap_or(v)
}

fn run() -> Result<u8, CliError> {
    match Cli::parse().command {
        Command::Verify {
            property,
            delta,
            model,
            estimator,
            out,
        } => {
            require_delta(delta)?;
            let system = load_model(&model)?;
            let verdict = opacity::verify(&system, property.into(), delta, &estimator.options())?;
            emit(&verdict.to_json_string(&system), out.as_deref())?;
            Ok(u8::from(!verdict.holds))
        }
        Command::Estimator {
            kind,
            delta,
            model,
            estimator,
            out,
            dot,
        } => {
            require_delta(delta)?;
            let system = load_model(&model)?;
            let kind = match kind {
                EstimatorKindArg::Init => EstimatorKind::Initial,
                EstimatorKindArg::Cur => EstimatorKind::Current,
            };
            let built = Estimator::build(&system, kind, delta, &estimator.options())?;
            emit(&built.to_json_string(), out.as_deref())?;
            if let Some(path) = dot {
                std::fs::write(&path, built.to_dot())
                    .map_err(|e| format!("writing {}: {e}", path.display()))?;
            }
            Ok(0)
        }
        Command::Relate {
            kind,
            epsilon,
            a,
            b,
            relation,
            out,
        } => {
            let sa = MetricSystem::from_json_str(&read(&a)?)
                .map_err(|e| format!("{}: {e}", a.display()))?;
            let sb = MetricSystem::from_json_str(&read(&b)?)
                .map_err(|e| format!("{}: {e}", b.display()))?;
            match relation {
                Some(path) => {
                    let document: RelationDocument = serde_json::from_str(&read(&path)?)
                        .map_err(|e| format!("{}: {e}", path.display()))?;
                    let kind = match kind {
                        Some(flag) if RelationKind::from(flag) != document.kind => {
                            return Err(format!(
                                "--kind disagrees with the relation file ({})",
                                document.kind
                            )
                            .into())
                        }
                        _ => document.kind,
                    };
                    let epsilon = match epsilon {
                        Some(flag) if flag != document.epsilon => {
                            return Err("--epsilon disagrees with the relation file".into())
                        }
                        _ => document.epsilon,
                    };
                    let pairs = simulation::resolve_relation_pairs(&document, &sa, &sb)?;
                    match simulation::check_relation(&sa, &sb, &pairs, epsilon, kind)? {
                        RelationCheck::Validated(validated) => {
                            let payload = serde_json::json!({
                                "validated": true,
                                "relation": validated.to_document(&sa, &sb),
                            });
                            emit(&serde_json::to_string_pretty(&payload)?, out.as_deref())?;
                            Ok(0)
                        }
                        RelationCheck::Violation(violation) => {
                            let payload = serde_json::json!({
                                "validated": false,
                                "violation": violation,
                            });
                            emit(&serde_json::to_string_pretty(&payload)?, out.as_deref())?;
                            Ok(1)
                        }
                    }
                }
                None => {
                    let kind = kind.ok_or("--kind is required when computing a relation")?;
                    let epsilon = epsilon.ok_or("--epsilon is required when computing a relation")?;
                    let maximal =
                        simulation::compute_maximal_relation(&sa, &sb, epsilon, kind.into())?;
                    let payload = serde_json::json!({
                        "simulates": maximal.simulates,
                        "pairs": maximal.relation.pairs.len(),
                        "relation": maximal.relation.to_document(&sa, &sb),
                    });
                    emit(&serde_json::to_string_pretty(&payload)?, out.as_deref())?;
                    Ok(u8::from(!maximal.simulates))
                }
            }
        }
        Command::Threshold {
            property,
            model,
            estimator,
        } => {
            let system = load_model(&model)?;
            match opacity::opacity_threshold_with(&system, property.into(), &estimator.options())? {
                Some(threshold) => {
                    println!("{}", display_value(threshold));
                    Ok(0)
                }
                None => {
                    println!("none");
                    Ok(1)
                }
            }
        }
        Command::Abstract { config, epsilon, out } => {
            let loaded = abstraction::load_config_str(&read(&config)?)?;
            let quantization = match (loaded.quantization, epsilon) {
                (Some(q), _) => q,
                (None, Some(epsilon)) => abstraction::suggest_quantization(
                    &loaded.system.certificate,
                    &loaded.system.alpha,
                    epsilon,
                    &loaded.system,
                )?
                .ok_or("no feasible quantization exists at this epsilon")?,
                (None, None) => {
                    return Err(
                        "config has no [quantization] block; pass --epsilon to suggest one".into(),
                    )
                }
            };
            eprintln!(
                "quantization: eta = {}, mu = {}, epsilon = {}",
                display_value(quantization.eta),
                display_value(quantization.mu),
                display_value(quantization.epsilon)
            );
            let model = abstraction::build_symbolic_model(&loaded.system, &quantization)?;
            emit(&model.to_json_string(), out.as_deref())?;
            Ok(0)
        }
        Command::Pipeline {
            config,
            delta,
            epsilon,
            property,
            estimator,
            out,
        } => {
            require_delta(delta)?;
            let loaded = abstraction::load_config_str(&read(&config)?)?;
            let report = abstraction::end_to_end_verify(
                &loaded.system,
                &PipelineOptions {
                    epsilon,
                    delta,
                    property: property.into(),
                    quantization: loaded.quantization.map(|q| (q.eta, q.mu)),
                    estimator: estimator.options(),
                },
            )?;
            emit(&report.to_json_string(), out.as_deref())?;
            Ok(match report.conclusion {
                PipelineConclusion::Holds => 0,
                PipelineConclusion::Inconclusive { .. } => 1,
            })
        }
        Command::Oracle {
            property,
            delta,
            depth,
            budget,
            model,
            estimator,
            out,
        } => {
            require_delta(delta)?;
            let system = load_model(&model)?;
            let property: OpacityProperty = property.into();
            let depth = match depth {
                Some(d) => d,
                None => oracle::sufficient_depth(&system, delta, property, &estimator.options())?,
            };
            let verdict = oracle::oracle_opacity(
                &system,
                delta,
                property,
                depth,
                &oracle::OracleOptions { budget },
            )?;
            let payload = serde_json::json!({
                "property": property,
                "delta": delta,
                "depth": depth,
                "holds_up_to_depth": verdict.holds_up_to_depth,
                "witness": verdict.witness.as_ref().map(|run| serde_json::json!({
                    "states": run.states.iter().map(|&x| system.label(x)).collect::<Vec<_>>(),
                    "inputs": run.inputs.iter().map(|&u| system.input_label(u)).collect::<Vec<_>>(),
                    "outputs": system.run_outputs(run),
                })),
            });
            emit(&serde_json::to_string_pretty(&payload)?, out.as_deref())?;
            Ok(u8::from(!verdict.holds_up_to_depth))
        }
    }
}
