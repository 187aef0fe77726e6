//! TOML configuration surface for control systems.
//!
//! ```toml
//! [dynamics]
//! A = [[0.5]]
//! B = [[1.0]]
//! c = [0.0]            # optional, defaults to zero
//!
//! [output]             # optional, defaults to the identity map
//! C = [[1.0]]
//! d = [0.0]
//!
//! [domains]            # boxes are [lo, hi] (1-d) or [[lo, hi], ...] (n-d)
//! state = [[0.0, 1.0]]
//! secret = [[0.0, 0.2]]
//! complement = [[0.2, 1.0]]
//! input = [[-0.05, 0.05]]
//!
//! [certificate]
//! type = "iss"         # or "lyapunov"
//! alpha = { form = "linear", gain = 1.0 }
//! beta1 = { form = "linear", gain = 0.5 }
//! gamma = { form = "linear", gain = 2.0 }
//!
//! [quantization]       # optional; suggested from epsilon when absent
//! eta = 0.1
//! mu = 0.05
//! epsilon = 0.4
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::{
    AbstractionError, BoxDomain, BoxUnion, Certificate, ControlSystem, Dynamics, IssCertificate,
    LyapunovCertificate, OutputMap, Quantization,
};
use crate::kfunction::KFunction;

/// A parsed configuration: the control system plus the optional explicit
/// quantization block.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub system: ControlSystem,
    pub quantization: Option<Quantization>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    dynamics: DynamicsDoc,
    #[serde(default)]
    output: Option<OutputDoc>,
    domains: DomainsDoc,
    certificate: CertificateDoc,
    #[serde(default)]
    quantization: Option<Quantization>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(default)]
    c: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(default)]
    d: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainsDoc {
    state: Vec<BoxDoc>,
    secret: Vec<BoxDoc>,
    complement: Vec<BoxDoc>,
    input: Vec<BoxDoc>,
}

/// A box is `[lo, hi]` in one dimension or a list of per-dimension
/// `[lo, hi]` pairs.
#[derive(Deserialize)]
#[serde(untagged)]
enum BoxDoc {
    OneDim([f64; 2]),
    MultiDim(Vec<[f64; 2]>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateDoc {
    #[serde(rename = "type")]
    kind: String,
    alpha: KFunction,
    beta1: Option<KFunction>,
    gamma: Option<KFunction>,
    alpha1: Option<KFunction>,
    alpha2: Option<KFunction>,
    kappa: Option<KFunction>,
    lambda: Option<KFunction>,
    gamma_hat: Option<KFunction>,
    rho: Option<KFunction>,
    sigma: Option<KFunction>,
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, AbstractionError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(AbstractionError::Config(format!("matrix {name} is empty")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(AbstractionError::Config(format!(
            "matrix {name} has ragged rows"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn boxes(docs: Vec<BoxDoc>, name: &str) -> Result<BoxUnion, AbstractionError> {
    let mut out = Vec::new();
    for doc in docs {
        let bounds = match doc {
            BoxDoc::OneDim([lo, hi]) => vec![(lo, hi)],
            BoxDoc::MultiDim(dims) => dims.into_iter().map(|[lo, hi]| (lo, hi)).collect(),
        };
        out.push(BoxDomain::new(bounds).map_err(|e| {
            AbstractionError::Config(format!("domain `{name}`: {e}"))
        })?);
    }
    BoxUnion::new(out).map_err(|e| AbstractionError::Config(format!("domain `{name}`: {e}")))
}

fn require(
    f: Option<KFunction>,
    name: &str,
    kind: &str,
) -> Result<KFunction, AbstractionError> {
    f.ok_or_else(|| {
        AbstractionError::Config(format!(
            "certificate type \"{kind}\" requires the `{name}` function"
        ))
    })
}

fn forbid(f: &Option<KFunction>, name: &str, kind: &str) -> Result<(), AbstractionError> {
    if f.is_some() {
        return Err(AbstractionError::Config(format!(
            "certificate type \"{kind}\" does not take the `{name}` function"
        )));
    }
    Ok(())
}

/// Parses and validates the TOML configuration format.
pub fn load_config_str(text: &str) -> Result<LoadedConfig, AbstractionError> {
    let doc: ConfigDoc = toml::from_str(text)?;

    let a = matrix(&doc.dynamics.a, "A")?;
    let b = matrix(&doc.dynamics.b, "B")?;
    let c = match doc.dynamics.c {
        Some(values) => DVector::from_vec(values),
        None => DVector::zeros(a.nrows()),
    };
    let dynamics = Dynamics::affine(a, b, c)?;

    let output_map = match doc.output {
        None => OutputMap::Identity,
        Some(output) => {
            let c = matrix(&output.c, "C")?;
            let d = match output.d {
                Some(values) => {
                    if values.len() != c.nrows() {
                        return Err(AbstractionError::Config(format!(
                            "output offset d has {} entries, C has {} rows",
                            values.len(),
                            c.nrows()
                        )));
                    }
                    DVector::from_vec(values)
                }
                None => DVector::zeros(c.nrows()),
            };
            OutputMap::Affine { c, d }
        }
    };

    let cert = doc.certificate;
    let certificate = match cert.kind.as_str() {
        "iss" => {
            for (f, name) in [
                (&cert.alpha1, "alpha1"),
                (&cert.alpha2, "alpha2"),
                (&cert.kappa, "kappa"),
                (&cert.lambda, "lambda"),
                (&cert.gamma_hat, "gamma_hat"),
                (&cert.rho, "rho"),
                (&cert.sigma, "sigma"),
            ] {
                forbid(f, name, "iss")?;
            }
            Certificate::Iss(IssCertificate {
                beta1: require(cert.beta1, "beta1", "iss")?,
                gamma: require(cert.gamma, "gamma", "iss")?,
            })
        }
        "lyapunov" => {
            forbid(&cert.beta1, "beta1", "lyapunov")?;
            forbid(&cert.gamma, "gamma", "lyapunov")?;
            Certificate::Lyapunov(LyapunovCertificate {
                alpha1: require(cert.alpha1, "alpha1", "lyapunov")?,
                alpha2: require(cert.alpha2, "alpha2", "lyapunov")?,
                kappa: require(cert.kappa, "kappa", "lyapunov")?,
                lambda: require(cert.lambda, "lambda", "lyapunov")?,
                gamma_hat: require(cert.gamma_hat, "gamma_hat", "lyapunov")?,
                rho: cert.rho,
                sigma: cert.sigma,
            })
        }
        other => {
            return Err(AbstractionError::Config(format!(
                "unknown certificate type `{other}` (expected \"iss\" or \"lyapunov\")"
            )))
        }
    };

    let system = ControlSystem::new(
        boxes(doc.domains.state, "state")?,
        boxes(doc.domains.secret, "secret")?,
        boxes(doc.domains.complement, "complement")?,
        boxes(doc.domains.input, "input")?,
        dynamics,
        output_map,
        cert.alpha,
        certificate,
    )?;

    Ok(LoadedConfig {
        system,
        quantization: doc.quantization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = include_str!("../../fixtures/scalar.toml");

    #[test]
    fn scalar_fixture_parses() {
        let loaded = load_config_str(SCALAR).unwrap();
        let q = loaded.quantization.expect("fixture pins the quantization");
        assert_eq!(q.eta, 0.1);
        assert_eq!(q.mu, 0.05);
        assert_eq!(q.epsilon, 0.4);
        assert!(matches!(loaded.system.certificate, Certificate::Iss(_)));
        assert_eq!(loaded.system.state_domain.dim(), Some(1));
        assert!(loaded.system.secret_domain.contains(&[0.1], 0.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{SCALAR}\nstray = 1\n");
        assert!(matches!(
            load_config_str(&text),
            Err(AbstractionError::ConfigParse(_))
        ));
    }

    #[test]
    fn missing_certificate_function_is_reported() {
        let text = SCALAR.replace("beta1 = { form = \"linear\", gain = 0.5 }\n", "");
        match load_config_str(&text) {
            Err(AbstractionError::Config(msg)) => assert!(msg.contains("beta1")),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn multidim_boxes_parse() {
        let text = r#"
[dynamics]
A = [[0.5, 0.0], [0.0, 0.5]]
B = [[1.0], [0.0]]

[domains]
state = [[[0.0, 1.0], [0.0, 1.0]]]
secret = [[[0.0, 0.2], [0.0, 1.0]]]
complement = [[[0.2, 1.0], [0.0, 1.0]]]
input = [[-0.05, 0.05]]

[certificate]
type = "iss"
alpha = { form = "linear", gain = 1.0 }
beta1 = { form = "linear", gain = 0.5 }
gamma = { form = "linear", gain = 2.0 }
"#;
        let loaded = load_config_str(text).unwrap();
        assert_eq!(loaded.system.state_domain.dim(), Some(2));
        assert_eq!(loaded.system.input_domain.dim(), Some(1));
        assert!(loaded.quantization.is_none());
    }
}
