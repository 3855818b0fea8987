//! Problem files: TOML documents describing one problem, its initial data and
//! the run settings.

use std::collections::BTreeMap;
use std::path::Path;

use jetflow::expr::parse;
use jetflow::integrator::{Method, Options};
use jetflow::{ConstrainedProblem, ContactState, Expr, JetPoint, LagrangianProblem, PhaseState};
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema: u32,
    pub kind: Kind,
    pub n: usize,
    #[serde(rename = "N")]
    pub order: Option<usize>,
    pub r: Option<usize>,
    pub lagrangian: String,
    pub psi: Option<Vec<String>>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub initial: Initial,
    pub run: Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    HigherOrder,
    Constrained,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::HigherOrder => "higher-order",
            Kind::Constrained => "constrained",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    #[serde(default)]
    pub t0: f64,
    pub jets: Option<Vec<Vec<f64>>>,
    pub phase: Option<PhaseInit>,
    pub contact: Option<ContactInit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseInit {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactInit {
    pub q: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    pub t1: f64,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub method: Option<String>,
}

/// Command-line replacements for `[run]` entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t1: Option<f64>,
    pub method: Option<Method>,
}

pub enum HigherInitial {
    Jets(JetPoint),
    Phase(PhaseState),
}

pub enum Model {
    HigherOrder {
        problem: LagrangianProblem,
        initial: HigherInitial,
    },
    Constrained {
        problem: ConstrainedProblem,
        initial: ContactState,
    },
}

/// A validated problem file.
pub struct Loaded {
    pub name: String,
    pub model: Model,
    pub t0: f64,
    pub t1: f64,
    pub options: Options,
}

impl Loaded {
    pub fn kind(&self) -> Kind {
        match self.model {
            Model::HigherOrder { .. } => Kind::HigherOrder,
            Model::Constrained { .. } => Kind::Constrained,
        }
    }
}

fn schema(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("schema violation at `{path}`: {message}"))
}

pub fn load_problem(path: &Path, overrides: &Overrides) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    let file = parse_problem(&text).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{name}: {m}")),
        other => other,
    })?;
    validate(name.clone(), file, overrides).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{name}: {m}")),
        other => other,
    })
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Input(format!("invalid TOML: {e}")))?;
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        schema(&path, e.into_inner())
    })
}

fn expression(path: &str, text: &str) -> Result<Expr, CliError> {
    parse(text).map_err(|e| CliError::Input(format!("`{path}`: {e}")))
}

fn check_len(path: &str, v: &[f64], expected: usize) -> Result<(), CliError> {
    if v.len() != expected {
        return Err(schema(path, format!("expected {expected} values, found {}", v.len())));
    }
    Ok(())
}

fn problem_error(path: &str, e: jetflow::Error) -> CliError {
    match e {
        jetflow::Error::Problem(m) => schema(path, m),
        other => CliError::Input(format!("`{path}`: {other}")),
    }
}

pub fn validate(name: String, file: ProblemFile, overrides: &Overrides) -> Result<Loaded, CliError> {
    if file.schema != SCHEMA_VERSION {
        return Err(schema("schema", format!("unsupported version {} (expected {SCHEMA_VERSION})", file.schema)));
    }
    if file.n == 0 {
        return Err(schema("n", "must be at least 1"));
    }
    let init = &file.initial;
    let given = [init.jets.is_some(), init.phase.is_some(), init.contact.is_some()];
    if given.iter().filter(|g| **g).count() != 1 {
        return Err(schema("initial", "give exactly one of `jets`, `phase` or `contact`"));
    }
    let n = file.n;
    let t0 = init.t0;

    let model = match file.kind {
        Kind::HigherOrder => {
            let order = file.order.ok_or_else(|| schema("N", "required for kind = \"higher-order\""))?;
            if file.r.is_some() {
                return Err(schema("r", "only allowed for kind = \"constrained\""));
            }
            if file.psi.is_some() {
                return Err(schema("psi", "only allowed for kind = \"constrained\""));
            }
            let l = expression("lagrangian", &file.lagrangian)?;
            let problem = LagrangianProblem::new(n, order, l, file.parameters.clone())
                .map_err(|e| problem_error("lagrangian", e))?;
            let initial = if let Some(jets) = &init.jets {
                if jets.len() != n {
                    return Err(schema("initial.jets", format!("expected {n} lists (one per coordinate), found {}", jets.len())));
                }
                for (i, j) in jets.iter().enumerate() {
                    check_len(&format!("initial.jets[{i}]"), j, 2 * order)?;
                }
                HigherInitial::Jets(JetPoint::new(t0, jets.clone()).map_err(|e| schema("initial.jets", e))?)
            } else if let Some(phase) = &init.phase {
                check_len("initial.phase.q", &phase.q, n * order)?;
                check_len("initial.phase.p", &phase.p, n * order)?;
                HigherInitial::Phase(
                    PhaseState::new(t0, phase.q.clone(), phase.p.clone()).map_err(|e| schema("initial.phase", e))?,
                )
            } else {
                return Err(schema("initial.contact", "only allowed for kind = \"constrained\""));
            };
            Model::HigherOrder { problem, initial }
        }
        Kind::Constrained => {
            let r = file.r.ok_or_else(|| schema("r", "required for kind = \"constrained\""))?;
            if file.order.is_some() {
                return Err(schema("N", "only allowed for kind = \"higher-order\""));
            }
            let psi_text = file.psi.as_ref().ok_or_else(|| schema("psi", "required for kind = \"constrained\""))?;
            if psi_text.len() != n {
                return Err(schema("psi", format!("expected {n} components, found {}", psi_text.len())));
            }
            let psi = psi_text
                .iter()
                .enumerate()
                .map(|(k, s)| expression(&format!("psi[{k}]"), s))
                .collect::<Result<Vec<_>, _>>()?;
            let l = expression("lagrangian", &file.lagrangian)?;
            let problem = ConstrainedProblem::new(n, r, psi, l, file.parameters.clone())
                .map_err(|e| {
                    let path = if e.to_string().contains("psi") { "psi" } else { "lagrangian" };
                    problem_error(path, e)
                })?;
            let contact = init
                .contact
                .as_ref()
                .ok_or_else(|| schema("initial", "kind = \"constrained\" needs `initial.contact`"))?;
            check_len("initial.contact.q", &contact.q, n)?;
            check_len("initial.contact.z", &contact.z, r)?;
            check_len("initial.contact.p", &contact.p, n)?;
            let initial = ContactState::new(t0, contact.q.clone(), contact.z.clone(), contact.p.clone());
            Model::Constrained { problem, initial }
        }
    };

    let t1 = overrides.t1.unwrap_or(file.run.t1);
    if !(t1 > t0) {
        return Err(schema("run.t1", format!("must exceed initial.t0 = {t0}")));
    }
    let method = match (overrides.method, &file.run.method) {
        (Some(m), _) => m,
        (None, Some(text)) => text.parse().map_err(|e: String| schema("run.method", e))?,
        (None, None) if file.run.tol.is_some() && file.run.dt.is_none() && overrides.dt.is_none() => Method::Rk45,
        (None, None) => Method::Rk4,
    };
    let options = match method {
        Method::Rk4 => {
            let dt = overrides.dt.or(file.run.dt).ok_or_else(|| schema("run.dt", "required for method rk4"))?;
            if !(dt > 0.0) {
                return Err(schema("run.dt", "must be positive"));
            }
            Options::rk4(dt)
        }
        Method::Rk45 => {
            let tol = file.run.tol.ok_or_else(|| schema("run.tol", "required for method rk45"))?;
            if !(tol > 0.0) {
                return Err(schema("run.tol", "must be positive"));
            }
            let mut opts = Options::rk45(tol);
            if let Some(dt) = overrides.dt.or(file.run.dt) {
                opts.dt = dt;
            }
            opts
        }
    };

    Ok(Loaded { name, model, t0, t1, options })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Loaded, CliError> {
        validate("test.toml".into(), parse_problem(text)?, &Overrides::default())
    }

    const FREE: &str = r#"
schema = 1
kind = "higher-order"
n = 1
N = 2
lagrangian = "q1_2^2 / 2"
[initial]
jets = [[0, 0, 0, 6]]
[run]
t1 = 1.0
dt = 1e-3
"#;

    #[test]
    fn minimal_higher_order_file() {
        let l = load(FREE).unwrap();
        assert_eq!(l.kind(), Kind::HigherOrder);
        assert_eq!(l.options, Options::rk4(1e-3));
        assert_eq!((l.t0, l.t1), (0.0, 1.0));
    }

    #[test]
    fn constrained_file() {
        let l = load(
            r#"
schema = 1
kind = "constrained"
n = 2
r = 1
psi = ["z1", "z1^2"]
lagrangian = "z1^2/2"
[initial]
contact = { q = [0.1, -0.2], z = [0.0], p = [0.8, -0.3] }
[run]
t1 = 1.0
tol = 1e-10
"#,
        )
        .unwrap();
        assert_eq!(l.kind(), Kind::Constrained);
        assert_eq!(l.options.method, Method::Rk45);
    }

    #[test]
    fn order_exceeds_n() {
        let err = load(&FREE.replace("q1_2^2 / 2", "q1_3^2 / 2")).err().expect("should fail").to_string();
        assert!(err.contains("order exceeds N"), "{err}");
        assert!(err.contains("lagrangian"), "{err}");
    }

    #[test]
    fn field_paths_in_errors() {
        let err = load(&FREE.replace("t1 = 1.0", "t1 = \"soon\"")).err().expect("should fail").to_string();
        assert!(err.contains("`run.t1`"), "{err}");
        let err = load(&FREE.replace("jets = [[0, 0, 0, 6]]", "jets = [[0, 0, 6]]")).err().expect("should fail").to_string();
        assert!(err.contains("`initial.jets[0]`"), "{err}");
        let err = load(&FREE.replace("n = 1", "n = 1\ncolour = 3")).err().expect("should fail").to_string();
        assert!(err.contains("colour"), "{err}");
        let err = load(&FREE.replace("N = 2\n", "")).err().expect("should fail").to_string();
        assert!(err.contains("`N`"), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = load(&FREE.replace("q1_2^2 / 2", "q1_2^ / 2")).err().expect("should fail").to_string();
        assert!(err.contains("byte"), "{err}");
    }

    #[test]
    fn overrides_replace_run_settings() {
        let o = Overrides { dt: Some(1e-2), t1: Some(2.0), method: None };
        let l = validate("f".into(), parse_problem(FREE).unwrap(), &o).unwrap();
        assert_eq!((l.t1, l.options.dt), (2.0, 1e-2));
        let o = Overrides { method: Some(Method::Rk45), ..Overrides::default() };
        let err = validate("f".into(), parse_problem(FREE).unwrap(), &o).err().expect("should fail").to_string();
        assert!(err.contains("run.tol"), "{err}");
    }
}
