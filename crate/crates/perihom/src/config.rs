//! The JSON configuration document and its translation into domain types.
//!
//! One document drives every subcommand:
//!
//! ```json
//! {
//!   "geometry": { "dim": 2, "inclusion": { "min": [0.25, 0.25], "max": [0.75, 0.75] } },
//!   "coefficients": {
//!     "A1": [[1.0, 0.0], [0.0, 1.0]],
//!     "A2": { "layered": { "axis": 0, "split": 0.5, "below": 1.0, "above": 4.0 } },
//!     "gamma": 1.0, "f1": "const:1", "f2": "sinpi2"
//!   },
//!   "solver": { "tol": 1e-10, "max_iter": 0, "precond": "jacobi" },
//!   "sweep": { "eps": ["1/4", "1/8", "1/16", "1/32"], "m": 16 }
//! }
//! ```
//!
//! `solver` and `sweep` are optional and default to the values above.
//! Tensors are either explicit 2×2 matrices or layered profiles; sources
//! come from the expression catalog (`const:c`, `sinpi2`, `poly:a,b,c`).

use serde::Deserialize;

use crate::coeffs::{CoefficientSet, Tensor2, TensorField};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::CellGeometry;
use crate::solver::{Preconditioner, SolverOptions};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub geometry: GeometrySpec,
    pub coefficients: CoefficientsSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub inclusion: InclusionSpec,
}

fn default_dim() -> usize {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSpec {
    #[serde(rename = "A1")]
    pub a1: TensorSpec,
    #[serde(rename = "A2")]
    pub a2: TensorSpec,
    pub gamma: f64,
    pub f1: String,
    pub f2: String,
}

/// A tensor is a plain 2×2 matrix or a layered isotropic profile.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum TensorSpec {
    Matrix([[f64; 2]; 2]),
    Layered { layered: LayeredSpec },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayeredSpec {
    pub axis: usize,
    pub split: f64,
    pub below: f64,
    pub above: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub precond: String,
}

impl Default for SolverSpec {
    fn default() -> SolverSpec {
        SolverSpec { tol: 1e-10, max_iter: 0, precond: "jacobi".into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub eps: Vec<String>,
    pub m: usize,
}

impl Default for SweepSpec {
    fn default() -> SweepSpec {
        SweepSpec {
            eps: ["1/4", "1/8", "1/16", "1/32"].map(String::from).to_vec(),
            m: 16,
        }
    }
}

/// Parses an ε entry of the exact form "1/n".
pub fn parse_eps(text: &str) -> Result<usize> {
    let denom = text.strip_prefix("1/").and_then(|d| d.parse::<usize>().ok());
    match denom {
        Some(n) if n >= 1 => Ok(n),
        _ => Err(Error::Config(format!(
            "ε value {text:?} is not of the form \"1/n\" with a positive integer n"
        ))),
    }
}

fn prefix_key(key: &str, err: Error) -> Error {
    match err {
        Error::Config(msg) => Error::Config(format!("{key}: {msg}")),
        other => other,
    }
}

impl TensorSpec {
    fn to_field(&self) -> TensorField {
        match self {
            TensorSpec::Matrix(m) => TensorField::Constant(Tensor2(*m)),
            TensorSpec::Layered { layered } => TensorField::Layered {
                axis: layered.axis,
                split: layered.split,
                below: layered.below,
                above: layered.above,
            },
        }
    }
}

impl Config {
    /// Parses a configuration document from JSON text.
    pub fn from_json(text: &str) -> Result<Config> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Reads and parses a configuration file. A missing or unreadable file
    /// is a configuration error, not an I/O failure of the run itself.
    pub fn from_file(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Config::from_json(&text)
    }

    /// Builds the validated cell geometry, with the sweep resolution as the
    /// grid hint.
    pub fn geometry(&self) -> Result<CellGeometry> {
        CellGeometry::new(
            self.geometry.dim,
            self.geometry.inclusion.min,
            self.geometry.inclusion.max,
            self.sweep.m,
        )
    }

    /// Builds the validated coefficient set.
    pub fn coefficients(&self) -> Result<CoefficientSet> {
        let f1 = Expr::parse(&self.coefficients.f1)
            .map_err(|e| prefix_key("coefficients.f1", e))?;
        let f2 = Expr::parse(&self.coefficients.f2)
            .map_err(|e| prefix_key("coefficients.f2", e))?;
        CoefficientSet::new(
            self.coefficients.a1.to_field(),
            self.coefficients.a2.to_field(),
            self.coefficients.gamma,
            f1,
            f2,
        )
    }

    /// Builds the solver options.
    pub fn solver_options(&self) -> Result<SolverOptions> {
        let precond = match self.solver.precond.as_str() {
            "jacobi" => Preconditioner::Jacobi,
            "none" => Preconditioner::None,
            other => {
                return Err(Error::Config(format!(
                    "solver.precond: unknown preconditioner {other:?} (use \"jacobi\" or \
                     \"none\")"
                )))
            }
        };
        let opts = SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            precond,
            ..SolverOptions::default()
        };
        opts.validate()?;
        Ok(opts)
    }

    /// Parses the ε list into denominators, in document order.
    pub fn eps_ns(&self) -> Result<Vec<usize>> {
        self.sweep
            .eps
            .iter()
            .enumerate()
            .map(|(i, s)| parse_eps(s).map_err(|e| prefix_key(&format!("sweep.eps[{i}]"), e)))
            .collect()
    }

    /// Cells per tile side shared by the cell stage and the sweep.
    pub fn m(&self) -> usize {
        self.sweep.m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_json() -> &'static str {
        r#"{
            "geometry": { "inclusion": { "min": [0.25, 0.25], "max": [0.75, 0.75] } },
            "coefficients": {
                "A1": [[1.0, 0.0], [0.0, 1.0]],
                "A2": { "layered": { "axis": 0, "split": 0.5, "below": 1.0, "above": 4.0 } },
                "gamma": 3.0,
                "f1": "const:2",
                "f2": "sinpi2"
            }
        }"#
    }

    #[test]
    fn full_document_round_trips_into_domain_types() {
        let cfg = Config::from_json(demo_json()).unwrap();
        assert_eq!(cfg.geometry.dim, 2);
        let geom = cfg.geometry().unwrap();
        assert_eq!(geom.m_hint(), 16);
        let coeffs = cfg.coefficients().unwrap();
        assert_eq!(coeffs.gamma().sample([0.0, 0.0]), 3.0);
        let opts = cfg.solver_options().unwrap();
        assert_eq!(opts.tol, 1e-10);
        assert_eq!(cfg.eps_ns().unwrap(), vec![4, 8, 16, 32]);
        assert_eq!(cfg.m(), 16);
    }

    #[test]
    fn explicit_solver_and_sweep_blocks_override_the_defaults() {
        let cfg = Config::from_json(
            r#"{
                "geometry": { "dim": 2, "inclusion": { "min": [0.5, 0.5], "max": [0.75, 0.75] } },
                "coefficients": {
                    "A1": [[2.0, 0.0], [0.0, 2.0]], "A2": [[1.0, 0.0], [0.0, 1.0]],
                    "gamma": 0.0, "f1": "const:0", "f2": "poly:1,2,3"
                },
                "solver": { "tol": 1e-8, "max_iter": 500, "precond": "none" },
                "sweep": { "eps": ["1/2", "1/4"], "m": 8 }
            }"#,
        )
        .unwrap();
        let opts = cfg.solver_options().unwrap();
        assert_eq!(opts.tol, 1e-8);
        assert_eq!(opts.max_iter, 500);
        assert_eq!(cfg.eps_ns().unwrap(), vec![2, 4]);
        assert_eq!(cfg.m(), 8);
    }

    #[test]
    fn malformed_eps_entries_are_named() {
        for bad in ["0.25", "2/3", "1/0", "1/", "x"] {
            let err = parse_eps(bad).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad} should be a config error");
        }
        let cfg = Config::from_json(
            &demo_json().replace(
                "\"f2\": \"sinpi2\"\n            }",
                "\"f2\": \"sinpi2\"\n            },\n            \"sweep\": { \"eps\": [\"1/4\", \"0.1\"], \"m\": 4 }",
            ),
        )
        .unwrap();
        let msg = format!("{}", cfg.eps_ns().unwrap_err());
        assert!(msg.contains("sweep.eps[1]"), "message should name the entry: {msg}");
    }

    #[test]
    fn unknown_fields_and_bad_json_are_config_errors() {
        assert!(matches!(Config::from_json("{"), Err(Error::Config(_))));
        let with_typo = demo_json().replace("\"gamma\"", "\"gama\"");
        assert!(matches!(Config::from_json(&with_typo), Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let err = Config::from_file(std::path::Path::new("/no/such/config.json")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bad_preconditioner_and_source_names_are_reported_with_keys() {
        let cfg = Config::from_json(
            &demo_json().replace("\"const:2\"", "\"cost:2\""),
        )
        .unwrap();
        let msg = format!("{}", cfg.coefficients().unwrap_err());
        assert!(msg.contains("coefficients.f1"), "{msg}");

        let cfg = Config::from_json(
            &demo_json().replace(
                "\"coefficients\"",
                "\"solver\": { \"precond\": \"ssor\" }, \"coefficients\"",
            ),
        )
        .unwrap();
        let msg = format!("{}", cfg.solver_options().unwrap_err());
        assert!(msg.contains("solver.precond"), "{msg}");
    }
}
