//! Run configuration: one TOML file describing the instance, the grid, and
//! the solver, simulation and output settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::numerics::{default_mass_max, GridSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Mass truncation; derived from the instance when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_max: Option<f64>,
    pub mass_nodes: usize,
    pub time_nodes: usize,
    pub quadrature_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            mass_max: None,
            mass_nodes: 129,
            time_nodes: 33,
            quadrature_nodes: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Target sup-norm distance to the fixed point.
    pub tolerance: f64,
    /// Sweeps per stage before giving up; derived from the tolerance and
    /// the contraction modulus when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-6,
            max_iterations: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    /// Policy from the artifacts of a previous `solve`.
    Solved,
    /// Closed-form threshold rule (exponential arrivals only).
    Threshold,
    /// Switch and stop at once.
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub replications: usize,
    pub seed: u64,
    pub policy: PolicySource,
    /// Number of leading replications to dump as trajectories.
    pub trajectories: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            replications: 10_000,
            seed: 0,
            policy: PolicySource::Solved,
            trajectories: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("twostop-out"),
            format: Format::Csv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Largest catch budget `K` in the finite-`K` residual curve.
    pub max_k: usize,
    /// Delay scale factors tried against the solver policy.
    pub perturbations: Vec<f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            max_k: 10,
            perturbations: vec![0.5, 0.9, 1.1, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted path into the config, e.g. `problem.site2.inter_arrival.rate`.
    pub parameter: String,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialise")
    }

    /// SHA-256 of the canonical TOML form, leaving out the output
    /// directory since it does not affect any result.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        let mass_max = g.mass_max.unwrap_or_else(|| default_mass_max(&self.problem));
        GridSpec::new(mass_max, g.mass_nodes, g.time_nodes, g.quadrature_nodes)
    }

    /// A copy with the number at the dotted `path` replaced by `value`.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut node = &mut root;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{}` is not a table", keys[..i].join("."))))?;
            let next = table
                .get_mut(*key)
                .ok_or_else(|| Error::Config(format!("no parameter `{}`", keys[..=i].join("."))))?;
            node = next;
        }
        match node {
            toml::Value::Float(_) => *node = toml::Value::Float(value),
            toml::Value::Integer(_) if value.fract() == 0.0 => *node = toml::Value::Integer(value as i64),
            _ => return Err(Error::Config(format!("`{path}` is not a number"))),
        }
        let text = toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
[problem]
horizon = 2.0

[problem.site1]
inter_arrival = { kind = "exponential", rate = 1.5 }
catch_size = { kind = "exponential", rate = 1.0 }
utility = { kind = "linear", slope = 1.0 }
cost = { kind = "linear", rate = 0.5 }

[problem.site2]
inter_arrival = { kind = "weibull", shape = 1.5, scale = 0.8 }
catch_size = { kind = "gamma", shape = 2.0, rate = 2.0 }
utility = { kind = "saturating_exp", bound = 2.0, rate = 0.8 }
cost = { kind = "quadratic", linear = 0.1, quadratic = 0.1 }

[grid]
mass_nodes = 17
time_nodes = 9
quadrature_nodes = 8

[simulation]
replications = 100
seed = 7
policy = "solved"
trajectories = 2
"#;

    #[test]
    fn round_trip_is_stable() {
        let a = RunConfig::parse(SAMPLE).unwrap();
        let b = RunConfig::parse(&a.to_toml()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.compare, CompareConfig::default());
        let mut moved = a.clone();
        moved.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), moved.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = SAMPLE.replace("seed = 7", "sed = 7");
        assert!(matches!(RunConfig::parse(&bad), Err(Error::Config(_))));
        let bad = SAMPLE.replace("\"weibull\"", "\"weibul\"");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn parameter_override() {
        let a = RunConfig::parse(SAMPLE).unwrap();
        let b = a.with_parameter("problem.site1.inter_arrival.rate", 2.5).unwrap();
        assert_eq!(b.problem.site1.inter_arrival, crate::model::DistributionSpec::Exponential { rate: 2.5 });
        assert_ne!(a.hash(), b.hash());
        assert!(a.with_parameter("problem.site1.nope", 1.0).is_err());
        assert!(a.with_parameter("problem.site1.utility.kind", 1.0).is_err());
        let c = a.with_parameter("grid.mass_nodes", 33.0).unwrap();
        assert_eq!(c.grid.mass_nodes, 33);
    }
}
