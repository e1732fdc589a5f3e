//! Run configuration: a TOML file with nested sections, schema-validated
//! before any computation (unknown keys are rejected). Matrices are row
//! lists; agent/edge indices are 1-based as in the worked examples.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use hiermas::graph::{self, Interconnection};
use hiermas::mas::AgentModel;
use hiermas::robust::SynthMode;
use hiermas::sim::NoiseModel;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub agent: AgentSection,
    pub topology: TopologySection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub reduced: ReducedSection,
    pub synthesis: Option<SynthesisSection>,
    #[serde(default)]
    pub gain: Option<GainSection>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Seed for disturbance realizations; the `--seed` flag overrides.
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Option<Vec<Vec<f64>>>,
    pub bd: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub kind: String,
    pub nodes: Option<usize>,
    pub weight: Option<f64>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub matrix: Option<Vec<Vec<f64>>>,
    /// 1-based unordered pairs; when omitted for "custom", derived from the
    /// nonzero pattern.
    pub edges: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub q1: Option<Vec<Vec<f64>>>,
    pub r1: Option<Vec<Vec<f64>>>,
    pub r2: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReducedSection {
    /// "unstable" (Re λ > 0) or "re-above" with `threshold`.
    pub select: Option<String>,
    pub threshold: Option<f64>,
    pub qt1: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    /// "general" (default), "lqr", or "decentralized".
    pub variant: Option<String>,
    pub eps: Option<f64>,
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSection {
    pub f1: Vec<Vec<f64>>,
    pub f2: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub t: Option<f64>,
    pub dt: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub noise: Option<NoiseSection>,
    pub band: Option<f64>,
    pub record_inputs: Option<bool>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            t: None,
            dt: None,
            x0: None,
            noise: None,
            band: None,
            record_inputs: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub amplitude: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    /// "csv", "svg", or "both" (default).
    pub format: Option<String>,
}

pub const DEFAULT_T: f64 = 15.0;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_BAND: f64 = 0.05;

pub fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Err(CliError::config(format!("matrix '{name}' is empty")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::config(format!(
            "matrix '{name}' has ragged or empty rows"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn agent(&self) -> Result<AgentModel, CliError> {
        let a = matrix("agent.a", &self.agent.a)?;
        let n = a.nrows();
        let b = matrix("agent.b", &self.agent.b)?;
        let m = b.ncols();
        let c = matrix("agent.c", &self.agent.c)?;
        let p = c.nrows();
        let d = match &self.agent.d {
            Some(rows) => matrix("agent.d", rows)?,
            None => DMatrix::zeros(p, m),
        };
        let bd = match &self.agent.bd {
            Some(rows) => matrix("agent.bd", rows)?,
            None => DMatrix::zeros(n, 1),
        };
        AgentModel::new(a, b, c, d, bd).map_err(CliError::from)
    }

    pub fn topology(&self) -> Result<Arc<Interconnection>, CliError> {
        let t = &self.topology;
        let ic = match t.kind.as_str() {
            "path" => {
                let nodes = t
                    .nodes
                    .ok_or_else(|| CliError::config("topology.nodes required for kind = \"path\""))?;
                graph::path_laplacian(nodes, t.weight.unwrap_or(1.0))
            }
            "grid" => {
                let rows = t
                    .rows
                    .ok_or_else(|| CliError::config("topology.rows required for kind = \"grid\""))?;
                let cols = t
                    .cols
                    .ok_or_else(|| CliError::config("topology.cols required for kind = \"grid\""))?;
                graph::grid_laplacian(rows, cols)
            }
            "custom" => {
                let rows = t
                    .matrix
                    .as_ref()
                    .ok_or_else(|| CliError::config("topology.matrix required for kind = \"custom\""))?;
                let k = matrix("topology.matrix", rows)?;
                match &t.edges {
                    Some(edges) => {
                        let mut pairs = Vec::with_capacity(edges.len());
                        for e in edges {
                            if e.len() != 2 || e[0] == 0 || e[1] == 0 {
                                return Err(CliError::config(
                                    "topology.edges entries must be 1-based pairs [i, j]",
                                ));
                            }
                            pairs.push((e[0] - 1, e[1] - 1));
                        }
                        graph::custom_k(k, &pairs).map_err(CliError::from)?
                    }
                    None => graph::custom_k_auto(k).map_err(CliError::from)?,
                }
            }
            other => {
                return Err(CliError::config(format!(
                    "topology.kind must be \"path\", \"grid\", or \"custom\", got \"{other}\""
                )))
            }
        };
        Ok(Arc::new(ic))
    }

    /// Q1, R1, R2 with the documented defaults Q1 = Iₙ, R1 = R2 = I_m.
    pub fn weights(&self, n: usize, m: usize) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), CliError> {
        let q1 = match &self.weights.q1 {
            Some(rows) => matrix("weights.q1", rows)?,
            None => DMatrix::identity(n, n),
        };
        let r1 = match &self.weights.r1 {
            Some(rows) => matrix("weights.r1", rows)?,
            None => DMatrix::identity(m, m),
        };
        let r2 = match &self.weights.r2 {
            Some(rows) => matrix("weights.r2", rows)?,
            None => DMatrix::identity(m, m),
        };
        Ok((q1, r1, r2))
    }

    pub fn synth_mode(&self, hinf: bool) -> Result<SynthMode, CliError> {
        let variant = self
            .synthesis
            .as_ref()
            .and_then(|s| s.variant.as_deref())
            .unwrap_or("general");
        Ok(match (variant, hinf) {
            ("general", true) => SynthMode::HinfGeneral,
            ("general", false) => SynthMode::H2General,
            ("lqr", true) => SynthMode::HinfLqr,
            ("lqr", false) => SynthMode::H2Lqr,
            ("decentralized", true) => SynthMode::DecentralizedHinf,
            ("decentralized", false) => SynthMode::DecentralizedH2,
            (other, _) => {
                return Err(CliError::config(format!(
                    "synthesis.variant must be \"general\", \"lqr\", or \"decentralized\", got \"{other}\""
                )))
            }
        })
    }

    /// Default initial state: agent i starts at [i, 0, …, 0].
    pub fn x0(&self, n_agents: usize, n: usize) -> Result<DVector<f64>, CliError> {
        match &self.simulation.x0 {
            Some(values) => {
                if values.len() != n_agents * n {
                    return Err(CliError::config(format!(
                        "simulation.x0 has {} entries, expected N·n = {}",
                        values.len(),
                        n_agents * n
                    )));
                }
                Ok(DVector::from_vec(values.clone()))
            }
            None => Ok(default_x0(n_agents, n)),
        }
    }

    pub fn noise(&self, seed_flag: Option<u64>) -> NoiseModel {
        match &self.simulation.noise {
            Some(ns) => NoiseModel::UniformWhite {
                amplitude: ns.amplitude,
                seed: seed_flag.or(ns.seed).or(self.seed).unwrap_or(0),
            },
            None => NoiseModel::None,
        }
    }
}

pub fn default_x0(n_agents: usize, n: usize) -> DVector<f64> {
    let mut x0 = DVector::zeros(n_agents * n);
    for i in 0..n_agents {
        x0[i * n] = (i + 1) as f64;
    }
    x0
}
