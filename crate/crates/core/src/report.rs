//! Serializable run results and assignment files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Partition};
use crate::optimizer::OptimizerReport;
use crate::sparse::SparseBinaryDataset;

/// Tolerance for agreement between a reported and a recomputed total cost.
pub const CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub size: u64,
    /// Zero-based coordinates set in the representative.
    pub representative: Vec<u32>,
    pub cluster_cost: f64,
    pub identification_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ModelConfig,
    pub n: usize,
    pub dim: usize,
    pub clusters: Vec<ClusterSummary>,
    pub total_cost: f64,
    pub iterations: usize,
    pub switches: usize,
    pub reductions: usize,
    pub seed_used: u64,
    pub converged: bool,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
}

impl RunResult {
    pub fn new(
        data: &SparseBinaryDataset,
        config: &ModelConfig,
        report: &OptimizerReport,
        wall_time_secs: f64,
    ) -> Result<Self> {
        let partition = &report.final_partition;
        let clusters = partition
            .live_ids()
            .map(|id| {
                let stats = partition.cluster(id).ok_or(Error::EmptyCluster)?;
                Ok(ClusterSummary {
                    size: stats.size(),
                    representative: stats.representative()?.indices().to_vec(),
                    cluster_cost: stats.cluster_cost()?,
                    identification_cost: stats.identification_cost(partition.n())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunResult {
            config: config.clone(),
            n: data.len(),
            dim: data.dim(),
            clusters,
            total_cost: report.total_cost,
            iterations: report.iterations,
            switches: report.switches,
            reductions: report.reductions,
            seed_used: report.seed_used,
            converged: report.converged,
            wall_time_secs,
            ari: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Recomputes the objective of `assignment` on `data` from scratch.
pub fn recompute_cost(
    data: &SparseBinaryDataset,
    assignment: &[usize],
    config: &ModelConfig,
) -> Result<f64> {
    if assignment.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: assignment.len(),
            right: data.len(),
        });
    }
    Partition::from_assignment(data, assignment.to_vec(), config.threshold)?.total_cost(config.beta)
}

/// Recomputes the cost of `assignment` and compares it with `reported`.
/// Returns the recomputed value.
pub fn check_cost(
    data: &SparseBinaryDataset,
    assignment: &[usize],
    config: &ModelConfig,
    reported: f64,
) -> Result<f64> {
    let cost = recompute_cost(data, assignment, config)?;
    if (cost - reported).abs() > CHECK_TOLERANCE {
        return Err(Error::Invalid(format!(
            "recomputed cost {cost} differs from reported {reported}"
        )));
    }
    Ok(cost)
}

/// One cluster id per line.
pub fn write_assignment<W: Write>(mut out: W, assignment: &[usize]) -> std::io::Result<()> {
    for c in assignment {
        writeln!(out, "{c}")?;
    }
    out.flush()
}

pub fn save_assignment(path: &Path, assignment: &[usize]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_assignment(BufWriter::new(file), assignment).map_err(|e| Error::io(path, e))
}

pub fn load_assignment(path: &Path) -> Result<Vec<usize>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        out.push(trimmed.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("expected a cluster id, found {trimmed:?}"),
        })?);
    }
    Ok(out)
}
