//! TOML harness configuration.
//!
//! ```toml
//! backend = "external"        # or "synthetic"
//! seed = 7
//! examples_per_cell = 100     # used when no [[cells]] are listed
//! exclude = [[2, 1]]          # (node_count, replication_factor) pairs to skip
//!
//! [external]
//! stop_cmd = "ssh ... nodetool drain && systemctl stop cassandra"
//! configure_cmd = "render-yaml --key-cache {key_cache_size_in_mb} ..."
//! start_cmd = "start-cluster {node_count}"
//! workload_cmd = "run-stress {read_pct} {write_pct} {duration_s} > {metrics_path}"
//! metrics_path = "/tmp/metrics.txt"
//! timeout_s = 300
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExternalBackendConfig, PlanCell, SamplingPlan, DEFAULT_ATTEMPTS};
use crate::domain::{Physical, Workload};
use crate::error::{Error, Result};
use crate::oracle::OracleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Synthetic,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellEntry {
    workload: String,
    node_count: u32,
    replication_factor: u32,
    count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticEntry {
    noise_sigma: Option<f64>,
    seed: Option<u64>,
    client_concurrency: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    backend: BackendKind,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    max_attempts: Option<u32>,
    #[serde(default)]
    examples_per_cell: Option<usize>,
    #[serde(default)]
    exclude: Vec<[u32; 2]>,
    #[serde(default)]
    cells: Vec<CellEntry>,
    #[serde(default)]
    synthetic: SyntheticEntry,
    external: Option<ExternalBackendConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub backend: BackendKind,
    pub oracle: OracleParams,
    pub external: Option<ExternalBackendConfig>,
    pub plan: SamplingPlan,
    pub max_attempts: u32,
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut oracle = OracleParams::default();
        if let Some(s) = raw.synthetic.noise_sigma {
            oracle.noise_sigma = s;
        }
        if let Some(s) = raw.synthetic.seed {
            oracle.seed = s;
        }
        if let Some(c) = raw.synthetic.client_concurrency {
            oracle.client_concurrency = c;
        }
        oracle.validate().map_err(|e| Error::Config(e.to_string()))?;

        let mut plan = if raw.cells.is_empty() {
            SamplingPlan::reference(raw.examples_per_cell.unwrap_or(100), raw.seed)
        } else {
            let cells = raw
                .cells
                .iter()
                .map(|c| {
                    Ok(PlanCell {
                        workload: Workload::parse(&c.workload).map_err(|e| Error::Config(e.to_string()))?,
                        physical: Physical { node_count: c.node_count, replication_factor: c.replication_factor },
                        count: c.count,
                    })
                })
                .collect::<Result<_>>()?;
            SamplingPlan { cells, seed: raw.seed }
        };
        for [n, rf] in raw.exclude {
            plan = plan.excluding(Physical { node_count: n, replication_factor: rf });
        }

        if raw.backend == BackendKind::External {
            match &raw.external {
                Some(e) => e.validate()?,
                None => return Err(Error::Config("backend = \"external\" needs an [external] table".into())),
            }
        }
        let max_attempts = raw.max_attempts.unwrap_or(DEFAULT_ATTEMPTS);
        if max_attempts < 1 {
            return Err(Error::Config("max_attempts must be ≥ 1".into()));
        }
        Ok(HarnessConfig { backend: raw.backend, oracle, external: raw.external, plan, max_attempts })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
