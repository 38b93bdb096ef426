//! Versioned JSON file format for topologies.
//!
//! Top-level keys: `version` (must be 1), `operators`, `edges`, and
//! `source_rates` keyed by rendered task ids (`Oi#k`, zero-based).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{OperatorSpec, PartitionEdge, TaskId, Topology};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    version: u32,
    operators: Vec<OperatorFile>,
    edges: Vec<PartitionEdge>,
    source_rates: BTreeMap<String, f64>,
}

// Mirrors OperatorSpec but lets selectivity and input_kind default.
#[derive(Debug, Serialize, Deserialize)]
struct OperatorFile {
    id: String,
    parallelism: usize,
    #[serde(default = "default_input_kind")]
    input_kind: super::InputKind,
    role: super::Role,
    #[serde(default = "default_selectivity")]
    selectivity: f64,
}

fn default_input_kind() -> super::InputKind {
    super::InputKind::Independent
}

fn default_selectivity() -> f64 {
    1.0
}

#[derive(Debug, Error)]
pub enum TopologyFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed topology file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported topology file version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("malformed task id in source_rates: {0}")]
    TaskId(String),
}

/// Serializes a topology to the versioned JSON document.
pub fn to_json(topology: &Topology) -> String {
    let file = TopologyFile {
        version: FORMAT_VERSION,
        operators: topology
            .operators
            .iter()
            .map(|o| OperatorFile {
                id: o.id.clone(),
                parallelism: o.parallelism,
                input_kind: o.input_kind,
                role: o.role,
                selectivity: o.selectivity,
            })
            .collect(),
        edges: topology.edges.clone(),
        source_rates: topology
            .source_rates
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("topology serialization");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Topology, TopologyFileError> {
    let file: TopologyFile = serde_json::from_str(text)?;
    if file.version != FORMAT_VERSION {
        return Err(TopologyFileError::Version(file.version));
    }
    let mut source_rates = BTreeMap::new();
    for (key, rate) in file.source_rates {
        let id = TaskId::parse(&key).map_err(|_| TopologyFileError::TaskId(key))?;
        source_rates.insert(id, rate);
    }
    Ok(Topology::new(
        file.operators
            .into_iter()
            .map(|o| OperatorSpec {
                id: o.id,
                parallelism: o.parallelism,
                input_kind: o.input_kind,
                role: o.role,
                selectivity: o.selectivity,
            })
            .collect(),
        file.edges,
        source_rates,
    ))
}

pub fn save_topology(topology: &Topology, path: &Path) -> Result<(), TopologyFileError> {
    std::fs::write(path, to_json(topology))?;
    Ok(())
}

pub fn load_topology(path: &Path) -> Result<Topology, TopologyFileError> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

/// Content digest of a topology, used by plan files to detect mismatched
/// inputs. Computed over the canonical JSON rendering so that semantically
/// identical files agree regardless of on-disk formatting.
pub fn topology_digest(topology: &Topology) -> String {
    let mut hasher = Sha256::new();
    hasher.update(to_json(topology).as_bytes());
    let out = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in out {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}
