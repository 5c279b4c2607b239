//! Analytical system model: roofline compute, per-dimension collective
//! costs, an event-driven trace executor and the network cost model.

pub mod collective;
pub mod cost;
mod engine;
pub mod topology;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use collective::{
    collective_time_1d, hop_factor, multidim_collective_time, place_axes, AxisPart, CommTiming, EffectiveDim,
    Placement,
};
pub use cost::{network_cost, CostCoefficients};
pub use engine::{simulate, OpTiming, SimReport};
pub use topology::{
    Algorithm, Block, CollectiveConfig, ComputeSpec, MultiDimMode, SchedulingPolicy, TopologyDim, TopologySpec,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid system configuration: {0}")]
    Config(String),
    #[error("trace does not fit topology: {0}")]
    Mismatch(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("{0}")]
    Io(String),
}

pub fn roofline_time(flops: f64, bytes: f64, compute: &ComputeSpec) -> Result<f64, SimError> {
    if !(compute.peak_perf > 0.0 && compute.local_mem_bw > 0.0) {
        return Err(SimError::Config("compute peak and memory bandwidth must be positive".into()));
    }
    Ok((flops / compute.peak_perf).max(bytes / compute.local_mem_bw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeFixture {
    pub peak_tflops: f64,
    pub local_mem_bw_gbps: f64,
    pub memory_capacity_gb: f64,
}

impl ComputeFixture {
    pub fn to_spec(&self) -> ComputeSpec {
        ComputeSpec {
            peak_perf: self.peak_tflops * 1e12,
            local_mem_bw: self.local_mem_bw_gbps * 1e9,
            memory_capacity: self.memory_capacity_gb * 1e9,
        }
    }
}

fn default_latency_ns() -> f64 {
    500.0
}

/// A system description: compute device, link latency and a default value
/// for every knob. Bandwidths are GB/s, latency ns, compute TFLOPS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFixture {
    pub name: String,
    pub npu_count: u64,
    pub compute: ComputeFixture,
    #[serde(default = "default_latency_ns")]
    pub link_latency_ns: f64,
    pub knobs: serde_json::Map<String, serde_json::Value>,
}

const BUILTIN_SYSTEMS: [(&str, &str); 3] = [
    ("system1", include_str!("../../fixtures/system1.json")),
    ("system2", include_str!("../../fixtures/system2.json")),
    ("system3", include_str!("../../fixtures/system3.json")),
];

impl SystemFixture {
    pub fn parse(text: &str) -> Result<SystemFixture, SimError> {
        let f: SystemFixture = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        if f.npu_count == 0 {
            return Err(SimError::Config("system npu_count must be positive".into()));
        }
        Ok(f)
    }

    pub fn from_file(path: &Path) -> Result<SystemFixture, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `system1`..`system3` (also `System 2`, `2`) or a fixture path.
    pub fn resolve(name_or_path: &str) -> Result<SystemFixture, SimError> {
        let key: String = name_or_path.to_ascii_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
        let key = if key.len() == 1 { format!("system{key}") } else { key };
        if let Some((_, text)) = BUILTIN_SYSTEMS.iter().find(|(k, _)| *k == key) {
            return Ok(Self::parse(text).expect("shipped system fixture is valid"));
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Self::from_file(path);
        }
        Err(SimError::Config(format!("unknown system `{name_or_path}`")))
    }
}
