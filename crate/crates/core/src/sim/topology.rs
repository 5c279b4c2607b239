use std::fmt;

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Ring,
    Switch,
    FullyConnected,
}

impl Block {
    pub fn parse(s: &str) -> Result<Block, SimError> {
        match s.to_ascii_uppercase().as_str() {
            "RI" | "RING" => Ok(Block::Ring),
            "SW" | "SWITCH" => Ok(Block::Switch),
            "FC" | "FULLYCONNECTED" | "FULLY-CONNECTED" => Ok(Block::FullyConnected),
            _ => Err(SimError::Config(format!("unknown topology block `{s}`"))),
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Block::Ring => "RI",
            Block::Switch => "SW",
            Block::FullyConnected => "FC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    Ring,
    Direct,
    HalvingDoubling,
    DoubleBinaryTree,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Algorithm, SimError> {
        match s.to_ascii_uppercase().as_str() {
            "RI" | "RING" => Ok(Algorithm::Ring),
            "DI" | "DIRECT" => Ok(Algorithm::Direct),
            "RHD" => Ok(Algorithm::HalvingDoubling),
            "DBT" => Ok(Algorithm::DoubleBinaryTree),
            _ => Err(SimError::Config(format!("unknown collective algorithm `{s}`"))),
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Algorithm::Ring => "RI",
            Algorithm::Direct => "DI",
            Algorithm::HalvingDoubling => "RHD",
            Algorithm::DoubleBinaryTree => "DBT",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulingPolicy {
    Lifo,
    Fifo,
}

impl SchedulingPolicy {
    pub fn parse(s: &str) -> Result<SchedulingPolicy, SimError> {
        match s.to_ascii_uppercase().as_str() {
            "LIFO" => Ok(SchedulingPolicy::Lifo),
            "FIFO" => Ok(SchedulingPolicy::Fifo),
            _ => Err(SimError::Config(format!("unknown scheduling policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MultiDimMode {
    Baseline,
    BlueConnect,
}

impl MultiDimMode {
    pub fn parse(s: &str) -> Result<MultiDimMode, SimError> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(MultiDimMode::Baseline),
            "blueconnect" => Ok(MultiDimMode::BlueConnect),
            _ => Err(SimError::Config(format!("unknown multi-dim collective `{s}`"))),
        }
    }
}

/// One network dimension. Bandwidth in bytes/s, latency in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyDim {
    pub block: Block,
    pub npus: u64,
    pub link_bw: f64,
    pub link_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub dims: Vec<TopologyDim>,
}

impl TopologySpec {
    pub fn npu_count(&self) -> u64 {
        self.dims.iter().map(|d| d.npus).product()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.dims.is_empty() {
            return Err(SimError::Config("topology has no dimensions".into()));
        }
        for (i, d) in self.dims.iter().enumerate() {
            if d.npus == 0 {
                return Err(SimError::Config(format!("dim {i} has no NPUs")));
            }
            if !(d.link_bw > 0.0 && d.link_bw.is_finite()) {
                return Err(SimError::Config(format!("dim {i} bandwidth must be positive")));
            }
            if !(d.link_latency >= 0.0 && d.link_latency.is_finite()) {
                return Err(SimError::Config(format!("dim {i} latency must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Compute device: flops/s, bytes/s, bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub peak_perf: f64,
    pub local_mem_bw: f64,
    pub memory_capacity: f64,
}

impl ComputeSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.peak_perf > 0.0 && self.local_mem_bw > 0.0 && self.memory_capacity > 0.0) {
            return Err(SimError::Config("compute parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveConfig {
    pub algorithms: Vec<Algorithm>,
    pub chunks: u32,
    pub policy: SchedulingPolicy,
    pub multidim: MultiDimMode,
}

impl CollectiveConfig {
    pub fn validate(&self, topo: &TopologySpec) -> Result<(), SimError> {
        if self.chunks == 0 {
            return Err(SimError::Config("chunks per collective must be at least 1".into()));
        }
        if self.algorithms.len() != topo.dims.len() {
            return Err(SimError::Config(format!(
                "{} collective algorithms for {} topology dims",
                self.algorithms.len(),
                topo.dims.len()
            )));
        }
        Ok(())
    }
}
