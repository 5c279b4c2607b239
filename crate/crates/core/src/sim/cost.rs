use serde::{Deserialize, Serialize};

use super::topology::{Block, TopologySpec};

/// Dollar cost per link per GB/s, by block type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostCoefficients {
    pub ring: f64,
    pub switch: f64,
    pub fully_connected: f64,
    /// Switch chassis cost per attached NPU per GB/s.
    pub switch_port: f64,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        CostCoefficients { ring: 1.0, switch: 2.0, fully_connected: 1.0, switch_port: 0.5 }
    }
}

pub fn link_count(block: Block, npus: u64) -> u64 {
    match block {
        _ if npus <= 1 => 0,
        Block::Ring if npus == 2 => 1,
        Block::Ring | Block::Switch => npus,
        Block::FullyConnected => npus * (npus - 1) / 2,
    }
}

/// Cost of the whole fabric. Each dimension is instantiated once per slice
/// of the remaining dimensions.
pub fn network_cost(topo: &TopologySpec, coeff: &CostCoefficients) -> f64 {
    let total = topo.npu_count();
    topo.dims
        .iter()
        .map(|d| {
            let instances = (total / d.npus.max(1)) as f64;
            let gbps = d.link_bw / 1e9;
            let links = link_count(d.block, d.npus) as f64;
            let per_instance = match d.block {
                Block::Ring => links * gbps * coeff.ring,
                Block::Switch => links * gbps * coeff.switch + d.npus as f64 * gbps * coeff.switch_port,
                Block::FullyConnected => links * gbps * coeff.fully_connected,
            };
            instances * per_instance
        })
        .sum()
}
