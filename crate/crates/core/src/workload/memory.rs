use serde::{Deserialize, Serialize};

use super::{ModelSpec, ParallelizationSpec, Phase};

/// Coefficients of the per-NPU memory model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryModel {
    /// Optimizer state bytes per weight byte (training only).
    pub optimizer_multiplier: f64,
    /// Activation bytes kept per layer per sample, in units of S·D·bytes_per_param.
    pub activation_factor: f64,
}

impl Default for MemoryModel {
    fn default() -> Self {
        MemoryModel { optimizer_multiplier: 6.0, activation_factor: 17.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    pub weights: f64,
    pub optimizer: f64,
    pub activations: f64,
    pub kv_cache: f64,
    pub total: f64,
}

/// Parameters of one transformer layer, biases ignored.
pub fn layer_params(model: &ModelSpec) -> f64 {
    let d = model.embedding_dim as f64;
    let f = model.ffn_dim as f64;
    4.0 * d * d + 2.0 * d * f
}

pub fn total_params(model: &ModelSpec) -> f64 {
    layer_params(model) * model.num_layers as f64
}

/// Training footprint per NPU under the default memory model.
pub fn memory_footprint(model: &ModelSpec, par: &ParallelizationSpec) -> f64 {
    memory_breakdown(model, par, Phase::Training, &MemoryModel::default()).total
}

pub fn memory_breakdown(model: &ModelSpec, par: &ParallelizationSpec, phase: Phase, mm: &MemoryModel) -> MemoryBreakdown {
    let bpp = model.bytes_per_param;
    let d = model.embedding_dim as f64;
    let tp = par.tp as f64;
    let sp = par.sp as f64;
    let pp = par.pp as f64;
    let shard = if par.weight_sharded { (par.dp * par.sp) as f64 } else { 1.0 };
    let layers_per_stage = model.num_layers as f64 / pp;
    let micro = par.microbatches() as f64;

    let weights = total_params(model) * bpp / (tp * pp * shard);
    let mut out = MemoryBreakdown { weights, ..Default::default() };
    match phase {
        Phase::Training => {
            let s = model.sequence_length as f64;
            out.optimizer = weights * mm.optimizer_multiplier;
            let in_flight = pp.min(micro);
            out.activations = mm.activation_factor * s * d * bpp * layers_per_stage * in_flight / (tp * sp);
        }
        Phase::Prefill { tokens } => {
            let s = tokens as f64;
            out.activations = mm.activation_factor * s * d * bpp / (tp * sp);
            out.kv_cache = 2.0 * s * d * bpp * layers_per_stage * micro / (tp * sp);
        }
        Phase::Decode { context } => {
            let s = context as f64;
            out.activations = mm.activation_factor * d * bpp / tp;
            out.kv_cache = 2.0 * s * d * bpp * layers_per_stage * micro / (tp * sp);
        }
    }
    out.total = out.weights + out.optimizer + out.activations + out.kv_cache;
    out
}
