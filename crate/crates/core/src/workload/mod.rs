//! Transformer trace generation and the per-NPU memory model.

mod generate;
pub mod memory;
pub mod template;
pub mod trace;

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::build_trace_with;
pub use memory::{layer_params, memory_breakdown, memory_footprint, total_params, MemoryBreakdown, MemoryModel};
pub use template::LayerTemplate;
pub use trace::{Axis, AxisSizes, CollectivePattern, CommGroup, OpKind, Pass, Scope, Trace, TraceOp};

use crate::sim::SimReport;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid model: {0}")]
    Model(String),
    #[error("invalid parallelization: {0}")]
    Parallelization(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub num_layers: usize,
    pub embedding_dim: u64,
    pub ffn_dim: u64,
    pub sequence_length: u64,
    pub num_heads: u64,
    #[serde(default = "default_bpp")]
    pub bytes_per_param: f64,
    #[serde(default = "default_sim_layers")]
    pub simulated_layers: usize,
}

fn default_bpp() -> f64 {
    2.0
}

fn default_sim_layers() -> usize {
    4
}

const BUILTIN_MODELS: [(&str, &str); 4] = [
    ("gpt3-175b", include_str!("../../fixtures/models/gpt3-175b.json")),
    ("gpt3-13b", include_str!("../../fixtures/models/gpt3-13b.json")),
    ("vit-base", include_str!("../../fixtures/models/vit-base.json")),
    ("vit-large", include_str!("../../fixtures/models/vit-large.json")),
];

impl ModelSpec {
    pub fn parse(text: &str) -> Result<ModelSpec, WorkloadError> {
        let m: ModelSpec = serde_json::from_str(text).map_err(|e| WorkloadError::Model(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<ModelSpec, WorkloadError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorkloadError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// One of the shipped models, matched case-insensitively.
    pub fn builtin(name: &str) -> Result<ModelSpec, WorkloadError> {
        let key = name.to_ascii_lowercase();
        BUILTIN_MODELS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, text)| Self::parse(text).expect("shipped model fixture is valid"))
            .ok_or_else(|| WorkloadError::UnknownModel(name.to_string()))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_MODELS.iter().map(|(k, _)| *k)
    }

    /// Resolve a shipped model name or a path to a model file.
    pub fn resolve(name_or_path: &str) -> Result<ModelSpec, WorkloadError> {
        match Self::builtin(name_or_path) {
            Ok(m) => Ok(m),
            Err(_) if Path::new(name_or_path).is_file() => Self::from_file(Path::new(name_or_path)),
            Err(e) => Err(e),
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let err = |m: String| Err(WorkloadError::Model(format!("{}: {m}", self.name)));
        if self.num_layers == 0 || self.embedding_dim == 0 || self.num_heads == 0 || self.sequence_length == 0 {
            return err("dimensions must be positive".into());
        }
        if self.embedding_dim % self.num_heads != 0 {
            return err(format!("embedding dim {} not divisible by {} heads", self.embedding_dim, self.num_heads));
        }
        if self.ffn_dim < self.embedding_dim {
            return err("ffn dim smaller than embedding dim".into());
        }
        if self.simulated_layers == 0 || self.simulated_layers > self.num_layers {
            return err(format!("simulated layers {} outside 1..={}", self.simulated_layers, self.num_layers));
        }
        if !(self.bytes_per_param > 0.0) {
            return err("bytes per param must be positive".into());
        }
        Ok(())
    }
}

/// Execution phase of a trace. Token counts are per request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "phase")]
pub enum Phase {
    Training,
    #[serde(rename = "inference-prefill")]
    Prefill { tokens: u64 },
    #[serde(rename = "inference-decode")]
    Decode { context: u64 },
}

impl Phase {
    /// Sequence length the phase operates on.
    pub fn tokens(&self, model: &ModelSpec) -> u64 {
        match *self {
            Phase::Training => model.sequence_length,
            Phase::Prefill { tokens } => tokens,
            Phase::Decode { context } => context,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelizationSpec {
    pub dp: u64,
    pub pp: u64,
    pub sp: u64,
    pub tp: u64,
    pub weight_sharded: bool,
    pub global_batch: u64,
}

pub fn derive_tensor_parallel(dp: u64, sp: u64, pp: u64, npu_count: u64) -> Result<u64, WorkloadError> {
    let used = dp
        .checked_mul(sp)
        .and_then(|x| x.checked_mul(pp))
        .ok_or_else(|| WorkloadError::Parallelization("dp·sp·pp overflows".into()))?;
    if used == 0 || npu_count == 0 {
        return Err(WorkloadError::Parallelization("degrees must be positive".into()));
    }
    if used > npu_count || npu_count % used != 0 {
        return Err(WorkloadError::Parallelization(format!(
            "dp·sp·pp = {used} does not divide {npu_count} NPUs"
        )));
    }
    Ok(npu_count / used)
}

impl ParallelizationSpec {
    pub fn derive(
        dp: u64,
        sp: u64,
        pp: u64,
        npu_count: u64,
        weight_sharded: bool,
        global_batch: u64,
    ) -> Result<ParallelizationSpec, WorkloadError> {
        let tp = derive_tensor_parallel(dp, sp, pp, npu_count)?;
        Ok(ParallelizationSpec { dp, pp, sp, tp, weight_sharded, global_batch })
    }

    pub fn npus(&self) -> u64 {
        self.dp * self.pp * self.sp * self.tp
    }

    /// Microbatches per replica; each microbatch holds one sample.
    pub fn microbatches(&self) -> u64 {
        (self.global_batch / self.dp.max(1)).max(1)
    }

    pub fn validate(&self, model: &ModelSpec, phase: Phase) -> Result<(), WorkloadError> {
        let err = |m: String| Err(WorkloadError::Parallelization(m));
        if self.dp == 0 || self.pp == 0 || self.sp == 0 || self.tp == 0 || self.global_batch == 0 {
            return err("degrees and batch must be positive".into());
        }
        if model.num_heads % self.tp != 0 || model.embedding_dim % self.tp != 0 {
            return err(format!("tp = {} does not divide heads {} / dim {}", self.tp, model.num_heads, model.embedding_dim));
        }
        if model.ffn_dim % self.tp != 0 {
            return err(format!("tp = {} does not divide ffn dim {}", self.tp, model.ffn_dim));
        }
        let s = phase.tokens(model);
        if s % self.sp != 0 {
            return err(format!("sp = {} does not divide sequence length {s}", self.sp));
        }
        if self.global_batch % self.dp != 0 {
            return err(format!("dp = {} does not divide global batch {}", self.dp, self.global_batch));
        }
        if model.simulated_layers as u64 % self.pp != 0 {
            return err(format!("pp = {} does not divide {} simulated layers", self.pp, model.simulated_layers));
        }
        Ok(())
    }
}

fn shared_template() -> &'static LayerTemplate {
    static T: OnceLock<LayerTemplate> = OnceLock::new();
    T.get_or_init(LayerTemplate::transformer)
}

/// Build a trace from the shipped transformer layer template.
pub fn build_trace(model: &ModelSpec, par: &ParallelizationSpec, phase: Phase) -> Result<Trace, WorkloadError> {
    build_trace_with(shared_template(), model, par, phase, &MemoryModel::default())
}

/// Extrapolate a report for the simulated layers to the full model.
/// Every reported term is layer-proportional under the pipeline model, so
/// all of them scale by the same factor.
pub fn scale_report(report: &SimReport, model: &ModelSpec) -> Result<SimReport, WorkloadError> {
    if model.simulated_layers == 0 {
        return Err(WorkloadError::Model("simulated_layers is 0".into()));
    }
    let f = model.num_layers as f64 / model.simulated_layers as f64;
    let mut out = report.clone();
    out.total_latency *= f;
    out.compute_time *= f;
    out.exposed_comm_time *= f;
    out.microbatch_latency *= f;
    out.pipeline_period *= f;
    out.peak_memory *= f;
    for v in &mut out.per_dim_comm {
        *v *= f;
    }
    Ok(out)
}
