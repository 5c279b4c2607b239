//! Rewards and the point evaluator: constraints, trace, simulation, memory gate.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::schema::{check_constraints, decode_action, ActionVector, DesignPoint, Schema, Value};
use crate::sim::{
    network_cost, simulate, Algorithm, Block, CollectiveConfig, CostCoefficients, MultiDimMode, SchedulingPolicy,
    SimReport, SystemFixture, TopologyDim, TopologySpec,
};
use crate::workload::{
    build_trace_with, derive_tensor_parallel, scale_report, LayerTemplate, MemoryModel, ModelSpec,
    ParallelizationSpec, Phase,
};

pub const REWARD_EPSILON: f64 = 1e-12;
pub const DEFAULT_MEMORY_LIMIT_GB: f64 = 24.0;

fn offset_reward(latency: f64, metric: f64) -> f64 {
    1.0 / (latency * metric - 1.0).abs().max(REWARD_EPSILON)
}

/// Reward for performance per unit of per-NPU bandwidth (GB/s summed over dims).
pub fn reward_perf_per_bw(latency: f64, bandwidth_per_dim: &[f64]) -> f64 {
    // summed in sorted order so any permutation gives the same bits
    let mut bw = bandwidth_per_dim.to_vec();
    bw.sort_by(f64::total_cmp);
    offset_reward(latency, bw.iter().sum())
}

pub fn reward_perf_per_cost(latency: f64, network_cost: f64) -> f64 {
    offset_reward(latency, network_cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    PerfPerBw,
    PerfPerCost,
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perf_per_bw" => Ok(Objective::PerfPerBw),
            "perf_per_cost" => Ok(Objective::PerfPerCost),
            _ => Err(format!("unknown objective `{s}` (expected perf_per_bw or perf_per_cost)")),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::PerfPerBw => "perf_per_bw",
            Objective::PerfPerCost => "perf_per_cost",
        })
    }
}

/// What the evaluated system runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum WorkloadMode {
    Training,
    /// Latency is one prefill plus `decode_tokens` decode steps.
    Inference { prefill_tokens: u64, decode_tokens: u64 },
}

impl WorkloadMode {
    pub const CHAT: WorkloadMode = WorkloadMode::Inference { prefill_tokens: 2048, decode_tokens: 128 };
    pub const QA: WorkloadMode = WorkloadMode::Inference { prefill_tokens: 512, decode_tokens: 32 };
}

impl Default for WorkloadMode {
    fn default() -> Self {
        WorkloadMode::Training
    }
}

/// Where an invalid evaluation was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Structure,
    Constraint,
    Config,
    Parallelization,
    Trace,
    Simulation,
    Memory,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    // workload
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tp: Option<u64>,
    pub memory_bytes: f64,
    pub compute_time: f64,
    // collective
    pub exposed_comm_time: f64,
    pub per_dim_comm: Vec<f64>,
    // network
    pub bandwidth_sum: f64,
    pub network_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reward: f64,
    pub latency: f64,
    pub valid: bool,
    pub diagnostics: Diagnostics,
}

impl Evaluation {
    pub fn invalid(kind: FailureKind, message: impl Into<String>) -> Evaluation {
        Evaluation {
            reward: 0.0,
            latency: 0.0,
            valid: false,
            diagnostics: Diagnostics { failure: Some(kind), message: Some(message.into()), ..Default::default() },
        }
    }
}

type Fail = (FailureKind, String);

/// Knob assignment after overlaying a design point on system defaults.
struct Knobs<'a> {
    point: &'a DesignPoint,
    system: &'a SystemFixture,
}

impl Knobs<'_> {
    fn values(&self, name: &str) -> Result<Vec<Value>, Fail> {
        if let Some(v) = self.point.get(name) {
            return Ok(v.to_vec());
        }
        let raw = self
            .system
            .knobs
            .get(name)
            .ok_or_else(|| (FailureKind::Config, format!("no value for knob `{name}`")))?;
        let items = match raw {
            serde_json::Value::Array(a) => a.clone(),
            other => vec![other.clone()],
        };
        items
            .into_iter()
            .map(|v| serde_json::from_value(v).map_err(|e| (FailureKind::Config, format!("knob `{name}`: {e}"))))
            .collect()
    }

    fn int(&self, name: &str) -> Result<u64, Fail> {
        let v = self.values(name)?;
        match v.as_slice() {
            [x] => x
                .as_i64()
                .filter(|&i| i >= 0)
                .map(|i| i as u64)
                .ok_or_else(|| (FailureKind::Config, format!("knob `{name}` must be a non-negative integer"))),
            _ => Err((FailureKind::Config, format!("knob `{name}` must be a scalar"))),
        }
    }

    fn text(&self, name: &str) -> Result<String, Fail> {
        let v = self.values(name)?;
        match v.as_slice() {
            [x] => Ok(x.to_string()),
            _ => Err((FailureKind::Config, format!("knob `{name}` must be a scalar"))),
        }
    }

    fn list(&self, name: &str) -> Result<Vec<Value>, Fail> {
        self.values(name)
    }
}

fn cfg<E: fmt::Display>(e: E) -> Fail {
    (FailureKind::Config, e.to_string())
}

/// Evaluates design points of one schema against a model and base system.
#[derive(Debug, Clone)]
pub struct Evaluator {
    /// Schema the full point is checked against.
    pub schema: Schema,
    /// Schema that action vectors index into; differs from `schema` when
    /// some knobs are frozen.
    pub search_schema: Schema,
    /// Values of knobs absent from `search_schema`.
    pub frozen: DesignPoint,
    pub model: ModelSpec,
    pub system: SystemFixture,
    pub objective: Objective,
    /// Per-NPU memory limit in bytes.
    pub memory_limit: f64,
    pub mode: WorkloadMode,
    pub global_batch: u64,
    pub template: Arc<LayerTemplate>,
    pub memory_model: MemoryModel,
    pub cost: CostCoefficients,
}

impl Evaluator {
    pub fn new(schema: Schema, model: ModelSpec, system: SystemFixture, objective: Objective) -> Evaluator {
        Evaluator {
            search_schema: schema.clone(),
            frozen: DesignPoint::new(),
            schema,
            model,
            system,
            objective,
            memory_limit: DEFAULT_MEMORY_LIMIT_GB * 1e9,
            mode: WorkloadMode::Training,
            global_batch: 1024,
            template: Arc::new(LayerTemplate::transformer()),
            memory_model: MemoryModel::default(),
            cost: CostCoefficients::default(),
        }
    }

    pub fn evaluate_action(&self, action: &ActionVector) -> Evaluation {
        match decode_action(&self.search_schema, action) {
            Ok(p) => self.evaluate(&self.complete(&p)),
            Err(e) => Evaluation::invalid(FailureKind::Structure, e.to_string()),
        }
    }

    /// Merge searched and frozen knobs in full-schema order.
    pub fn complete(&self, searched: &DesignPoint) -> DesignPoint {
        let mut out = DesignPoint::new();
        for k in &self.schema.knobs {
            if let Some(v) = searched.get(&k.name).or_else(|| self.frozen.get(&k.name)) {
                out.set(k.name.clone(), v.to_vec());
            }
        }
        out
    }

    /// Never panics; every failure becomes a zero-reward evaluation.
    pub fn evaluate(&self, point: &DesignPoint) -> Evaluation {
        match catch_unwind(AssertUnwindSafe(|| self.evaluate_inner(point))) {
            Ok(Ok(e)) => e,
            Ok(Err((kind, msg))) => Evaluation::invalid(kind, msg),
            Err(_) => Evaluation::invalid(FailureKind::Internal, "evaluation panicked"),
        }
    }

    fn evaluate_inner(&self, point: &DesignPoint) -> Result<Evaluation, Fail> {
        let validity = check_constraints(&self.schema, point).map_err(|e| (FailureKind::Structure, e.to_string()))?;
        if !validity.valid {
            let msgs: Vec<String> = validity
                .violations
                .iter()
                .map(|v| format!("{} (product {} vs bound {})", v.description, v.product, v.bound))
                .collect();
            return Err((FailureKind::Constraint, msgs.join("; ")));
        }
        let knobs = Knobs { point, system: &self.system };
        let (topo, coll) = self.system_config(&knobs)?;
        let npu_count = topo.npu_count();
        if npu_count != self.system.npu_count {
            return Err((
                FailureKind::Config,
                format!("topology has {npu_count} NPUs, system has {}", self.system.npu_count),
            ));
        }
        let (dp, sp, pp) = (knobs.int("dp")?, knobs.int("sp")?, knobs.int("pp")?);
        let ws = knobs.int("weight_sharded")? != 0;
        let tp = derive_tensor_parallel(dp, sp, pp, npu_count).map_err(|e| (FailureKind::Parallelization, e.to_string()))?;
        let par = ParallelizationSpec { dp, pp, sp, tp, weight_sharded: ws, global_batch: self.global_batch };

        let compute = self.system.compute.to_spec();
        let run = |phase: Phase| -> Result<SimReport, Fail> {
            let trace = build_trace_with(&self.template, &self.model, &par, phase, &self.memory_model)
                .map_err(|e| (FailureKind::Parallelization, e.to_string()))?;
            let report = simulate(&trace, &topo, &compute, &coll).map_err(|e| (FailureKind::Simulation, e.to_string()))?;
            scale_report(&report, &self.model).map_err(|e| (FailureKind::Trace, e.to_string()))
        };
        let (latency, report, memory) = match self.mode {
            WorkloadMode::Training => {
                let r = run(Phase::Training)?;
                (r.total_latency, r.clone(), r.peak_memory)
            }
            WorkloadMode::Inference { prefill_tokens, decode_tokens } => {
                let pre = run(Phase::Prefill { tokens: prefill_tokens })?;
                let dec = run(Phase::Decode { context: prefill_tokens + decode_tokens })?;
                let lat = pre.total_latency + decode_tokens as f64 * dec.total_latency;
                let mem = pre.peak_memory.max(dec.peak_memory);
                (lat, pre, mem)
            }
        };

        let bandwidths: Vec<f64> = topo.dims.iter().map(|d| d.link_bw / 1e9).collect();
        let cost = network_cost(&topo, &self.cost);
        let mut diagnostics = Diagnostics {
            failure: None,
            message: None,
            tp: Some(tp),
            memory_bytes: memory,
            compute_time: report.compute_time,
            exposed_comm_time: report.exposed_comm_time,
            per_dim_comm: report.per_dim_comm.clone(),
            bandwidth_sum: bandwidths.iter().sum(),
            network_cost: cost,
        };
        if memory > self.memory_limit {
            diagnostics.failure = Some(FailureKind::Memory);
            diagnostics.message = Some(format!(
                "{:.2} GB per NPU exceeds the {:.2} GB limit",
                memory / 1e9,
                self.memory_limit / 1e9
            ));
            return Ok(Evaluation { reward: 0.0, latency, valid: false, diagnostics });
        }
        if !(latency.is_finite() && latency >= 0.0) {
            return Err((FailureKind::Simulation, format!("non-finite latency {latency}")));
        }
        let reward = match self.objective {
            Objective::PerfPerBw => reward_perf_per_bw(latency, &bandwidths),
            Objective::PerfPerCost => reward_perf_per_cost(latency, cost),
        };
        Ok(Evaluation { reward, latency, valid: true, diagnostics })
    }

    fn system_config(&self, knobs: &Knobs) -> Result<(TopologySpec, CollectiveConfig), Fail> {
        let blocks = knobs.list("topology")?;
        let npus = knobs.list("npus_per_dim")?;
        let bws = knobs.list("bandwidth_per_dim")?;
        let algs = knobs.list("collective_algorithm")?;
        if blocks.len() != npus.len() || blocks.len() != bws.len() || blocks.len() != algs.len() {
            return Err((FailureKind::Config, "per-dimension knobs disagree on dimension count".into()));
        }
        let latency = self.system.link_latency_ns * 1e-9;
        let mut dims = Vec::with_capacity(blocks.len());
        for ((b, n), bw) in blocks.iter().zip(&npus).zip(&bws) {
            let npus = n
                .as_i64()
                .filter(|&x| x > 0)
                .ok_or_else(|| (FailureKind::Config, format!("npus per dim `{n}` is not a positive integer")))?;
            let gbps = bw.as_f64().ok_or_else(|| (FailureKind::Config, format!("bandwidth `{bw}` is not numeric")))?;
            dims.push(TopologyDim {
                block: Block::parse(&b.to_string()).map_err(cfg)?,
                npus: npus as u64,
                link_bw: gbps * 1e9,
                link_latency: latency,
            });
        }
        let topo = TopologySpec { dims };
        topo.validate().map_err(cfg)?;
        let coll = CollectiveConfig {
            algorithms: algs.iter().map(|a| Algorithm::parse(&a.to_string())).collect::<Result<_, _>>().map_err(cfg)?,
            chunks: u32::try_from(knobs.int("chunks_per_collective")?).map_err(cfg)?,
            policy: SchedulingPolicy::parse(&knobs.text("scheduling_policy")?).map_err(cfg)?,
            multidim: MultiDimMode::parse(&knobs.text("multidim_collective")?).map_err(cfg)?,
        };
        coll.validate(&topo).map_err(cfg)?;
        Ok((topo, coll))
    }
}
