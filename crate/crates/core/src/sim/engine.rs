use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::collective::{multidim_collective_time, place_axes, send_recv_time, EffectiveDim};
use super::cost::{network_cost, CostCoefficients};
use super::topology::{CollectiveConfig, ComputeSpec, SchedulingPolicy, TopologySpec};
use super::{roofline_time, SimError};
use crate::workload::{OpKind, Scope, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpTiming {
    pub op: usize,
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimReport {
    pub total_latency: f64,
    pub compute_time: f64,
    pub exposed_comm_time: f64,
    /// Communication busy time per network dimension on the busiest stage.
    pub per_dim_comm: Vec<f64>,
    pub peak_memory: f64,
    pub valid: bool,
    pub network_cost: f64,
    /// Latency of one microbatch through every stage.
    pub microbatch_latency: f64,
    /// Steady-state interval between microbatches.
    pub pipeline_period: f64,
    #[serde(skip)]
    pub timeline: Vec<OpTiming>,
}

struct Prepared {
    duration: f64,
    /// Indices into the network resource table.
    resources: Vec<usize>,
    /// Busy seconds per network dim.
    busy: Vec<(usize, f64)>,
}

fn key(t: f64, id: usize) -> (u64, usize) {
    // times are non-negative, so the bit pattern orders like the value
    (t.to_bits(), id)
}

/// Event-driven execution of one microbatch through the trace, extended to
/// the full batch with an analytic steady-state pipeline term.
pub fn simulate(
    trace: &Trace,
    topo: &TopologySpec,
    compute: &ComputeSpec,
    coll: &CollectiveConfig,
) -> Result<SimReport, SimError> {
    topo.validate()?;
    compute.validate()?;
    coll.validate(topo)?;
    trace.topological_order().map_err(|e| SimError::Trace(e.to_string()))?;
    let placement = place_axes(&trace.axes, topo)?;

    let ndims = topo.dims.len();
    let stages = trace.stages.max(1);
    let n = trace.ops.len();

    let mut prepared = Vec::with_capacity(n);
    for op in &trace.ops {
        if op.stage >= stages {
            return Err(SimError::Trace(format!("op {} on missing stage {}", op.id, op.stage)));
        }
        let p = match op.kind {
            OpKind::Compute { flops, bytes } => {
                Prepared { duration: roofline_time(flops, bytes, compute)?, resources: Vec::new(), busy: Vec::new() }
            }
            OpKind::Collective { pattern, bytes, axis } => {
                let span: Vec<EffectiveDim> =
                    placement.span(axis).iter().map(|p| EffectiveDim::from_part(p, topo, coll)).collect();
                if span.is_empty() || bytes <= 0.0 {
                    Prepared { duration: 0.0, resources: Vec::new(), busy: Vec::new() }
                } else {
                    let t = multidim_collective_time(pattern, bytes, &span, coll.chunks, coll.multidim)?;
                    Prepared {
                        duration: t.total,
                        resources: span.iter().map(|d| op.stage * ndims + d.dim).collect(),
                        busy: t.per_dim,
                    }
                }
            }
            OpKind::SendRecv { bytes, src, dst } => {
                if src >= stages || dst >= stages {
                    return Err(SimError::Trace(format!("send-recv {} between missing stages", op.id)));
                }
                let duration = placement.pp.first().map_or(0.0, |part| send_recv_time(bytes, part, topo));
                Prepared { duration, resources: Vec::new(), busy: Vec::new() }
            }
        };
        prepared.push(p);
    }

    let mut indeg = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for op in &trace.ops {
        for &d in &op.deps {
            indeg[op.id] += 1;
            succ[d].push(op.id);
        }
    }

    let mut start = vec![0.0f64; n];
    let mut finish = vec![0.0f64; n];
    let mut ready_at = vec![0.0f64; n];
    let mut compute_queue: Vec<BTreeSet<(u64, usize)>> = vec![BTreeSet::new(); stages];
    let mut compute_busy = vec![false; stages];
    let mut net_busy = vec![false; stages * ndims];
    let mut waiting: Vec<usize> = Vec::new();
    let mut events: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut done = 0usize;

    let launch = |id: usize, now: f64, start: &mut [f64], events: &mut BinaryHeap<Reverse<(u64, usize)>>| {
        start[id] = now;
        events.push(Reverse(key(now + prepared[id].duration, id)));
    };

    let mut now = 0.0f64;
    let mut newly: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    loop {
        for id in newly.drain(..) {
            ready_at[id] = now;
            match trace.ops[id].kind {
                OpKind::Compute { .. } => {
                    compute_queue[trace.ops[id].stage].insert(key(now, id));
                }
                OpKind::Collective { .. } => waiting.push(id),
                OpKind::SendRecv { .. } => launch(id, now, &mut start, &mut events),
            }
        }
        for s in 0..stages {
            if !compute_busy[s] {
                if let Some(first) = compute_queue[s].pop_first() {
                    compute_busy[s] = true;
                    launch(first.1, now, &mut start, &mut events);
                }
            }
        }
        if !waiting.is_empty() {
            match coll.policy {
                SchedulingPolicy::Fifo => waiting.sort_by_key(|&i| key(ready_at[i], i)),
                SchedulingPolicy::Lifo => waiting.sort_by_key(|&i| Reverse(key(ready_at[i], i))),
            }
            let mut still = Vec::with_capacity(waiting.len());
            for &id in &waiting {
                let res = &prepared[id].resources;
                if res.iter().all(|&r| !net_busy[r]) {
                    for &r in res {
                        net_busy[r] = true;
                    }
                    launch(id, now, &mut start, &mut events);
                } else {
                    still.push(id);
                }
            }
            waiting = still;
        }

        let Some(Reverse((bits, first))) = events.pop() else { break };
        now = f64::from_bits(bits);
        let mut batch = vec![first];
        while let Some(Reverse((b, _))) = events.peek() {
            if *b != bits {
                break;
            }
            let Some(Reverse((_, id))) = events.pop() else { break };
            batch.push(id);
        }
        for id in batch {
            finish[id] = now;
            done += 1;
            match trace.ops[id].kind {
                OpKind::Compute { .. } => compute_busy[trace.ops[id].stage] = false,
                OpKind::Collective { .. } => {
                    for &r in &prepared[id].resources {
                        net_busy[r] = false;
                    }
                }
                OpKind::SendRecv { .. } => {}
            }
            for &s in &succ[id] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    newly.push(s);
                }
            }
        }
        newly.sort_unstable();
    }
    if done != n {
        return Err(SimError::Trace("trace could not be scheduled".into()));
    }

    let single = finish.iter().copied().fold(0.0, f64::max);
    let m = trace.microbatches.max(1) as f64;

    let mut period = 0.0f64;
    let mut compute_time = 0.0f64;
    let mut dim_busy = vec![vec![0.0f64; ndims]; stages];
    for s in 0..stages {
        let mut iv: Vec<(f64, f64)> = Vec::new();
        let mut c_mb = 0.0;
        let mut c_step = 0.0;
        for op in trace.ops.iter().filter(|o| o.stage == s) {
            let reps = if op.scope == Scope::PerMicrobatch { m } else { 1.0 };
            for &(d, t) in &prepared[op.id].busy {
                dim_busy[s][d] += t * reps;
            }
            match op.kind {
                OpKind::Compute { .. } if op.scope == Scope::PerMicrobatch => c_mb += prepared[op.id].duration,
                OpKind::Compute { .. } => c_step += prepared[op.id].duration,
                _ => {}
            }
            if op.scope == Scope::PerMicrobatch && !matches!(op.kind, OpKind::SendRecv { .. }) {
                iv.push((start[op.id], finish[op.id]));
            }
        }
        period = period.max(union_length(&mut iv));
        compute_time = compute_time.max(m * c_mb + c_step);
    }
    let mut boundary = vec![0.0f64; stages];
    for op in &trace.ops {
        if let OpKind::SendRecv { src, dst, .. } = op.kind {
            boundary[src.min(dst)] += prepared[op.id].duration;
        }
    }
    period = boundary.iter().copied().fold(period, f64::max);

    let total = single + (m - 1.0) * period;
    let per_dim_comm = (0..ndims).map(|d| dim_busy.iter().map(|s| s[d]).fold(0.0, f64::max)).collect();
    let timeline = (0..n).map(|i| OpTiming { op: i, start: start[i], finish: finish[i] }).collect();

    Ok(SimReport {
        total_latency: total,
        compute_time,
        exposed_comm_time: (total - compute_time).max(0.0),
        per_dim_comm,
        peak_memory: trace.memory_bytes,
        valid: trace.memory_bytes <= compute.memory_capacity,
        network_cost: network_cost(topo, &CostCoefficients::default()),
        microbatch_latency: single,
        pipeline_period: period,
        timeline,
    })
}

fn union_length(iv: &mut [(f64, f64)]) -> f64 {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for &(s, e) in iv.iter() {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        total += ce - cs;
    }
    total
}
