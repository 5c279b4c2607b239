use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CollectivePattern {
    AllReduce,
    AllGather,
    ReduceScatter,
    AllToAll,
}

impl CollectivePattern {
    pub fn short(self) -> &'static str {
        match self {
            CollectivePattern::AllReduce => "AR",
            CollectivePattern::AllGather => "AG",
            CollectivePattern::ReduceScatter => "RS",
            CollectivePattern::AllToAll => "A2A",
        }
    }
}

/// Parallelism axis a collective runs over. Combined axes cover the union
/// of both groups (TP ranks are innermost).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Tp,
    Sp,
    TpSp,
    Dp,
    DpSp,
    Pp,
}

impl Axis {
    pub const ALL: [Axis; 6] = [Axis::Tp, Axis::Sp, Axis::TpSp, Axis::Dp, Axis::DpSp, Axis::Pp];
}

/// Degrees of the four parallelism axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSizes {
    pub tp: u64,
    pub sp: u64,
    pub dp: u64,
    pub pp: u64,
}

impl AxisSizes {
    pub fn npus(&self) -> u64 {
        self.tp * self.sp * self.dp * self.pp
    }

    pub fn size(&self, axis: Axis) -> u64 {
        match axis {
            Axis::Tp => self.tp,
            Axis::Sp => self.sp,
            Axis::TpSp => self.tp * self.sp,
            Axis::Dp => self.dp,
            Axis::DpSp => self.dp * self.sp,
            Axis::Pp => self.pp,
        }
    }

    /// Rank distance between neighbouring members of an axis group.
    pub fn stride(&self, axis: Axis) -> u64 {
        match axis {
            Axis::Tp | Axis::TpSp => 1,
            Axis::Sp | Axis::DpSp => self.tp,
            Axis::Dp => self.tp * self.sp,
            Axis::Pp => self.tp * self.sp * self.dp,
        }
    }

    /// NPUs running one pipeline stage.
    pub fn stage_width(&self) -> u64 {
        self.tp * self.sp * self.dp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    /// Repeated once per microbatch.
    PerMicrobatch,
    /// Issued once per training step.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pass {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OpKind {
    Compute { flops: f64, bytes: f64 },
    Collective { pattern: CollectivePattern, bytes: f64, axis: Axis },
    SendRecv { bytes: f64, src: usize, dst: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOp {
    pub id: usize,
    pub name: String,
    pub stage: usize,
    pub layer: Option<usize>,
    pub pass: Pass,
    pub scope: Scope,
    pub deps: Vec<usize>,
    pub kind: OpKind,
}

impl TraceOp {
    pub fn is_compute(&self) -> bool {
        matches!(self.kind, OpKind::Compute { .. })
    }

    pub fn is_collective(&self) -> bool {
        matches!(self.kind, OpKind::Collective { .. })
    }
}

/// NPU ids of the group containing rank 0 on one axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommGroup {
    pub axis: Axis,
    pub npus: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub ops: Vec<TraceOp>,
    pub groups: Vec<CommGroup>,
    pub axes: AxisSizes,
    pub stages: usize,
    pub microbatches: u64,
    pub simulated_layers: usize,
    /// Per-NPU footprint of the simulated layers.
    pub memory_bytes: f64,
}

pub fn comm_groups(axes: &AxisSizes) -> Vec<CommGroup> {
    Axis::ALL
        .iter()
        .map(|&axis| {
            let stride = axes.stride(axis);
            CommGroup { axis, npus: (0..axes.size(axis)).map(|i| i * stride).collect() }
        })
        .collect()
}

impl Trace {
    pub fn group(&self, axis: Axis) -> Option<&CommGroup> {
        self.groups.iter().find(|g| g.axis == axis)
    }

    /// Kahn order over the dependency edges; errors on cycles or dangling ids.
    pub fn topological_order(&self) -> Result<Vec<usize>, WorkloadError> {
        let n = self.ops.len();
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, op) in self.ops.iter().enumerate() {
            if op.id != i {
                return Err(WorkloadError::Trace(format!("op at position {i} has id {}", op.id)));
            }
            for &d in &op.deps {
                if d >= n {
                    return Err(WorkloadError::Trace(format!("op {i} depends on missing op {d}")));
                }
                indeg[i] += 1;
                succ[d].push(i);
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &s in &succ[i] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    queue.push_back(s);
                }
            }
        }
        if order.len() != n {
            return Err(WorkloadError::Trace("trace has a dependency cycle".into()));
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        self.topological_order()?;
        for g in &self.groups {
            if g.npus.len() as u64 != self.axes.size(g.axis) {
                return Err(WorkloadError::Trace(format!(
                    "{:?} group has {} members, axis degree is {}",
                    g.axis,
                    g.npus.len(),
                    self.axes.size(g.axis)
                )));
            }
        }
        for op in &self.ops {
            if op.stage >= self.stages {
                return Err(WorkloadError::Trace(format!("op {} on missing stage {}", op.id, op.stage)));
            }
            let positive = match &op.kind {
                OpKind::Compute { flops, bytes } => *flops > 0.0 && *bytes >= 0.0,
                OpKind::Collective { bytes, axis, .. } => {
                    if self.group(*axis).is_none() {
                        return Err(WorkloadError::Trace(format!("op {} uses axis {axis:?} without a group", op.id)));
                    }
                    *bytes > 0.0
                }
                OpKind::SendRecv { bytes, src, dst } => *bytes > 0.0 && *src < self.stages && *dst < self.stages,
            };
            if !positive {
                return Err(WorkloadError::Trace(format!("op {} `{}` has a non-positive size", op.id, op.name)));
            }
        }
        Ok(())
    }

    /// Flops executed across the whole cluster for one training step or
    /// inference pass.
    pub fn total_flops(&self) -> f64 {
        let width = self.axes.stage_width() as f64;
        let m = self.microbatches as f64;
        self.ops
            .iter()
            .map(|op| match op.kind {
                OpKind::Compute { flops, .. } => {
                    let reps = if op.scope == Scope::PerMicrobatch { m } else { 1.0 };
                    flops * width * reps
                }
                _ => 0.0,
            })
            .sum()
    }

    pub fn collectives(&self) -> impl Iterator<Item = (&TraceOp, CollectivePattern, f64, Axis)> {
        self.ops.iter().filter_map(|op| match op.kind {
            OpKind::Collective { pattern, bytes, axis } => Some((op, pattern, bytes, axis)),
            _ => None,
        })
    }
}
