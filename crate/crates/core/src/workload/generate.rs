use std::collections::HashMap;

use super::memory::{layer_params, memory_breakdown, MemoryModel};
use super::template::{Env, LayerTemplate, TemplateOpKind};
use super::trace::{comm_groups, Axis, AxisSizes, CollectivePattern, OpKind, Pass, Scope, Trace, TraceOp};
use super::{ModelSpec, ParallelizationSpec, Phase, WorkloadError};

struct Builder {
    ops: Vec<TraceOp>,
    last: Vec<Option<usize>>,
}

impl Builder {
    /// Append an op to a stage's program order.
    fn chain(&mut self, stage: usize, name: String, layer: Option<usize>, pass: Pass, kind: OpKind, extra: Option<usize>) -> usize {
        let mut deps: Vec<usize> = self.last[stage].into_iter().collect();
        deps.extend(extra);
        let id = self.push(stage, name, layer, pass, Scope::PerMicrobatch, deps, kind);
        self.last[stage] = Some(id);
        id
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        stage: usize,
        name: String,
        layer: Option<usize>,
        pass: Pass,
        scope: Scope,
        deps: Vec<usize>,
        kind: OpKind,
    ) -> usize {
        let id = self.ops.len();
        self.ops.push(TraceOp { id, name, stage, layer, pass, scope, deps, kind });
        id
    }
}

/// Collectives that re-synchronise TP/SP-sharded activations.
fn sync_ops(par: &ParallelizationSpec, phase: Phase, bytes: f64) -> Vec<(CollectivePattern, Axis)> {
    if par.tp * par.sp == 1 {
        return Vec::new();
    }
    if par.sp == 1 {
        return vec![(CollectivePattern::AllReduce, Axis::Tp)];
    }
    let axis = if par.tp == 1 { Axis::Sp } else { Axis::TpSp };
    if matches!(phase, Phase::Decode { .. }) || bytes <= 0.0 {
        vec![(CollectivePattern::AllReduce, axis)]
    } else {
        vec![(CollectivePattern::ReduceScatter, axis), (CollectivePattern::AllGather, axis)]
    }
}

fn env_for(model: &ModelSpec, par: &ParallelizationSpec, phase: Phase) -> Env {
    let s = phase.tokens(model) as f64;
    let sp = par.sp as f64;
    let (sq, skv) = match phase {
        Phase::Decode { .. } => (1.0, s / sp),
        _ => (s / sp, s),
    };
    Env::new(&HashMap::from([
        ("B", par.global_batch as f64),
        ("S", s),
        ("D", model.embedding_dim as f64),
        ("H", model.num_heads as f64),
        ("ffn", model.ffn_dim as f64),
        ("dp", par.dp as f64),
        ("sp", sp),
        ("tp", par.tp as f64),
        ("pp", par.pp as f64),
        ("b", 1.0),
        ("bpp", model.bytes_per_param),
        ("Sq", sq),
        ("Skv", skv),
    ]))
}

enum Concrete {
    Compute { flops: f64, bytes: f64 },
    Sync { bytes: f64 },
}

fn instantiate(template: &LayerTemplate, env: &Env, bpp: f64) -> Result<Vec<(String, Concrete)>, WorkloadError> {
    template
        .ops
        .iter()
        .map(|op| {
            let c = match &op.kind {
                TemplateOpKind::Gemm { m, k, n } => {
                    let (m, k, n) = (m.eval(env)?, k.eval(env)?, n.eval(env)?);
                    Concrete::Compute { flops: 2.0 * m * k * n, bytes: (m * k + k * n + m * n) * bpp }
                }
                TemplateOpKind::Elementwise { flops, bytes } => {
                    Concrete::Compute { flops: flops.eval(env)?, bytes: bytes.eval(env)? }
                }
                TemplateOpKind::TpSync { bytes } => Concrete::Sync { bytes: bytes.eval(env)? },
            };
            if let Concrete::Compute { flops, bytes } = c {
                if !(flops > 0.0 && bytes >= 0.0 && flops.is_finite() && bytes.is_finite()) {
                    return Err(WorkloadError::Template(format!("op `{}` evaluates to flops {flops}, bytes {bytes}", op.name)));
                }
            }
            Ok((op.name.clone(), c))
        })
        .collect()
}

pub fn build_trace_with(
    template: &LayerTemplate,
    model: &ModelSpec,
    par: &ParallelizationSpec,
    phase: Phase,
    mm: &MemoryModel,
) -> Result<Trace, WorkloadError> {
    model.validate()?;
    par.validate(model, phase)?;

    let bpp = model.bytes_per_param;
    let pp = par.pp as usize;
    let layers = model.simulated_layers;
    let per_stage = layers / pp;
    let env = env_for(model, par, phase);
    let ops = instantiate(template, &env, bpp)?;
    let training = matches!(phase, Phase::Training);

    let s_local = match phase {
        Phase::Decode { .. } => 1.0,
        _ => phase.tokens(model) as f64 / par.sp as f64,
    };
    let boundary_bytes = s_local * model.embedding_dim as f64 * bpp;
    let grad_bytes = layer_params(model) / par.tp as f64 * bpp;
    let grad_group = par.dp * par.sp;
    let grad_axis = if par.sp == 1 { Axis::Dp } else { Axis::DpSp };

    let mut b = Builder { ops: Vec::new(), last: vec![None; pp] };

    let mut incoming: Option<usize> = None;
    for stage in 0..pp {
        let mut extra = incoming.take();
        for layer in stage * per_stage..(stage + 1) * per_stage {
            for (name, c) in &ops {
                match c {
                    Concrete::Compute { flops, bytes } => {
                        let kind = OpKind::Compute { flops: *flops, bytes: *bytes };
                        b.chain(stage, format!("L{layer}.{name}.fwd"), Some(layer), Pass::Forward, kind, extra.take());
                    }
                    Concrete::Sync { bytes } => {
                        for (pattern, axis) in sync_ops(par, phase, *bytes) {
                            let kind = OpKind::Collective { pattern, bytes: *bytes, axis };
                            let label = format!("L{layer}.{name}.{}.fwd", pattern.short());
                            b.chain(stage, label, Some(layer), Pass::Forward, kind, extra.take());
                        }
                    }
                }
            }
        }
        if stage + 1 < pp {
            let deps = b.last[stage].into_iter().collect();
            let kind = OpKind::SendRecv { bytes: boundary_bytes, src: stage, dst: stage + 1 };
            let id = b.push(stage, format!("S{stage}->S{}.fwd", stage + 1), None, Pass::Forward, Scope::PerMicrobatch, deps, kind);
            incoming = Some(id);
        }
    }

    if training {
        let mut incoming: Option<usize> = None;
        for stage in (0..pp).rev() {
            let mut extra = incoming.take();
            for layer in (stage * per_stage..(stage + 1) * per_stage).rev() {
                for (name, c) in ops.iter().rev() {
                    match c {
                        Concrete::Compute { flops, bytes } => {
                            let kind = OpKind::Compute { flops: 2.0 * flops, bytes: 2.0 * bytes };
                            b.chain(stage, format!("L{layer}.{name}.bwd"), Some(layer), Pass::Backward, kind, extra.take());
                        }
                        Concrete::Sync { bytes } => {
                            for (pattern, axis) in sync_ops(par, phase, *bytes) {
                                let kind = OpKind::Collective { pattern, bytes: *bytes, axis };
                                let label = format!("L{layer}.{name}.{}.bwd", pattern.short());
                                b.chain(stage, label, Some(layer), Pass::Backward, kind, extra.take());
                            }
                        }
                    }
                }
                if grad_group > 1 {
                    let done = b.last[stage].expect("layer emitted ops");
                    let patterns: &[CollectivePattern] = if par.weight_sharded {
                        &[CollectivePattern::ReduceScatter, CollectivePattern::AllGather]
                    } else {
                        &[CollectivePattern::AllReduce]
                    };
                    let mut dep = done;
                    for &pattern in patterns {
                        let kind = OpKind::Collective { pattern, bytes: grad_bytes, axis: grad_axis };
                        let label = format!("L{layer}.grad.{}", pattern.short());
                        dep = b.push(stage, label, Some(layer), Pass::Backward, Scope::PerStep, vec![dep], kind);
                    }
                }
            }
            if stage > 0 {
                let deps = b.last[stage].into_iter().collect();
                let kind = OpKind::SendRecv { bytes: boundary_bytes, src: stage, dst: stage - 1 };
                let label = format!("S{stage}->S{}.bwd", stage - 1);
                incoming = Some(b.push(stage, label, None, Pass::Backward, Scope::PerMicrobatch, deps, kind));
            }
        }
    }

    let sim_model = ModelSpec { num_layers: model.simulated_layers, ..model.clone() };
    let axes = AxisSizes { tp: par.tp, sp: par.sp, dp: par.dp, pp: par.pp };
    let trace = Trace {
        ops: b.ops,
        groups: comm_groups(&axes),
        axes,
        stages: pp,
        microbatches: par.microbatches(),
        simulated_layers: layers,
        memory_bytes: memory_breakdown(&sim_model, par, phase, mm).total,
    };
    trace.validate()?;
    Ok(trace)
}
