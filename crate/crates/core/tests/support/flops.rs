//! Flop count of a transformer layer, written out term by term.

use dse_core::workload::{build_trace, ModelSpec, OpKind, ParallelizationSpec, Phase, Scope};

/// Forward flops of one layer for one sample of `s` tokens.
pub fn layer_forward_flops(m: &ModelSpec, s: f64) -> f64 {
    let d = m.embedding_dim as f64;
    let f = m.ffn_dim as f64;
    let h = m.num_heads as f64;
    let norms = 2.0 * 5.0 * s * d;
    let qkv = 2.0 * s * d * 3.0 * d;
    let score = 2.0 * s * d * s;
    let softmax = 5.0 * s * s * h;
    let context = 2.0 * s * s * d;
    let out = 2.0 * s * d * d;
    let ffn = 2.0 * s * d * f + 8.0 * s * f + 2.0 * s * f * d;
    norms + qkv + score + softmax + context + out + ffn
}

/// Total compute across every NPU and microbatch of one training step.
pub fn trace_total_flops(model: &ModelSpec, par: &ParallelizationSpec) -> f64 {
    let t = build_trace(model, par, Phase::Training).unwrap();
    let mut per_micro = 0.0;
    let mut per_step = 0.0;
    for op in &t.ops {
        if let OpKind::Compute { flops, .. } = op.kind {
            match op.scope {
                Scope::PerMicrobatch => per_micro += flops,
                Scope::PerStep => per_step += flops,
            }
        }
    }
    // every op in a stage runs on each of the tp·sp ranks of that stage
    let ranks = (par.tp * par.sp) as f64;
    (per_micro * t.microbatches as f64 + per_step) * ranks * par.dp as f64
}

/// Forward, backward (twice the forward) over the whole batch.
pub fn expected_step_flops(model: &ModelSpec, global_batch: u64) -> f64 {
    3.0 * layer_forward_flops(model, model.sequence_length as f64) * global_batch as f64 * model.simulated_layers as f64
}
