use serde::{Deserialize, Serialize};

use super::topology::{Algorithm, Block, CollectiveConfig, MultiDimMode, TopologySpec};
use super::SimError;
use crate::workload::{Axis, AxisSizes, CollectivePattern};

/// Analytic time of one collective on a single dimension without topology
/// penalties. `chunks` pipeline the bandwidth term; latency is paid per chunk.
pub fn collective_time_1d(
    pattern: CollectivePattern,
    algorithm: Algorithm,
    p: u64,
    payload_bytes: f64,
    link_bw: f64,
    link_latency: f64,
    chunks: u32,
) -> f64 {
    if p <= 1 || payload_bytes <= 0.0 {
        return 0.0;
    }
    let pf = p as f64;
    let c = chunks.max(1) as f64;
    let m = payload_bytes;
    let steps = pf.log2().ceil();
    // reduce-scatter (= all-gather) time
    let half = match algorithm {
        Algorithm::Ring => (pf - 1.0) * (c * link_latency + m / (pf * link_bw)),
        Algorithm::HalvingDoubling => steps * c * link_latency + m * (pf - 1.0) / (pf * link_bw),
        Algorithm::Direct => c * link_latency + (pf - 1.0) * m / (pf * link_bw),
        Algorithm::DoubleBinaryTree => steps * c * link_latency + m / link_bw,
    };
    match pattern {
        CollectivePattern::AllReduce => 2.0 * half,
        _ => half,
    }
}

fn ring_dist(k: u64, n: u64) -> u64 {
    let k = k % n;
    k.min(n - k)
}

/// Average ring hops per logical exchange when `algorithm` runs on `p`
/// ranks spaced `stride` apart on a ring of `n` NPUs.
pub fn hop_factor(algorithm: Algorithm, block: Block, p: u64, stride: u64, n: u64) -> f64 {
    if block != Block::Ring || p <= 1 || n <= 2 {
        return 1.0;
    }
    let d = |k: u64| ring_dist(k * stride, n).max(1) as f64;
    match algorithm {
        Algorithm::Ring => d(1),
        Algorithm::Direct => (1..p).map(d).sum::<f64>() / (p - 1) as f64,
        Algorithm::HalvingDoubling => {
            let levels = (p as f64).log2().ceil() as u32;
            (0..levels).map(|i| d(1 << i)).sum::<f64>() / levels as f64
        }
        Algorithm::DoubleBinaryTree => {
            let levels = (p as f64).log2().ceil() as u32;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..levels {
                let edges = (p >> (i + 1)).max(1) as f64;
                num += edges * d(1 << i);
                den += edges;
            }
            num / den
        }
    }
}

/// A slice of a parallelism axis laid onto one network dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisPart {
    pub dim: usize,
    pub factor: u64,
    /// Distance, in NPUs of this dimension, between neighbouring members.
    pub stride: u64,
}

/// Mapping of the TP, SP, DP and PP axes onto network dimensions, packed
/// innermost-first in that order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub tp: Vec<AxisPart>,
    pub sp: Vec<AxisPart>,
    pub dp: Vec<AxisPart>,
    pub pp: Vec<AxisPart>,
}

pub fn place_axes(axes: &AxisSizes, topo: &TopologySpec) -> Result<Placement, SimError> {
    if axes.npus() != topo.npu_count() {
        return Err(SimError::Mismatch(format!(
            "parallelization covers {} NPUs, topology has {}",
            axes.npus(),
            topo.npu_count()
        )));
    }
    let mut cap: Vec<u64> = topo.dims.iter().map(|d| d.npus).collect();
    let mut used: Vec<u64> = vec![1; cap.len()];
    let mut dim = 0;
    let mut place = |size: u64| -> Result<Vec<AxisPart>, SimError> {
        let mut rest = size;
        let mut parts = Vec::new();
        while rest > 1 {
            while dim < cap.len() && cap[dim] == 1 {
                dim += 1;
            }
            if dim == cap.len() {
                return Err(SimError::Mismatch("axes exceed topology".into()));
            }
            let f = if cap[dim] % rest == 0 {
                rest
            } else if rest % cap[dim] == 0 {
                cap[dim]
            } else {
                return Err(SimError::Mismatch(format!(
                    "axis of size {size} does not tile dimension {dim} of {} NPUs",
                    topo.dims[dim].npus
                )));
            };
            parts.push(AxisPart { dim, factor: f, stride: used[dim] });
            used[dim] *= f;
            cap[dim] /= f;
            rest /= f;
        }
        Ok(parts)
    };
    let tp = place(axes.tp)?;
    let sp = place(axes.sp)?;
    let dp = place(axes.dp)?;
    let pp = place(axes.pp)?;
    Ok(Placement { tp, sp, dp, pp })
}

fn merge(a: &[AxisPart], b: &[AxisPart]) -> Vec<AxisPart> {
    let mut out: Vec<AxisPart> = a.to_vec();
    for &p in b {
        match out.last_mut() {
            Some(last) if last.dim == p.dim && last.stride * last.factor == p.stride => last.factor *= p.factor,
            _ => out.push(p),
        }
    }
    out
}

impl Placement {
    /// Dimensions an axis group spans, innermost first.
    pub fn span(&self, axis: Axis) -> Vec<AxisPart> {
        match axis {
            Axis::Tp => self.tp.clone(),
            Axis::Sp => self.sp.clone(),
            Axis::TpSp => merge(&self.tp, &self.sp),
            Axis::Dp => self.dp.clone(),
            Axis::DpSp => merge(&self.sp, &self.dp),
            Axis::Pp => self.pp.clone(),
        }
    }
}

/// A group's footprint on one dimension, with the parameters needed to cost it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveDim {
    pub dim: usize,
    pub block: Block,
    pub npus: u64,
    pub p: u64,
    pub stride: u64,
    pub link_bw: f64,
    pub link_latency: f64,
    pub algorithm: Algorithm,
}

impl EffectiveDim {
    pub fn from_part(part: &AxisPart, topo: &TopologySpec, coll: &CollectiveConfig) -> EffectiveDim {
        let d = &topo.dims[part.dim];
        EffectiveDim {
            dim: part.dim,
            block: d.block,
            npus: d.npus,
            p: part.factor,
            stride: part.stride,
            link_bw: d.link_bw,
            link_latency: d.link_latency,
            algorithm: coll.algorithms[part.dim],
        }
    }

    /// Single-dimension time including the ring hop penalty.
    pub fn time(&self, pattern: CollectivePattern, bytes: f64, chunks: u32) -> f64 {
        let h = hop_factor(self.algorithm, self.block, self.p, self.stride, self.npus);
        collective_time_1d(pattern, self.algorithm, self.p, bytes, self.link_bw / h, self.link_latency * h, chunks)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommTiming {
    pub total: f64,
    /// Busy time per spanned dimension, as (dim index, seconds).
    pub per_dim: Vec<(usize, f64)>,
}

struct Stage {
    span_idx: usize,
    pattern: CollectivePattern,
    bytes: f64,
}

fn stages(pattern: CollectivePattern, bytes: f64, span: &[EffectiveDim]) -> Vec<Stage> {
    let mut sizes = Vec::with_capacity(span.len());
    let mut m = bytes;
    for d in span {
        sizes.push(m);
        m /= d.p as f64;
    }
    let rs = |i: usize| Stage { span_idx: i, pattern: CollectivePattern::ReduceScatter, bytes: sizes[i] };
    let ag = |i: usize| Stage { span_idx: i, pattern: CollectivePattern::AllGather, bytes: sizes[i] };
    let k = span.len();
    match pattern {
        CollectivePattern::AllReduce => (0..k).map(rs).chain((0..k).rev().map(ag)).collect(),
        CollectivePattern::ReduceScatter => (0..k).map(rs).collect(),
        CollectivePattern::AllGather => (0..k).rev().map(ag).collect(),
        CollectivePattern::AllToAll => {
            (0..k).map(|i| Stage { span_idx: i, pattern: CollectivePattern::AllToAll, bytes }).collect()
        }
    }
}

/// Time of a collective whose group spans several dimensions.
pub fn multidim_collective_time(
    pattern: CollectivePattern,
    payload: f64,
    span: &[EffectiveDim],
    chunks: u32,
    mode: MultiDimMode,
) -> Result<CommTiming, SimError> {
    if span.is_empty() {
        return Err(SimError::Config("collective spans no dimensions".into()));
    }
    let chunks = chunks.max(1);
    if span.len() == 1 {
        let t = span[0].time(pattern, payload, chunks);
        return Ok(CommTiming { total: t, per_dim: vec![(span[0].dim, t)] });
    }
    let st = stages(pattern, payload, span);
    let mut busy = vec![0.0; span.len()];
    let total = match mode {
        MultiDimMode::Baseline => {
            let mut total = 0.0;
            for s in &st {
                let t = span[s.span_idx].time(s.pattern, s.bytes, chunks);
                busy[s.span_idx] += t;
                total += t;
            }
            total
        }
        MultiDimMode::BlueConnect => {
            let c = chunks as usize;
            let dur: Vec<f64> =
                st.iter().map(|s| span[s.span_idx].time(s.pattern, s.bytes / c as f64, 1)).collect();
            for (s, d) in st.iter().zip(&dur) {
                busy[s.span_idx] += d * c as f64;
            }
            pipeline_makespan(&st, &dur, c, span.len())
        }
    };
    Ok(CommTiming { total, per_dim: span.iter().map(|d| d.dim).zip(busy).collect() })
}

/// Greedy list schedule of `c` chunks through the stage sequence, with each
/// dimension serving one chunk-stage at a time.
fn pipeline_makespan(st: &[Stage], dur: &[f64], c: usize, dims: usize) -> f64 {
    let mut next = vec![0usize; c];
    let mut ready = vec![0.0f64; c];
    let mut free = vec![0.0f64; dims];
    let mut end = 0.0f64;
    loop {
        let mut best: Option<(f64, usize)> = None;
        for k in 0..c {
            if next[k] == st.len() {
                continue;
            }
            let start = ready[k].max(free[st[next[k]].span_idx]);
            if best.map_or(true, |(b, _)| start < b) {
                best = Some((start, k));
            }
        }
        let Some((start, k)) = best else { break };
        let j = next[k];
        let finish = start + dur[j];
        free[st[j].span_idx] = finish;
        ready[k] = finish;
        next[k] += 1;
        end = end.max(finish);
    }
    end
}

/// Point-to-point transfer between neighbouring pipeline stages.
pub fn send_recv_time(bytes: f64, part: &AxisPart, topo: &TopologySpec) -> f64 {
    if bytes <= 0.0 {
        return 0.0;
    }
    let d = &topo.dims[part.dim];
    let h = if d.block == Block::Ring && d.npus > 2 { ring_dist(part.stride, d.npus).max(1) as f64 } else { 1.0 };
    h * d.link_latency + bytes * h / d.link_bw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::topology::{SchedulingPolicy, TopologyDim};
    use CollectivePattern::*;

    #[test]
    fn formula_examples() {
        assert_eq!(collective_time_1d(AllReduce, Algorithm::Ring, 4, 4.0, 1.0, 0.0, 1), 6.0);
        assert_eq!(collective_time_1d(AllReduce, Algorithm::HalvingDoubling, 4, 4.0, 1.0, 0.0, 1), 6.0);
        for alg in [Algorithm::Ring, Algorithm::Direct, Algorithm::HalvingDoubling, Algorithm::DoubleBinaryTree] {
            assert_eq!(collective_time_1d(AllGather, alg, 1, 1e6, 1.0, 1.0, 4), 0.0);
        }
    }

    #[test]
    fn hop_factors() {
        assert_eq!(hop_factor(Algorithm::Ring, Block::Ring, 4, 1, 4), 1.0);
        assert_eq!(hop_factor(Algorithm::Direct, Block::Ring, 4, 1, 4), 4.0 / 3.0);
        assert_eq!(hop_factor(Algorithm::HalvingDoubling, Block::Ring, 4, 1, 4), 1.5);
        assert_eq!(hop_factor(Algorithm::HalvingDoubling, Block::Switch, 4, 1, 4), 1.0);
        assert_eq!(hop_factor(Algorithm::Ring, Block::Ring, 2, 4, 8), 4.0);
    }

    fn topo(npus: &[u64]) -> TopologySpec {
        TopologySpec {
            dims: npus
                .iter()
                .map(|&n| TopologyDim { block: Block::Switch, npus: n, link_bw: 1.0, link_latency: 0.0 })
                .collect(),
        }
    }

    #[test]
    fn innermost_first_packing() {
        let t = topo(&[4, 4, 4, 16]);
        let p = place_axes(&AxisSizes { tp: 2, sp: 8, dp: 64, pp: 1 }, &t).unwrap();
        assert_eq!(p.tp, vec![AxisPart { dim: 0, factor: 2, stride: 1 }]);
        assert_eq!(p.sp, vec![AxisPart { dim: 0, factor: 2, stride: 2 }, AxisPart { dim: 1, factor: 4, stride: 1 }]);
        assert_eq!(p.span(Axis::TpSp), vec![AxisPart { dim: 0, factor: 4, stride: 1 }, AxisPart { dim: 1, factor: 4, stride: 1 }]);
        assert!(p.pp.is_empty());
        assert!(place_axes(&AxisSizes { tp: 2, sp: 1, dp: 1, pp: 1 }, &t).is_err());
    }

    #[test]
    fn two_level_baseline() {
        let t = topo(&[4, 4]);
        let coll = CollectiveConfig {
            algorithms: vec![Algorithm::Ring; 2],
            chunks: 1,
            policy: SchedulingPolicy::Fifo,
            multidim: MultiDimMode::Baseline,
        };
        let span: Vec<_> = [AxisPart { dim: 0, factor: 4, stride: 1 }, AxisPart { dim: 1, factor: 4, stride: 1 }]
            .iter()
            .map(|p| EffectiveDim::from_part(p, &t, &coll))
            .collect();
        let m = 16.0;
        let r = multidim_collective_time(AllReduce, m, &span, 1, MultiDimMode::Baseline).unwrap();
        let rs0 = 3.0 * m / 4.0;
        let rs1 = 3.0 * (m / 4.0) / 4.0;
        assert_eq!(r.total, 2.0 * (rs0 + rs1));
        let b = multidim_collective_time(AllReduce, m, &span, 4, MultiDimMode::BlueConnect).unwrap();
        assert!(b.total < r.total);
    }
}
