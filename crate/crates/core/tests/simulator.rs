mod support;

use dse_core::sim::{
    collective_time_1d, multidim_collective_time, network_cost, roofline_time, simulate, Algorithm, AxisPart, Block,
    CollectiveConfig, ComputeSpec, CostCoefficients, EffectiveDim, MultiDimMode, SchedulingPolicy, SystemFixture,
    TopologyDim, TopologySpec,
};
use dse_core::workload::{
    build_trace, Axis, AxisSizes, CollectivePattern, ModelSpec, OpKind, ParallelizationSpec,
    Pass, Phase, Scope, Trace, TraceOp,
};
use proptest::prelude::*;
use support::collective::{oracle_hierarchical_all_reduce, oracle_time, Alg, Pat};

use CollectivePattern::*;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

#[test]
fn analytic_matches_chunk_oracle_on_grid() {
    let mut worst = 0.0f64;
    for (alg, oalg) in [
        (Algorithm::Ring, Alg::Ring),
        (Algorithm::HalvingDoubling, Alg::HalvingDoubling),
        (Algorithm::Direct, Alg::Direct),
    ] {
        for (pat, opat) in [(ReduceScatter, Pat::ReduceScatter), (AllGather, Pat::AllGather), (AllReduce, Pat::AllReduce)] {
            for p in [2u64, 4, 8, 16] {
                for bytes in [1e3, 1e6] {
                    for lat in [0.0, 1e-6] {
                        for chunks in [1u32, 2, 4] {
                            let bw = 50e9;
                            let a = collective_time_1d(pat, alg, p, bytes, bw, lat, chunks);
                            let o = oracle_time(opat, oalg, p as usize, bytes, bw, lat, chunks as usize);
                            worst = worst.max(rel(a, o));
                        }
                    }
                }
            }
        }
    }
    assert!(worst < 1e-9, "worst relative error {worst:e}");
}

#[test]
fn formula_table_examples() {
    assert_eq!(collective_time_1d(AllReduce, Algorithm::Ring, 4, 4.0, 1.0, 0.0, 1), 6.0);
    assert_eq!(collective_time_1d(AllReduce, Algorithm::HalvingDoubling, 4, 4.0, 1.0, 0.0, 1), 6.0);
    assert_eq!(oracle_time(Pat::AllReduce, Alg::Ring, 4, 4.0, 1.0, 0.0, 1), 6.0);
    assert_eq!(oracle_time(Pat::AllReduce, Alg::HalvingDoubling, 4, 4.0, 1.0, 0.0, 1), 6.0);
    for alg in [Algorithm::Ring, Algorithm::Direct, Algorithm::HalvingDoubling, Algorithm::DoubleBinaryTree] {
        assert_eq!(collective_time_1d(AllReduce, alg, 1, 1e9, 1.0, 1e-6, 2), 0.0);
    }
}

fn switch_dims(npus: &[u64], bw: f64, lat: f64) -> TopologySpec {
    TopologySpec {
        dims: npus.iter().map(|&n| TopologyDim { block: Block::Switch, npus: n, link_bw: bw, link_latency: lat }).collect(),
    }
}

fn coll(dims: usize, alg: Algorithm, chunks: u32, policy: SchedulingPolicy, multidim: MultiDimMode) -> CollectiveConfig {
    CollectiveConfig { algorithms: vec![alg; dims], chunks, policy, multidim }
}

fn span(topo: &TopologySpec, cfg: &CollectiveConfig) -> Vec<EffectiveDim> {
    let mut stride = 1;
    topo.dims
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let part = AxisPart { dim: i, factor: d.npus, stride };
            stride = 1;
            EffectiveDim::from_part(&part, topo, cfg)
        })
        .collect()
}

#[test]
fn single_dim_span_is_the_formula() {
    let t = switch_dims(&[8], 100e9, 1e-6);
    for mode in [MultiDimMode::Baseline, MultiDimMode::BlueConnect] {
        let cfg = coll(1, Algorithm::Ring, 4, SchedulingPolicy::Fifo, mode);
        let r = multidim_collective_time(AllReduce, 1e6, &span(&t, &cfg), 4, mode).unwrap();
        assert_eq!(r.total, collective_time_1d(AllReduce, Algorithm::Ring, 8, 1e6, 100e9, 1e-6, 4));
    }
}

#[test]
fn two_level_baseline_matches_hierarchical_oracle() {
    for (lat, chunks) in [(0.0, 1u32), (0.0, 4), (1e-6, 2)] {
        let t = switch_dims(&[4, 4], 50e9, lat);
        let cfg = coll(2, Algorithm::Ring, chunks, SchedulingPolicy::Fifo, MultiDimMode::Baseline);
        let r = multidim_collective_time(AllReduce, 1e6, &span(&t, &cfg), chunks, MultiDimMode::Baseline).unwrap();
        let o = oracle_hierarchical_all_reduce(&[(4, 50e9, lat), (4, 50e9, lat)], Alg::Ring, 1e6, chunks as usize);
        assert!(rel(r.total, o) < 1e-9, "{} vs {o}", r.total);
    }
}

#[test]
fn blueconnect_never_slower_at_zero_latency() {
    for dims in [vec![4u64, 4], vec![8, 4, 2], vec![2, 2, 2, 2]] {
        for alg in [Algorithm::Ring, Algorithm::HalvingDoubling, Algorithm::Direct, Algorithm::DoubleBinaryTree] {
            for chunks in [1u32, 2, 4, 8] {
                let t = switch_dims(&dims, 100e9, 0.0);
                let base = coll(dims.len(), alg, chunks, SchedulingPolicy::Fifo, MultiDimMode::Baseline);
                let sp = span(&t, &base);
                let b = multidim_collective_time(AllReduce, 1e6, &sp, chunks, MultiDimMode::Baseline).unwrap();
                let c = multidim_collective_time(AllReduce, 1e6, &sp, chunks, MultiDimMode::BlueConnect).unwrap();
                assert!(c.total <= b.total * (1.0 + 1e-12), "{dims:?} {alg:?} {chunks}: {} > {}", c.total, b.total);
            }
        }
    }
}

fn any_alg() -> impl Strategy<Value = Algorithm> {
    prop_oneof![
        Just(Algorithm::Ring),
        Just(Algorithm::Direct),
        Just(Algorithm::HalvingDoubling),
        Just(Algorithm::DoubleBinaryTree)
    ]
}

fn any_pattern() -> impl Strategy<Value = CollectivePattern> {
    prop_oneof![Just(AllReduce), Just(AllGather), Just(ReduceScatter), Just(AllToAll)]
}

proptest! {
    #[test]
    fn doubling_bandwidth_halves_time(alg in any_alg(), pat in any_pattern(), k in 1u32..6, bytes in 1.0f64..1e9, bw in 1e6f64..1e12, chunks in 1u32..16) {
        let p = 1u64 << k;
        let t1 = collective_time_1d(pat, alg, p, bytes, bw, 0.0, chunks);
        let t2 = collective_time_1d(pat, alg, p, bytes, 2.0 * bw, 0.0, chunks);
        prop_assert!(rel(t1, 2.0 * t2) < 1e-12);
    }

    #[test]
    fn all_reduce_is_rs_plus_ag(k in 1u32..6, bytes in 1.0f64..1e9, bw in 1e6f64..1e12, lat in 0.0f64..1e-5, chunks in 1u32..16) {
        let p = 1u64 << k;
        for alg in [Algorithm::Ring, Algorithm::HalvingDoubling] {
            let ar = collective_time_1d(AllReduce, alg, p, bytes, bw, lat, chunks);
            let rs = collective_time_1d(ReduceScatter, alg, p, bytes, bw, lat, chunks);
            let ag = collective_time_1d(AllGather, alg, p, bytes, bw, lat, chunks);
            prop_assert!(rel(ar, rs + ag) < 1e-12);
        }
    }

    #[test]
    fn monotone_in_bandwidth_and_payload(alg in any_alg(), pat in any_pattern(), k in 1u32..6, bytes in 1.0f64..1e9, bw in 1e6f64..1e12, lat in 0.0f64..1e-5, chunks in 1u32..16, f in 1.0f64..4.0) {
        let p = 1u64 << k;
        let t = collective_time_1d(pat, alg, p, bytes, bw, lat, chunks);
        prop_assert!(collective_time_1d(pat, alg, p, bytes, bw * f, lat, chunks) <= t);
        prop_assert!(collective_time_1d(pat, alg, p, bytes * f, bw, lat, chunks) >= t);
    }
}

fn unit_compute() -> ComputeSpec {
    // roofline time equals the flop count
    ComputeSpec { peak_perf: 1.0, local_mem_bw: 1e30, memory_capacity: 1e30 }
}

fn op(id: usize, deps: Vec<usize>, kind: OpKind) -> TraceOp {
    TraceOp { id, name: format!("op{id}"), stage: 0, layer: None, pass: Pass::Forward, scope: Scope::PerMicrobatch, deps, kind }
}

fn compute(flops: f64) -> OpKind {
    OpKind::Compute { flops, bytes: 0.0 }
}

fn all_reduce(bytes: f64) -> OpKind {
    OpKind::Collective { pattern: AllReduce, bytes, axis: Axis::Tp }
}

fn hand_trace(ops: Vec<TraceOp>) -> Trace {
    let axes = AxisSizes { tp: 4, sp: 1, dp: 1, pp: 1 };
    Trace {
        ops,
        groups: dse_core::workload::trace::comm_groups(&axes),
        axes,
        stages: 1,
        microbatches: 1,
        simulated_layers: 1,
        memory_bytes: 0.0,
    }
}

fn ring4() -> TopologySpec {
    TopologySpec { dims: vec![TopologyDim { block: Block::Switch, npus: 4, link_bw: 1.0, link_latency: 0.0 }] }
}

#[test]
fn independent_ops_overlap_and_chains_add() {
    let cfg = coll(1, Algorithm::Ring, 1, SchedulingPolicy::Fifo, MultiDimMode::Baseline);
    // a 4-byte ring all-reduce over 4 NPUs at 1 B/s takes 6 s
    let free = hand_trace(vec![op(0, vec![], compute(10.0)), op(1, vec![], all_reduce(4.0))]);
    assert_eq!(simulate(&free, &ring4(), &unit_compute(), &cfg).unwrap().total_latency, 10.0);
    let chained = hand_trace(vec![op(0, vec![], compute(10.0)), op(1, vec![0], all_reduce(4.0))]);
    assert_eq!(simulate(&chained, &ring4(), &unit_compute(), &cfg).unwrap().total_latency, 16.0);
}

/// A issues at 0, B at 1.2 s, C at 3 s; all contend for one dimension.
fn contention(policy: SchedulingPolicy) -> Vec<(f64, f64)> {
    let t = hand_trace(vec![
        op(0, vec![], all_reduce(4.0)),
        op(1, vec![], compute(1.2)),
        op(2, vec![1], all_reduce(4.0)),
        op(3, vec![1], compute(1.8)),
        op(4, vec![3], all_reduce(4.0)),
    ]);
    let cfg = coll(1, Algorithm::Ring, 1, policy, MultiDimMode::Baseline);
    let r = simulate(&t, &ring4(), &unit_compute(), &cfg).unwrap();
    [0, 2, 4].iter().map(|&i| (r.timeline[i].start, r.timeline[i].finish)).collect()
}

#[test]
fn three_collective_scheduling_scenario() {
    let fifo = contention(SchedulingPolicy::Fifo);
    assert_eq!(fifo, vec![(0.0, 6.0), (6.0, 12.0), (12.0, 18.0)]);
    let lifo = contention(SchedulingPolicy::Lifo);
    assert_eq!(lifo, vec![(0.0, 6.0), (12.0, 18.0), (6.0, 12.0)]);

    // two collectives only: the second ends at twice the single time either way
    for policy in [SchedulingPolicy::Fifo, SchedulingPolicy::Lifo] {
        let t = hand_trace(vec![op(0, vec![], all_reduce(4.0)), op(1, vec![], all_reduce(4.0))]);
        let cfg = coll(1, Algorithm::Ring, 1, policy, MultiDimMode::Baseline);
        assert_eq!(simulate(&t, &ring4(), &unit_compute(), &cfg).unwrap().total_latency, 12.0);
    }
}

fn system2_topology(par: &ParallelizationSpec) -> (TopologySpec, CollectiveConfig, ComputeSpec) {
    let sys = SystemFixture::resolve("system2").unwrap();
    let lat = sys.link_latency_ns * 1e-9;
    let blocks = [Block::Ring, Block::FullyConnected, Block::Ring, Block::Switch];
    let npus = [4u64, 8, 4, 8];
    let bw = [375.0, 175.0, 150.0, 100.0];
    let topo = TopologySpec {
        dims: (0..4).map(|i| TopologyDim { block: blocks[i], npus: npus[i], link_bw: bw[i] * 1e9, link_latency: lat }).collect(),
    };
    assert_eq!(topo.npu_count(), par.npus());
    let cfg = CollectiveConfig {
        algorithms: vec![Algorithm::Ring, Algorithm::Direct, Algorithm::Ring, Algorithm::HalvingDoubling],
        chunks: 4,
        policy: SchedulingPolicy::Lifo,
        multidim: MultiDimMode::Baseline,
    };
    (topo, cfg, sys.compute.to_spec())
}

fn zero_payloads(t: &Trace) -> Trace {
    let mut z = t.clone();
    for op in &mut z.ops {
        match &mut op.kind {
            OpKind::Collective { bytes, .. } | OpKind::SendRecv { bytes, .. } => *bytes = 0.0,
            OpKind::Compute { .. } => {}
        }
    }
    z
}

/// Longest compute-only path through the dependency DAG, with each stage's
/// compute ops serialised in program order.
fn compute_critical_path(t: &Trace, c: &ComputeSpec) -> f64 {
    let mut finish = vec![0.0f64; t.ops.len()];
    let mut stage_free = vec![0.0f64; t.stages];
    for id in t.topological_order().unwrap() {
        let op = &t.ops[id];
        let ready = op.deps.iter().map(|&d| finish[d]).fold(0.0, f64::max);
        finish[id] = match op.kind {
            OpKind::Compute { flops, bytes } => {
                let s = ready.max(stage_free[op.stage]);
                let f = s + roofline_time(flops, bytes, c).unwrap();
                stage_free[op.stage] = f;
                f
            }
            _ => ready,
        };
    }
    finish.iter().copied().fold(0.0, f64::max)
}

#[test]
fn zero_payload_latency_is_compute_critical_path() {
    let model = ModelSpec::builtin("gpt3-175b").unwrap();
    for (dp, pp, sp) in [(64, 2, 1), (32, 1, 4), (128, 1, 1), (16, 2, 2)] {
        let par = ParallelizationSpec::derive(dp, sp, pp, 1024, false, 1024).unwrap();
        let trace = zero_payloads(&build_trace(&model, &par, Phase::Training).unwrap());
        let (topo, cfg, c) = system2_topology(&par);
        let r = simulate(&trace, &topo, &c, &cfg).unwrap();
        let cp = compute_critical_path(&trace, &c);
        assert!(rel(r.microbatch_latency, cp) < 1e-12, "{dp},{pp},{sp}: {} vs {cp}", r.microbatch_latency);
    }
}

#[test]
fn simulate_is_deterministic() {
    let model = ModelSpec::builtin("gpt3-175b").unwrap();
    let par = ParallelizationSpec::derive(64, 1, 2, 1024, true, 1024).unwrap();
    let trace = build_trace(&model, &par, Phase::Training).unwrap();
    let (topo, cfg, c) = system2_topology(&par);
    let a = simulate(&trace, &topo, &c, &cfg).unwrap();
    let b = simulate(&trace, &topo, &c, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total_latency.to_bits(), b.total_latency.to_bits());
    assert!(a.total_latency >= a.compute_time.max(a.exposed_comm_time));
}

#[test]
fn roofline_examples() {
    let c = ComputeSpec { peak_perf: 10.0, local_mem_bw: 1.0, memory_capacity: 1.0 };
    assert_eq!(roofline_time(100.0, 10.0, &c).unwrap(), 10.0);
    assert_eq!(roofline_time(100.0, 0.0, &c).unwrap(), 10.0);

    // a GPT3-175B QKV GEMM on System 2: m = 2048 tokens, k = 12288, n = 3 * 12288 / 8
    let sys = SystemFixture::resolve("system2").unwrap().compute.to_spec();
    let (m, k, n): (f64, f64, f64) = (2048.0, 12288.0, 3.0 * 12288.0 / 8.0);
    let flops = 2.0 * m * k * n;
    let bytes = (m * k + k * n + m * n) * 2.0;
    let expected = (flops / 10e12).max(bytes / 50e9);
    assert_eq!(roofline_time(flops, bytes, &sys).unwrap(), expected);
    // 0.232 TFLOP at 10 TFLOPS vs 0.182 GB at 50 GB/s: compute bound
    assert!((expected - 0.0231928233984).abs() < 1e-15);
}

#[test]
fn network_cost_examples() {
    let one = |block, npus, gbps: f64| TopologySpec {
        dims: vec![TopologyDim { block, npus, link_bw: gbps * 1e9, link_latency: 0.0 }],
    };
    let unit = CostCoefficients { ring: 1.0, switch: 1.0, fully_connected: 1.0, switch_port: 0.0 };
    assert_eq!(network_cost(&one(Block::Ring, 4, 50.0), &unit), 200.0);
    assert_eq!(network_cost(&one(Block::FullyConnected, 4, 50.0), &unit), 300.0);
    for n in [4u64, 8, 16] {
        let d = CostCoefficients::default();
        assert!(network_cost(&one(Block::FullyConnected, n, 100.0), &d) > network_cost(&one(Block::Ring, n, 100.0), &d));
    }
}
