//! Chunk-level discrete-event oracle for one-dimension collectives.
//!
//! Every rank owns one injection port. A transfer occupies its sender's
//! port for `setup + bytes / bw` and may start once the port is free and
//! every transfer it depends on has finished. Tasks are issued in a fixed
//! program order, so a single pass computes the schedule.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alg {
    Ring,
    HalvingDoubling,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pat {
    ReduceScatter,
    AllGather,
    AllReduce,
}

struct Task {
    rank: usize,
    duration: f64,
    deps: Vec<usize>,
}

fn run(tasks: &[Task], ranks: usize, release: f64) -> f64 {
    let mut port = vec![release; ranks];
    let mut finish = vec![0.0f64; tasks.len()];
    let mut end = release;
    for (i, t) in tasks.iter().enumerate() {
        let ready = t.deps.iter().map(|&d| finish[d]).fold(port[t.rank], f64::max);
        finish[i] = ready + t.duration;
        port[t.rank] = finish[i];
        end = end.max(finish[i]);
    }
    end
}

/// One reduce-scatter or all-gather phase starting at `release`.
fn phase(alg: Alg, p: usize, bytes: f64, bw: f64, lat: f64, chunks: usize, release: f64) -> f64 {
    let c = chunks as f64;
    let mut tasks: Vec<Task> = Vec::new();
    match alg {
        Alg::Ring => {
            // step s, chunk k: rank r forwards one block of the chunk to r+1
            let block = bytes / c / p as f64;
            let id = |s: usize, k: usize, r: usize| (s * chunks + k) * p + r;
            for s in 0..p - 1 {
                for k in 0..chunks {
                    for r in 0..p {
                        let deps = if s == 0 { vec![] } else { vec![id(s - 1, k, (r + p - 1) % p)] };
                        tasks.push(Task { rank: r, duration: lat + block / bw, deps });
                    }
                }
            }
        }
        Alg::HalvingDoubling => {
            // step s exchanges half of the remaining chunk with partner r ^ 2^s
            let steps = p.trailing_zeros() as usize;
            let id = |s: usize, k: usize, r: usize| (s * chunks + k) * p + r;
            for s in 0..steps {
                let size = bytes / c / (1usize << (s + 1)) as f64;
                for k in 0..chunks {
                    for r in 0..p {
                        let deps = if s == 0 { vec![] } else { vec![id(s - 1, k, r ^ (1 << (s - 1))), id(s - 1, k, r)] };
                        tasks.push(Task { rank: r, duration: lat + size / bw, deps });
                    }
                }
            }
        }
        Alg::Direct => {
            // per chunk one setup, then p-1 blocks to every peer back to back
            let block = bytes / c / p as f64;
            for _ in 0..chunks {
                for r in 0..p {
                    for j in 0..p - 1 {
                        let setup = if j == 0 { lat } else { 0.0 };
                        tasks.push(Task { rank: r, duration: setup + block / bw, deps: vec![] });
                    }
                }
            }
        }
    }
    run(&tasks, p, release)
}

/// Completion time of a collective on `p` ranks. All-reduce runs the
/// all-gather after every rank finished its reduce-scatter.
pub fn oracle_time(pat: Pat, alg: Alg, p: usize, bytes: f64, bw: f64, lat: f64, chunks: usize) -> f64 {
    if p <= 1 || bytes <= 0.0 {
        return 0.0;
    }
    match pat {
        Pat::ReduceScatter | Pat::AllGather => phase(alg, p, bytes, bw, lat, chunks, 0.0),
        Pat::AllReduce => {
            let rs = phase(alg, p, bytes, bw, lat, chunks, 0.0);
            phase(alg, p, bytes, bw, lat, chunks, rs)
        }
    }
}

/// Baseline hierarchy on several dims: reduce-scatter inner to outer, then
/// all-gather outer to inner, payload shrinking by each dim's size.
pub fn oracle_hierarchical_all_reduce(dims: &[(usize, f64, f64)], alg: Alg, bytes: f64, chunks: usize) -> f64 {
    let mut sizes = Vec::new();
    let mut m = bytes;
    for &(p, _, _) in dims {
        sizes.push(m);
        m /= p as f64;
    }
    let mut t = 0.0;
    for (i, &(p, bw, lat)) in dims.iter().enumerate() {
        t += oracle_time(Pat::ReduceScatter, alg, p, sizes[i], bw, lat, chunks);
    }
    for (i, &(p, bw, lat)) in dims.iter().enumerate().rev() {
        t += oracle_time(Pat::AllGather, alg, p, sizes[i], bw, lat, chunks);
    }
    t
}
