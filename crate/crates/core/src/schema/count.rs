//! Counting, enumerating and sampling the points of a schema.
//!
//! Slots tied together by product constraints form components. Each component
//! is counted with a dynamic program over partial products (values are
//! positive integers, so any partial product above the bound can be pruned);
//! slots outside every constraint multiply in independently.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{decode_action, ActionVector, ConstraintKind, DesignPoint, Schema, SchemaError};

/// Rejection-sampling attempts per constrained component before giving up.
pub const MAX_SAMPLE_RETRIES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cardinality {
    Exact(BigUint),
    /// The count exceeds the requested cap.
    TooLarge,
}

impl Cardinality {
    pub fn exact(&self) -> Option<&BigUint> {
        match self {
            Cardinality::Exact(n) => Some(n),
            Cardinality::TooLarge => None,
        }
    }
}

struct ResolvedConstraint {
    kind: ConstraintKind,
    slots: Vec<usize>,
    bound: i128,
}

struct Component {
    slots: Vec<usize>,
    constraints: Vec<usize>,
}

fn resolve(schema: &Schema, keep: impl Fn(ConstraintKind) -> bool) -> Vec<ResolvedConstraint> {
    schema
        .constraints
        .iter()
        .filter(|c| keep(c.kind))
        .map(|c| ResolvedConstraint {
            kind: c.kind,
            slots: schema.constraint_slots(c),
            bound: schema.bound_value(c.bound),
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Group constrained slots into connected components; returns the components
/// and the list of unconstrained slots.
fn components(slot_count: usize, constraints: &[ResolvedConstraint]) -> (Vec<Component>, Vec<usize>) {
    let mut parent: Vec<usize> = (0..slot_count).collect();
    let mut constrained = vec![false; slot_count];
    for c in constraints {
        for &s in &c.slots {
            constrained[s] = true;
        }
        for w in c.slots.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut by_root: Vec<(usize, Component)> = Vec::new();
    for s in 0..slot_count {
        if !constrained[s] {
            continue;
        }
        let root = find(&mut parent, s);
        match by_root.iter_mut().find(|(r, _)| *r == root) {
            Some((_, comp)) => comp.slots.push(s),
            None => by_root.push((root, Component { slots: vec![s], constraints: Vec::new() })),
        }
    }
    for (ci, c) in constraints.iter().enumerate() {
        let root = find(&mut parent, c.slots[0]);
        if let Some((_, comp)) = by_root.iter_mut().find(|(r, _)| *r == root) {
            comp.constraints.push(ci);
        }
    }
    let free = (0..slot_count).filter(|&s| !constrained[s]).collect();
    (by_root.into_iter().map(|(_, c)| c).collect(), free)
}

/// Integer value table per slot (only meaningful for constrained slots).
fn slot_ints(schema: &Schema) -> Vec<Vec<i128>> {
    schema
        .slots()
        .iter()
        .map(|s| {
            schema.knobs[s.knob].values.iter().map(|v| v.as_i64().map(|i| i as i128).unwrap_or(0)).collect()
        })
        .collect()
}

fn slot_sizes(schema: &Schema) -> Vec<usize> {
    schema.slots().iter().map(|s| schema.knobs[s.knob].values.len()).collect()
}

/// Exponent of each slot within each component constraint.
fn multiplicities(comp: &Component, constraints: &[ResolvedConstraint]) -> Vec<Vec<u32>> {
    comp.slots
        .iter()
        .map(|&s| {
            comp.constraints
                .iter()
                .map(|&ci| constraints[ci].slots.iter().filter(|&&x| x == s).count() as u32)
                .collect()
        })
        .collect()
}

fn count_component(comp: &Component, constraints: &[ResolvedConstraint], ints: &[Vec<i128>]) -> BigUint {
    let mult = multiplicities(comp, constraints);
    let bounds: Vec<i128> = comp.constraints.iter().map(|&ci| constraints[ci].bound).collect();
    let mut states: HashMap<Vec<i128>, BigUint> = HashMap::new();
    states.insert(vec![1; bounds.len()], BigUint::one());
    for (pos, &slot) in comp.slots.iter().enumerate() {
        let mut next: HashMap<Vec<i128>, BigUint> = HashMap::new();
        for (state, count) in &states {
            'values: for &v in &ints[slot] {
                let mut ns = state.clone();
                for (k, e) in mult[pos].iter().enumerate() {
                    for _ in 0..*e {
                        ns[k] = ns[k].saturating_mul(v);
                    }
                    if ns[k] > bounds[k] {
                        continue 'values;
                    }
                }
                *next.entry(ns).or_insert_with(BigUint::zero) += count;
            }
        }
        states = next;
    }
    states
        .iter()
        .filter(|(state, _)| {
            comp.constraints.iter().zip(state.iter()).all(|(&ci, &p)| match constraints[ci].kind {
                ConstraintKind::ProductLe => p <= constraints[ci].bound,
                ConstraintKind::ProductEq => p == constraints[ci].bound,
            })
        })
        .fold(BigUint::zero(), |acc, (_, c)| acc + c)
}

fn count_with(schema: &Schema, constraints: &[ResolvedConstraint]) -> BigUint {
    let (comps, free) = components(schema.slot_count(), constraints);
    let ints = slot_ints(schema);
    let sizes = slot_sizes(schema);
    let mut total = BigUint::one();
    for s in free {
        total *= BigUint::from(sizes[s]);
    }
    for comp in &comps {
        total *= count_component(comp, constraints, &ints);
    }
    total
}

/// Point count as tabulated for the design space overview: each `product-le`
/// group is counted jointly (the parallelization budget), every other knob
/// contributes the unconstrained product of its per-dimension list sizes.
pub fn raw_cardinality(schema: &Schema) -> BigUint {
    let le = resolve(schema, |k| k == ConstraintKind::ProductLe);
    count_with(schema, &le)
}

/// Exact number of points satisfying every constraint, or `TooLarge` when
/// that number exceeds `cap`.
pub fn constrained_cardinality(schema: &Schema, cap: u64) -> Cardinality {
    let all = resolve(schema, |_| true);
    let n = count_with(schema, &all);
    if n > BigUint::from(cap) {
        Cardinality::TooLarge
    } else {
        Cardinality::Exact(n)
    }
}

/// All constraint-satisfying action vectors in lexicographic order.
pub fn enumerate_valid(schema: &Schema, cap: u64) -> Result<Vec<ActionVector>, Cardinality> {
    let count = match constrained_cardinality(schema, cap) {
        Cardinality::Exact(n) => n.to_usize().unwrap_or(usize::MAX),
        too_large => return Err(too_large),
    };
    let constraints = resolve(schema, |_| true);
    let ints = slot_ints(schema);
    let sizes = slot_sizes(schema);
    let n_slots = sizes.len();
    // For each slot: (constraint index, exponent) pairs, and the last slot of each constraint.
    let mut touches: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n_slots];
    let mut last_slot = vec![0usize; constraints.len()];
    for (ci, c) in constraints.iter().enumerate() {
        for &s in &c.slots {
            match touches[s].iter_mut().find(|(k, _)| *k == ci) {
                Some(t) => t.1 += 1,
                None => touches[s].push((ci, 1)),
            }
            last_slot[ci] = last_slot[ci].max(s);
        }
    }

    let mut out = Vec::with_capacity(count);
    let mut current = vec![0usize; n_slots];
    let mut products = vec![vec![1i128; constraints.len()]; n_slots + 1];
    fn dfs(
        slot: usize,
        current: &mut Vec<usize>,
        products: &mut Vec<Vec<i128>>,
        ctx: &(&[Vec<(usize, u32)>], &[usize], &[ResolvedConstraint], &[Vec<i128>], &[usize]),
        out: &mut Vec<ActionVector>,
    ) {
        let (touches, last_slot, constraints, ints, sizes) = *ctx;
        if slot == sizes.len() {
            out.push(ActionVector(current.clone()));
            return;
        }
        'values: for idx in 0..sizes[slot] {
            let mut next = products[slot].clone();
            for &(ci, e) in &touches[slot] {
                for _ in 0..e {
                    next[ci] = next[ci].saturating_mul(ints[slot][idx]);
                }
                let c = &constraints[ci];
                if next[ci] > c.bound {
                    continue 'values;
                }
                if last_slot[ci] == slot && c.kind == ConstraintKind::ProductEq && next[ci] != c.bound {
                    continue 'values;
                }
            }
            products[slot + 1] = next;
            current[slot] = idx;
            dfs(slot + 1, current, products, ctx, out);
        }
    }
    let ctx = (&touches[..], &last_slot[..], &constraints[..], &ints[..], &sizes[..]);
    dfs(0, &mut current, &mut products, &ctx, &mut out);
    Ok(out)
}

/// Draw a constraint-satisfying action: unconstrained slots uniformly, each
/// constrained component by rejection sampling.
pub fn sample_action<R: Rng + ?Sized>(schema: &Schema, rng: &mut R) -> Result<ActionVector, SchemaError> {
    let constraints = resolve(schema, |_| true);
    let (comps, _) = components(schema.slot_count(), &constraints);
    let ints = slot_ints(schema);
    let sizes = slot_sizes(schema);
    let mut action: Vec<usize> = sizes.iter().map(|&n| rng.gen_range(0..n)).collect();
    for comp in &comps {
        let mut attempts = 0;
        loop {
            let ok = comp.constraints.iter().all(|&ci| {
                let c = &constraints[ci];
                let p = c.slots.iter().fold(1i128, |acc, &s| acc.saturating_mul(ints[s][action[s]]));
                match c.kind {
                    ConstraintKind::ProductLe => p <= c.bound,
                    ConstraintKind::ProductEq => p == c.bound,
                }
            });
            if ok {
                break;
            }
            attempts += 1;
            if attempts >= MAX_SAMPLE_RETRIES {
                return Err(SchemaError::RetriesExhausted(MAX_SAMPLE_RETRIES));
            }
            for &s in &comp.slots {
                action[s] = rng.gen_range(0..sizes[s]);
            }
        }
    }
    Ok(ActionVector(action))
}

/// Deterministic constraint-satisfying sample for a seed.
pub fn sample_uniform(schema: &Schema, seed: u64) -> Result<DesignPoint, SchemaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let action = sample_action(schema, &mut rng)?;
    decode_action(schema, &action)
}

#[cfg(test)]
mod tests {
    use super::super::check_constraints;
    use super::*;

    fn table1() -> Schema {
        Schema::parse(include_str!("../../fixtures/table1.json")).unwrap()
    }

    fn pow2_triples_brute_force(n: u32) -> u64 {
        let limit = 1u64 << n;
        let vals: Vec<u64> = (0..=n).map(|e| 1u64 << e).collect();
        let mut count = 0;
        for a in &vals {
            for b in &vals {
                for c in &vals {
                    if a * b * c <= limit {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    fn triple_schema(n: u32) -> Schema {
        let vals: Vec<String> = (0..=n).map(|e| (1u64 << e).to_string()).collect();
        let list = vals.join(", ");
        Schema::parse(&format!(
            r#"{{"npu_count": {}, "knobs": [
                {{"name": "dp", "stack": "workload", "kind": "scalar-grid", "values": [{list}]}},
                {{"name": "pp", "stack": "workload", "kind": "scalar-grid", "values": [{list}]}},
                {{"name": "sp", "stack": "workload", "kind": "scalar-grid", "values": [{list}]}}
            ], "constraints": [{{"kind": "product-le", "operands": ["dp", "sp", "pp"], "bound": "npu_count"}}]}}"#,
            1u64 << n
        ))
        .unwrap()
    }

    #[test]
    fn table1_raw_count_matches_tabulated_arithmetic() {
        let expected = BigUint::from(286u64 * 2 * 2 * 256 * 32 * 2 * 81 * 81 * 625);
        assert_eq!(raw_cardinality(&table1()), expected);
        assert_eq!(expected, BigUint::from(76_859_228_160_000u64));
    }

    #[test]
    fn parallelization_triples_follow_binomial() {
        for n in 0..=12u32 {
            let brute = pow2_triples_brute_force(n);
            let binom = (n as u64 + 3) * (n as u64 + 2) * (n as u64 + 1) / 6;
            assert_eq!(brute, binom, "n={n}");
            assert_eq!(raw_cardinality(&triple_schema(n)), BigUint::from(binom));
        }
        assert_eq!(pow2_triples_brute_force(10), 286);
    }

    #[test]
    fn npus_per_dim_equality_count() {
        let s = Schema::parse(
            r#"{"npu_count": 1024, "knobs": [
                {"name": "npus_per_dim", "stack": "network", "kind": "multidim-grid", "dims": 4, "values": [4, 8, 16]}
            ], "constraints": [{"kind": "product-eq", "operands": ["npus_per_dim"], "bound": "npu_count"}]}"#,
        )
        .unwrap();
        // Brute force over all 81 assignments.
        let mut brute = 0;
        for a in [4, 8, 16] {
            for b in [4, 8, 16] {
                for c in [4, 8, 16] {
                    for d in [4, 8, 16] {
                        if a * b * c * d == 1024 {
                            brute += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(brute, 10);
        assert_eq!(constrained_cardinality(&s, 1_000), Cardinality::Exact(BigUint::from(10u32)));
        assert_eq!(enumerate_valid(&s, 1_000).unwrap().len(), 10);
        assert_eq!(raw_cardinality(&s), BigUint::from(81u32));
    }

    #[test]
    fn unconstrained_equals_raw_and_cap_marker() {
        let s = Schema::parse(
            r#"{"npu_count": 8, "knobs": [{"name": "p", "stack": "collective", "kind": "scalar-categorical", "values": ["LIFO", "FIFO"]}]}"#,
        )
        .unwrap();
        assert_eq!(raw_cardinality(&s), BigUint::from(2u32));
        assert_eq!(constrained_cardinality(&s, 100), Cardinality::Exact(raw_cardinality(&s)));
        assert_eq!(constrained_cardinality(&table1(), 1_000_000), Cardinality::TooLarge);
    }

    #[test]
    fn enumeration_is_lexicographic_and_valid() {
        let s = triple_schema(4);
        let points = enumerate_valid(&s, 10_000).unwrap();
        assert_eq!(points.len(), 35);
        assert!(points.windows(2).all(|w| w[0] < w[1]));
        for a in &points {
            let p = decode_action(&s, a).unwrap();
            assert!(check_constraints(&s, &p).unwrap().valid);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let s = Schema::parse(include_str!("../../fixtures/table4.json")).unwrap();
        let a = sample_uniform(&s, 42).unwrap();
        let b = sample_uniform(&s, 42).unwrap();
        assert_eq!(a, b);
        for seed in 0..200 {
            let p = sample_uniform(&s, seed).unwrap();
            assert!(check_constraints(&s, &p).unwrap().valid);
        }
    }

    #[test]
    fn single_valid_point_is_always_sampled() {
        let s = Schema::parse(
            r#"{"npu_count": 16, "knobs": [
                {"name": "n", "stack": "network", "kind": "multidim-grid", "dims": 2, "values": [2, 4, 8]}
            ], "constraints": [{"kind": "product-eq", "operands": ["n[0]"], "bound": 4},
                               {"kind": "product-eq", "operands": ["n"], "bound": "npu_count"}]}"#,
        )
        .unwrap();
        assert_eq!(constrained_cardinality(&s, 100), Cardinality::Exact(BigUint::one()));
        for seed in 0..10 {
            let p = sample_uniform(&s, seed).unwrap();
            assert_eq!(p.get("n").unwrap(), &[4.into(), 4.into()]);
        }
    }

    #[test]
    fn impossible_equality_exhausts_retries() {
        let s = Schema::parse(
            r#"{"npu_count": 1024, "knobs": [
                {"name": "n", "stack": "network", "kind": "multidim-grid", "dims": 2, "values": [4, 8]}
            ], "constraints": [{"kind": "product-eq", "operands": ["n"], "bound": "npu_count"}]}"#,
        )
        .unwrap();
        assert_eq!(sample_uniform(&s, 1), Err(SchemaError::RetriesExhausted(MAX_SAMPLE_RETRIES)));
    }
}
