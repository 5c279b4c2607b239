use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::schema::{ConstraintKind, Schema, Value};

/// How the values of a slot relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    /// Ordered numeric grid; neighbouring indices are neighbouring values.
    IntegerGrid,
    /// Unordered labels.
    Categorical,
    /// Two-valued switch.
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub count: usize,
    pub kind: SlotKind,
}

impl Slot {
    /// Whether stepping to an adjacent index is a meaningful local move.
    pub fn ordered(&self) -> bool {
        self.kind == SlotKind::IntegerGrid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    ProductLe,
    ProductEq,
}

/// A product constraint over slot values, expressed with integer lookup
/// tables so agents never need to know what the slots mean.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub relation: Relation,
    /// Slots multiplied together, with repetition.
    pub slots: Vec<usize>,
    /// Integer value of each index, parallel to `slots`.
    pub tables: Vec<Vec<i128>>,
    pub bound: i128,
}

impl ConstraintSpec {
    pub fn holds(&self, action: &[usize]) -> bool {
        let mut product: i128 = 1;
        for (slot, table) in self.slots.iter().zip(&self.tables) {
            match action.get(*slot).and_then(|&i| table.get(i)) {
                Some(&v) => product = product.saturating_mul(v),
                None => return false,
            }
        }
        match self.relation {
            Relation::ProductLe => product <= self.bound,
            Relation::ProductEq => product == self.bound,
        }
    }
}

/// Slots tied together by constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub slots: Vec<usize>,
    pub constraints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpaceSpec {
    pub slots: Vec<Slot>,
    pub constraints: Vec<ConstraintSpec>,
    pub components: Vec<Component>,
}

const COMPONENT_RETRIES: usize = 100_000;

fn slot_kind(values: &[Value], grid: bool) -> SlotKind {
    let is_bool = values.len() == 2
        && values.iter().all(|v| v.as_i64().is_some())
        && values.iter().any(|v| v.as_i64() == Some(0))
        && values.iter().any(|v| v.as_i64() == Some(1));
    if is_bool {
        SlotKind::Boolean
    } else if grid && values.iter().all(Value::is_numeric) {
        SlotKind::IntegerGrid
    } else {
        SlotKind::Categorical
    }
}

/// Derive the agent-facing action space from a schema.
pub fn configure_action_space(schema: &Schema) -> ActionSpaceSpec {
    let mut slots = Vec::with_capacity(schema.slot_count());
    for knob in &schema.knobs {
        let kind = slot_kind(&knob.values, knob.kind.is_grid());
        for _ in 0..knob.dims {
            slots.push(Slot { count: knob.values.len(), kind });
        }
    }
    let slot_refs = schema.slots();
    let constraints: Vec<ConstraintSpec> = schema
        .constraints
        .iter()
        .map(|c| {
            let cs = schema.constraint_slots(c);
            let tables = cs
                .iter()
                .map(|&s| {
                    schema.knobs[slot_refs[s].knob]
                        .values
                        .iter()
                        .map(|v| v.as_i64().unwrap_or(0) as i128)
                        .collect()
                })
                .collect();
            ConstraintSpec {
                relation: match c.kind {
                    ConstraintKind::ProductLe => Relation::ProductLe,
                    ConstraintKind::ProductEq => Relation::ProductEq,
                },
                slots: cs,
                tables,
                bound: schema.bound_value(c.bound),
            }
        })
        .collect();
    let components = components(slots.len(), &constraints);
    ActionSpaceSpec { slots, constraints, components }
}

fn components(n: usize, constraints: &[ConstraintSpec]) -> Vec<Component> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for c in constraints {
        for w in c.slots.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut out: Vec<Component> = Vec::new();
    for (ci, c) in constraints.iter().enumerate() {
        let Some(&first) = c.slots.first() else { continue };
        let root = find(&mut parent, first);
        match out.iter_mut().find(|comp| find(&mut parent, comp.slots[0]) == root) {
            Some(comp) => comp.constraints.push(ci),
            None => {
                let slots: Vec<usize> = (0..n).filter(|&s| find(&mut parent, s) == root).collect();
                out.push(Component { slots, constraints: vec![ci] });
            }
        }
    }
    out
}

impl ActionSpaceSpec {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_feasible(&self, action: &[usize]) -> bool {
        action.len() == self.slots.len()
            && action.iter().zip(&self.slots).all(|(&i, s)| i < s.count)
            && self.constraints.iter().all(|c| c.holds(action))
    }

    pub fn component_feasible(&self, comp: &Component, action: &[usize]) -> bool {
        comp.constraints.iter().all(|&c| self.constraints[c].holds(action))
    }

    pub fn uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.slots.iter().map(|s| rng.gen_range(0..s.count)).collect()
    }

    /// Redraw a component's slots uniformly until its constraints hold.
    /// Returns false, leaving the action untouched, if retries run out.
    pub fn resample_component<R: Rng + ?Sized>(&self, comp: &Component, action: &mut [usize], rng: &mut R) -> bool {
        let saved: Vec<usize> = comp.slots.iter().map(|&s| action[s]).collect();
        for _ in 0..COMPONENT_RETRIES {
            for &s in &comp.slots {
                action[s] = rng.gen_range(0..self.slots[s].count);
            }
            if self.component_feasible(comp, action) {
                return true;
            }
        }
        for (&s, &v) in comp.slots.iter().zip(&saved) {
            action[s] = v;
        }
        false
    }

    /// Uniform sample over the feasible set (component-wise rejection).
    pub fn sample_feasible<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut a = self.uniform(rng);
        for comp in &self.components {
            if !self.component_feasible(comp, &a) {
                self.resample_component(comp, &mut a, rng);
            }
        }
        a
    }

    /// Index coordinates scaled to [0, 1] per slot.
    pub fn normalize(&self, action: &[usize]) -> Vec<f64> {
        action
            .iter()
            .zip(&self.slots)
            .map(|(&i, s)| if s.count > 1 { i as f64 / (s.count - 1) as f64 } else { 0.0 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table4_slots() {
        let s = Schema::parse(include_str!("../../fixtures/table4.json")).unwrap();
        let a = configure_action_space(&s);
        let counts: Vec<usize> = a.slots.iter().map(|s| s.count).collect();
        assert_eq!(counts, vec![12, 3, 12, 2, 2, 4, 4, 4, 4, 4, 2, 3, 3, 3, 3, 3, 3, 3, 3, 10, 10, 10, 10]);
        assert_eq!(a.len(), s.slot_count());
        assert_eq!(a.slots[3].kind, SlotKind::Boolean);
        assert_eq!(a.slots[0].kind, SlotKind::IntegerGrid);
        assert_eq!(a.slots[4].kind, SlotKind::Categorical);
        assert_eq!(a.components.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!(a.is_feasible(&a.sample_feasible(&mut rng)));
        }
    }

    #[test]
    fn single_boolean_knob() {
        let s = Schema::parse(
            r#"{"npu_count": 4, "knobs": [{"name": "x", "stack": "workload", "kind": "scalar-categorical", "values": [0, 1]}]}"#,
        )
        .unwrap();
        let a = configure_action_space(&s);
        assert_eq!(a.slots, vec![Slot { count: 2, kind: SlotKind::Boolean }]);
        assert!(a.constraints.is_empty());
    }
}
