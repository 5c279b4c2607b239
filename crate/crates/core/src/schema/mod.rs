//! Design-space schema: knobs grouped by stack, their value lists, and the
//! product constraints that tie them together.
//!
//! A schema document is JSON with three top-level keys:
//!
//! ```json
//! {
//!   "npu_count": 1024,
//!   "knobs": [
//!     {"name": "dp", "stack": "workload", "kind": "scalar-grid", "values": [1, 2, 4]},
//!     {"name": "npus_per_dim", "stack": "network", "kind": "multidim-grid", "dims": 4, "values": [4, 8, 16]}
//!   ],
//!   "constraints": [
//!     {"kind": "product-eq", "operands": ["npus_per_dim"], "bound": "npu_count"}
//!   ]
//! }
//! ```
//!
//! Constraint operands name a knob (all of its dimensions) or a single
//! component such as `npus_per_dim[2]`. The bound is either the literal
//! string `"npu_count"` or an integer.

mod count;
mod point;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use count::{
    constrained_cardinality, enumerate_valid, raw_cardinality, sample_action, sample_uniform,
    Cardinality, MAX_SAMPLE_RETRIES,
};
pub use point::{check_constraints, decode_action, encode_point, ActionVector, DesignPoint, Validity, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("knob `{knob}`: unknown stack tag `{stack}` (expected workload, collective or network)")]
    UnknownStack { knob: String, stack: String },
    #[error("knob `{knob}`: unknown kind `{kind}`")]
    UnknownKind { knob: String, kind: String },
    #[error("knob `{0}`: empty value list")]
    EmptyValues(String),
    #[error("knob `{knob}`: duplicate value {value}")]
    DuplicateValue { knob: String, value: String },
    #[error("duplicate knob name `{0}`")]
    DuplicateKnob(String),
    #[error("knob `{knob}`: {reason}")]
    InvalidKnob { knob: String, reason: String },
    #[error("constraint references missing knob `{0}`")]
    MissingKnob(String),
    #[error("constraint operand `{operand}`: {reason}")]
    InvalidOperand { operand: String, reason: String },
    #[error("npu_count {0} is not a positive power of two")]
    NpuCount(u64),
    #[error("invalid constraint bound: {0}")]
    InvalidBound(String),
    #[error("design point does not match schema: {0}")]
    Structure(String),
    #[error("slot {slot}: index {index} out of range (slot has {len} values)")]
    IndexOutOfRange { slot: usize, index: usize, len: usize },
    #[error("knob `{knob}`: value {value} is not in its value list")]
    ValueNotInList { knob: String, value: String },
    #[error("no constraint-satisfying point found after {0} retries; schema is over-constrained")]
    RetriesExhausted(usize),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Which layer of the system stack a knob configures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Stack {
    Workload,
    Collective,
    Network,
}

impl Stack {
    pub const ALL: [Stack; 3] = [Stack::Workload, Stack::Collective, Stack::Network];

    pub fn parse(s: &str) -> Option<Stack> {
        match s {
            "workload" => Some(Stack::Workload),
            "collective" => Some(Stack::Collective),
            "network" => Some(Stack::Network),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stack::Workload => "workload",
            Stack::Collective => "collective",
            Stack::Network => "network",
        }
    }
}

impl fmt::Display for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnobKind {
    ScalarCategorical,
    ScalarGrid,
    MultidimCategorical,
    MultidimGrid,
}

impl KnobKind {
    fn parse(s: &str) -> Option<KnobKind> {
        match s {
            "scalar-categorical" => Some(KnobKind::ScalarCategorical),
            "scalar-grid" => Some(KnobKind::ScalarGrid),
            "multidim-categorical" => Some(KnobKind::MultidimCategorical),
            "multidim-grid" => Some(KnobKind::MultidimGrid),
            _ => None,
        }
    }

    pub fn is_multidim(self) -> bool {
        matches!(self, KnobKind::MultidimCategorical | KnobKind::MultidimGrid)
    }

    pub fn is_grid(self) -> bool {
        matches!(self, KnobKind::ScalarGrid | KnobKind::MultidimGrid)
    }
}

/// A single knob value. Numbers keep their integer-ness so that product
/// constraints can be evaluated exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            Value::Text(_) => None,
        }
    }

    /// Integer view; reals are accepted when they are integral.
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Real(r) if r.fract() == 0.0 && r.abs() < 9.0e15 => Some(*r as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, Value::Text(_))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Text(_), _) | (_, Value::Text(_)) => false,
            (Value::Int(a), Value::Int(b)) => a == b,
            (a, b) => a.as_f64() == b.as_f64(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Knob {
    pub name: String,
    pub stack: Stack,
    pub kind: KnobKind,
    /// 1 for scalar knobs, the network dimensionality for multidim knobs.
    pub dims: usize,
    /// Shared by every dimension of a multidim knob.
    pub values: Vec<Value>,
}

impl Knob {
    pub fn index_of(&self, value: &Value) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    ProductLe,
    ProductEq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub knob: String,
    /// `None` multiplies every dimension of the knob.
    pub component: Option<usize>,
}

impl Operand {
    fn parse(text: &str) -> Result<Operand, SchemaError> {
        let text = text.trim();
        if let Some(open) = text.find('[') {
            let close = text.strip_suffix(']').ok_or_else(|| SchemaError::InvalidOperand {
                operand: text.to_string(),
                reason: "unterminated component index".into(),
            })?;
            let index = close[open + 1..].trim().parse::<usize>().map_err(|_| SchemaError::InvalidOperand {
                operand: text.to_string(),
                reason: "component index is not a non-negative integer".into(),
            })?;
            Ok(Operand { knob: text[..open].trim().to_string(), component: Some(index) })
        } else {
            Ok(Operand { knob: text.to_string(), component: None })
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.component {
            Some(c) => write!(f, "{}[{}]", self.knob, c),
            None => f.write_str(&self.knob),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    NpuCount,
    Literal(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub operands: Vec<Operand>,
    pub bound: Bound,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops: Vec<String> = self.operands.iter().map(|o| o.to_string()).collect();
        let rel = match self.kind {
            ConstraintKind::ProductLe => "<=",
            ConstraintKind::ProductEq => "=",
        };
        match self.bound {
            Bound::NpuCount => write!(f, "product({}) {} npu_count", ops.join(", "), rel),
            Bound::Literal(b) => write!(f, "product({}) {} {}", ops.join(", "), rel, b),
        }
    }
}

/// Position of one action slot: knob index and dimension within the knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRef {
    pub knob: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub npu_count: u64,
    pub knobs: Vec<Knob>,
    pub constraints: Vec<Constraint>,
}

// Wire representation; validated into `Schema`.
#[derive(Debug, Serialize, Deserialize)]
struct RawSchema {
    npu_count: u64,
    knobs: Vec<RawKnob>,
    #[serde(default)]
    constraints: Vec<RawConstraint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawKnob {
    name: String,
    stack: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dims: Option<usize>,
    values: Vec<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawConstraint {
    kind: ConstraintKind,
    operands: Vec<String>,
    bound: serde_json::Value,
}

pub(crate) fn syntax_error(err: &serde_json::Error) -> SchemaError {
    SchemaError::Syntax { line: err.line(), column: err.column(), message: err.to_string() }
}

impl Schema {
    /// Parse and validate a schema document.
    pub fn parse(text: &str) -> Result<Schema, SchemaError> {
        let raw: RawSchema = serde_json::from_str(text).map_err(|e| syntax_error(&e))?;
        Schema::from_raw(raw)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Schema, SchemaError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Schema::parse(&text)
    }

    fn from_raw(raw: RawSchema) -> Result<Schema, SchemaError> {
        if raw.npu_count == 0 || !raw.npu_count.is_power_of_two() {
            return Err(SchemaError::NpuCount(raw.npu_count));
        }
        let mut knobs = Vec::with_capacity(raw.knobs.len());
        let mut names = HashSet::new();
        for rk in raw.knobs {
            let stack = Stack::parse(&rk.stack)
                .ok_or_else(|| SchemaError::UnknownStack { knob: rk.name.clone(), stack: rk.stack.clone() })?;
            let kind = KnobKind::parse(&rk.kind)
                .ok_or_else(|| SchemaError::UnknownKind { knob: rk.name.clone(), kind: rk.kind.clone() })?;
            if !names.insert(rk.name.clone()) {
                return Err(SchemaError::DuplicateKnob(rk.name));
            }
            let dims = match (kind.is_multidim(), rk.dims) {
                (false, None) | (false, Some(1)) => 1,
                (false, Some(d)) => {
                    return Err(SchemaError::InvalidKnob {
                        knob: rk.name,
                        reason: format!("scalar knob declares {d} dims"),
                    })
                }
                (true, Some(d)) if d >= 1 => d,
                (true, _) => {
                    return Err(SchemaError::InvalidKnob {
                        knob: rk.name,
                        reason: "multidim knob needs dims >= 1".into(),
                    })
                }
            };
            let knob = Knob { name: rk.name, stack, kind, dims, values: rk.values };
            validate_values(&knob)?;
            knobs.push(knob);
        }

        let mut schema = Schema { npu_count: raw.npu_count, knobs, constraints: Vec::new() };
        for rc in raw.constraints {
            let operands = rc.operands.iter().map(|o| Operand::parse(o)).collect::<Result<Vec<_>, _>>()?;
            let bound = match &rc.bound {
                serde_json::Value::String(s) if s == "npu_count" => Bound::NpuCount,
                serde_json::Value::Number(n) => match n.as_i64() {
                    Some(b) if b > 0 => Bound::Literal(b),
                    _ => return Err(SchemaError::InvalidBound(n.to_string())),
                },
                other => return Err(SchemaError::InvalidBound(other.to_string())),
            };
            let constraint = Constraint { kind: rc.kind, operands, bound };
            schema.validate_constraint(&constraint)?;
            schema.constraints.push(constraint);
        }
        Ok(schema)
    }

    fn validate_constraint(&self, c: &Constraint) -> Result<(), SchemaError> {
        if c.operands.is_empty() {
            return Err(SchemaError::InvalidOperand { operand: String::new(), reason: "constraint has no operands".into() });
        }
        for op in &c.operands {
            let knob = self.knob(&op.knob).ok_or_else(|| SchemaError::MissingKnob(op.knob.clone()))?;
            if let Some(comp) = op.component {
                if comp >= knob.dims {
                    return Err(SchemaError::InvalidOperand {
                        operand: op.to_string(),
                        reason: format!("knob has only {} dims", knob.dims),
                    });
                }
            }
            for v in &knob.values {
                match v.as_i64() {
                    Some(i) if i >= 1 => {}
                    _ => {
                        return Err(SchemaError::InvalidOperand {
                            operand: op.to_string(),
                            reason: format!("value {v} is not a positive integer"),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    pub fn knob(&self, name: &str) -> Option<&Knob> {
        self.knobs.iter().find(|k| k.name == name)
    }

    pub fn knob_index(&self, name: &str) -> Option<usize> {
        self.knobs.iter().position(|k| k.name == name)
    }

    /// Total number of action slots (multidim knobs contribute one per dim).
    pub fn slot_count(&self) -> usize {
        self.knobs.iter().map(|k| k.dims).sum()
    }

    pub fn slots(&self) -> Vec<SlotRef> {
        self.knobs
            .iter()
            .enumerate()
            .flat_map(|(ki, k)| (0..k.dims).map(move |dim| SlotRef { knob: ki, dim }))
            .collect()
    }

    /// First slot index of each knob.
    pub fn slot_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.knobs.len());
        let mut acc = 0;
        for k in &self.knobs {
            offsets.push(acc);
            acc += k.dims;
        }
        offsets
    }

    pub fn bound_value(&self, bound: Bound) -> i128 {
        match bound {
            Bound::NpuCount => self.npu_count as i128,
            Bound::Literal(b) => b as i128,
        }
    }

    /// Slot indices multiplied by a constraint, with repetition.
    pub fn constraint_slots(&self, c: &Constraint) -> Vec<usize> {
        let offsets = self.slot_offsets();
        let mut out = Vec::new();
        for op in &c.operands {
            if let Some(ki) = self.knob_index(&op.knob) {
                match op.component {
                    Some(comp) => out.push(offsets[ki] + comp),
                    None => out.extend((0..self.knobs[ki].dims).map(|d| offsets[ki] + d)),
                }
            }
        }
        out
    }

    pub fn knobs_in_stack(&self, stack: Stack) -> impl Iterator<Item = &Knob> {
        self.knobs.iter().filter(move |k| k.stack == stack)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("schema serializes")
    }

    fn to_raw(&self) -> RawSchema {
        RawSchema {
            npu_count: self.npu_count,
            knobs: self
                .knobs
                .iter()
                .map(|k| RawKnob {
                    name: k.name.clone(),
                    stack: k.stack.as_str().to_string(),
                    kind: serde_json::to_value(k.kind)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    dims: k.kind.is_multidim().then_some(k.dims),
                    values: k.values.clone(),
                })
                .collect(),
            constraints: self
                .constraints
                .iter()
                .map(|c| RawConstraint {
                    kind: c.kind,
                    operands: c.operands.iter().map(|o| o.to_string()).collect(),
                    bound: match c.bound {
                        Bound::NpuCount => serde_json::Value::String("npu_count".into()),
                        Bound::Literal(b) => serde_json::Value::from(b),
                    },
                })
                .collect(),
        }
    }
}

impl Serialize for Schema {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_raw().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawSchema::deserialize(deserializer)?;
        Schema::from_raw(raw).map_err(serde::de::Error::custom)
    }
}

fn validate_values(knob: &Knob) -> Result<(), SchemaError> {
    if knob.values.is_empty() {
        return Err(SchemaError::EmptyValues(knob.name.clone()));
    }
    for (i, v) in knob.values.iter().enumerate() {
        if knob.values[..i].contains(v) {
            return Err(SchemaError::DuplicateValue { knob: knob.name.clone(), value: v.to_string() });
        }
        if knob.kind.is_grid() && !v.is_numeric() {
            return Err(SchemaError::InvalidKnob {
                knob: knob.name.clone(),
                reason: format!("grid knob has non-numeric value {v}"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"npu_count": 8, "knobs": [
        {"name": "scheduling_policy", "stack": "collective", "kind": "scalar-categorical", "values": ["LIFO", "FIFO"]}
    ]}"#;

    #[test]
    fn minimal_schema_has_one_knob() {
        let s = Schema::parse(MINIMAL).unwrap();
        assert_eq!(s.knobs.len(), 1);
        assert!(s.constraints.is_empty());
        assert_eq!(s.slot_count(), 1);
    }

    #[test]
    fn missing_constraint_knob_is_rejected() {
        let text = r#"{"npu_count": 8, "knobs": [
            {"name": "dp", "stack": "workload", "kind": "scalar-grid", "values": [1, 2]}
        ], "constraints": [{"kind": "product-le", "operands": ["DPX"], "bound": "npu_count"}]}"#;
        let err = Schema::parse(text).unwrap_err();
        assert_eq!(err, SchemaError::MissingKnob("DPX".into()));
        assert!(err.to_string().contains("constraint references missing knob"));
    }

    #[test]
    fn unknown_stack_and_empty_values() {
        let bad_stack = r#"{"npu_count": 8, "knobs": [{"name": "x", "stack": "compute", "kind": "scalar-grid", "values": [1]}]}"#;
        assert!(matches!(Schema::parse(bad_stack), Err(SchemaError::UnknownStack { .. })));
        let empty = r#"{"npu_count": 8, "knobs": [{"name": "x", "stack": "network", "kind": "scalar-grid", "values": []}]}"#;
        assert_eq!(Schema::parse(empty), Err(SchemaError::EmptyValues("x".into())));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = Schema::parse("{\n  \"npu_count\": 8,\n  \"knobs\": [,]\n}").unwrap_err();
        match err {
            SchemaError::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_values_and_non_power_of_two() {
        let dup = r#"{"npu_count": 8, "knobs": [{"name": "x", "stack": "network", "kind": "scalar-grid", "values": [1, 1.0]}]}"#;
        assert!(matches!(Schema::parse(dup), Err(SchemaError::DuplicateValue { .. })));
        let npus = r#"{"npu_count": 12, "knobs": [{"name": "x", "stack": "network", "kind": "scalar-grid", "values": [1]}]}"#;
        assert_eq!(Schema::parse(npus), Err(SchemaError::NpuCount(12)));
    }

    #[test]
    fn component_operands_parse_and_round_trip() {
        let text = r#"{"npu_count": 64, "knobs": [
            {"name": "npus", "stack": "network", "kind": "multidim-grid", "dims": 2, "values": [4, 8, 16]}
        ], "constraints": [{"kind": "product-le", "operands": ["npus[1]"], "bound": 8}]}"#;
        let s = Schema::parse(text).unwrap();
        assert_eq!(s.constraints[0].operands[0], Operand { knob: "npus".into(), component: Some(1) });
        assert_eq!(s.constraint_slots(&s.constraints[0]), vec![1]);
        let again = Schema::parse(&s.to_json()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn numeric_values_compare_across_representations() {
        assert_eq!(Value::Int(50), Value::Real(50.0));
        assert_ne!(Value::Int(50), Value::Text("50".into()));
        assert_eq!(Value::Real(4.0).as_i64(), Some(4));
        assert_eq!(Value::Real(12.5).as_i64(), None);
    }
}
