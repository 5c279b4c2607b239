use std::fmt;

use serde::{Deserialize, Serialize};

use super::{syntax_error, ConstraintKind, Schema, SchemaError, Value};

/// Flat list of value indices, one per action slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ActionVector(pub Vec<usize>);

impl ActionVector {
    pub fn zeros(len: usize) -> Self {
        ActionVector(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for ActionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// One concrete assignment of every knob, kept in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    entries: Vec<(String, Vec<Value>)>,
}

impl DesignPoint {
    pub fn new() -> Self {
        DesignPoint { entries: Vec::new() }
    }

    /// Append or replace a knob assignment.
    pub fn set(&mut self, name: impl Into<String>, values: Vec<Value>) {
        let name = name.into();
        if let Some(e) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            e.1 = values;
        } else {
            self.entries.push((name, values));
        }
    }

    pub fn with(mut self, name: impl Into<String>, values: Vec<Value>) -> Self {
        self.set(name, values);
        self
    }

    pub fn get(&self, name: &str) -> Option<&[Value]> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn scalar(&self, name: &str) -> Option<&Value> {
        self.get(name).and_then(|v| v.first())
    }

    pub fn entries(&self) -> &[(String, Vec<Value>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse a point file: a JSON object mapping knob names to a scalar or a
    /// list of per-dimension values. Knobs are reordered to schema order.
    pub fn from_json(schema: &Schema, text: &str) -> Result<DesignPoint, SchemaError> {
        let map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| syntax_error(&e))?;
        let mut point = DesignPoint::new();
        for knob in &schema.knobs {
            let raw = map
                .get(&knob.name)
                .ok_or_else(|| SchemaError::Structure(format!("point is missing knob `{}`", knob.name)))?;
            let values: Vec<Value> = match raw {
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|v| serde_json::from_value(v.clone()))
                    .collect::<Result<_, _>>()
                    .map_err(|e| SchemaError::Structure(format!("knob `{}`: {e}", knob.name)))?,
                other => vec![serde_json::from_value(other.clone())
                    .map_err(|e| SchemaError::Structure(format!("knob `{}`: {e}", knob.name)))?],
            };
            point.set(knob.name.clone(), values);
        }
        if let Some(extra) = map.keys().find(|k| schema.knob(k).is_none()) {
            return Err(SchemaError::Structure(format!("point names unknown knob `{extra}`")));
        }
        Ok(point)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (name, values) in &self.entries {
            let v = if values.len() == 1 {
                serde_json::to_value(&values[0]).unwrap_or(serde_json::Value::Null)
            } else {
                serde_json::to_value(values).unwrap_or(serde_json::Value::Null)
            };
            map.insert(name.clone(), v);
        }
        serde_json::Value::Object(map)
    }
}

impl Default for DesignPoint {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, values) in &self.entries {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            if values.len() == 1 {
                write!(f, "{name}={}", values[0])?;
            } else {
                let vs: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "{name}=[{}]", vs.join(", "))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: usize,
    pub description: String,
    pub product: i128,
    pub bound: i128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validity {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

fn check_structure(schema: &Schema, point: &DesignPoint) -> Result<(), SchemaError> {
    if point.entries.len() != schema.knobs.len() {
        return Err(SchemaError::Structure(format!(
            "expected {} knobs, point has {}",
            schema.knobs.len(),
            point.entries.len()
        )));
    }
    for (knob, (name, values)) in schema.knobs.iter().zip(&point.entries) {
        if knob.name != *name {
            return Err(SchemaError::Structure(format!("expected knob `{}`, found `{name}`", knob.name)));
        }
        if values.len() != knob.dims {
            return Err(SchemaError::Structure(format!(
                "knob `{name}` expects {} values, found {}",
                knob.dims,
                values.len()
            )));
        }
    }
    Ok(())
}

/// Evaluate every schema constraint against a point.
pub fn check_constraints(schema: &Schema, point: &DesignPoint) -> Result<Validity, SchemaError> {
    check_structure(schema, point)?;
    let mut violations = Vec::new();
    for (ci, c) in schema.constraints.iter().enumerate() {
        let mut product: i128 = 1;
        for op in &c.operands {
            let values = point.get(&op.knob).unwrap_or(&[]);
            let picked: Vec<&Value> = match op.component {
                Some(comp) => values.get(comp).into_iter().collect(),
                None => values.iter().collect(),
            };
            for v in picked {
                let n = v.as_i64().ok_or_else(|| {
                    SchemaError::Structure(format!("knob `{}` value {v} is not an integer", op.knob))
                })?;
                product = product.saturating_mul(n as i128);
            }
        }
        let bound = schema.bound_value(c.bound);
        let ok = match c.kind {
            ConstraintKind::ProductLe => product <= bound,
            ConstraintKind::ProductEq => product == bound,
        };
        if !ok {
            violations.push(Violation { constraint: ci, description: c.to_string(), product, bound });
        }
    }
    Ok(Validity { valid: violations.is_empty(), violations })
}

pub fn encode_point(schema: &Schema, point: &DesignPoint) -> Result<ActionVector, SchemaError> {
    check_structure(schema, point)?;
    let mut out = Vec::with_capacity(schema.slot_count());
    for (knob, (_, values)) in schema.knobs.iter().zip(&point.entries) {
        for v in values {
            let idx = knob
                .index_of(v)
                .ok_or_else(|| SchemaError::ValueNotInList { knob: knob.name.clone(), value: v.to_string() })?;
            out.push(idx);
        }
    }
    Ok(ActionVector(out))
}

pub fn decode_action(schema: &Schema, action: &ActionVector) -> Result<DesignPoint, SchemaError> {
    if action.len() != schema.slot_count() {
        return Err(SchemaError::Structure(format!(
            "action has {} slots, schema has {}",
            action.len(),
            schema.slot_count()
        )));
    }
    let mut point = DesignPoint::new();
    let mut slot = 0;
    for knob in &schema.knobs {
        let mut values = Vec::with_capacity(knob.dims);
        for _ in 0..knob.dims {
            let idx = action.0[slot];
            let v = knob
                .values
                .get(idx)
                .ok_or(SchemaError::IndexOutOfRange { slot, index: idx, len: knob.values.len() })?;
            values.push(v.clone());
            slot += 1;
        }
        point.entries.push((knob.name.clone(), values));
    }
    Ok(point)
}
