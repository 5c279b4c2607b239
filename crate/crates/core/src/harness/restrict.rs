use std::fmt;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::schema::{constrained_cardinality, Bound, Cardinality, Constraint, ConstraintKind, DesignPoint, Operand, Schema, Stack, Value};

/// Which knobs a search may vary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "RawMode", into = "RawMode")]
pub enum Mode {
    #[default]
    FullStack,
    WorkloadOnly,
    CollectiveOnly,
    NetworkOnly,
    Custom(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawMode {
    Named(String),
    Custom { custom: Vec<String> },
}

impl TryFrom<RawMode> for Mode {
    type Error = String;

    fn try_from(raw: RawMode) -> Result<Self, Self::Error> {
        match raw {
            RawMode::Named(s) => s.parse(),
            RawMode::Custom { custom } => Ok(Mode::Custom(custom)),
        }
    }
}

impl From<Mode> for RawMode {
    fn from(m: Mode) -> RawMode {
        match m {
            Mode::Custom(knobs) => RawMode::Custom { custom: knobs },
            named => RawMode::Named(named.to_string()),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-stack" => Ok(Mode::FullStack),
            "workload-only" => Ok(Mode::WorkloadOnly),
            "collective-only" => Ok(Mode::CollectiveOnly),
            "network-only" => Ok(Mode::NetworkOnly),
            other => Err(format!(
                "unknown mode `{other}` (expected full-stack, workload-only, collective-only, network-only or {{\"custom\": [...]}})"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::FullStack => f.write_str("full-stack"),
            Mode::WorkloadOnly => f.write_str("workload-only"),
            Mode::CollectiveOnly => f.write_str("collective-only"),
            Mode::NetworkOnly => f.write_str("network-only"),
            Mode::Custom(k) => write!(f, "custom({})", k.join(", ")),
        }
    }
}

impl Mode {
    pub fn searchable(&self, knob: &str, stack: Stack) -> bool {
        match self {
            Mode::FullStack => true,
            Mode::WorkloadOnly => stack == Stack::Workload,
            Mode::CollectiveOnly => stack == Stack::Collective,
            Mode::NetworkOnly => stack == Stack::Network,
            Mode::Custom(names) => names.iter().any(|n| n == knob),
        }
    }
}

/// A schema cut down to the searchable knobs, plus the pinned values of
/// every frozen knob.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub schema: Schema,
    pub frozen: DesignPoint,
    pub warnings: Vec<String>,
}

impl Restriction {
    pub fn identity(schema: &Schema) -> Restriction {
        Restriction { schema: schema.clone(), frozen: DesignPoint::new(), warnings: Vec::new() }
    }
}

fn default_values(
    knob: &crate::schema::Knob,
    defaults: &serde_json::Map<String, serde_json::Value>,
) -> Result<Vec<Value>, HarnessError> {
    let raw = defaults
        .get(&knob.name)
        .ok_or_else(|| HarnessError::Input(format!("no default for frozen knob `{}`", knob.name)))?;
    let items = match raw {
        serde_json::Value::Array(a) => a.clone(),
        other => vec![other.clone()],
    };
    let mut values: Vec<Value> = items
        .into_iter()
        .map(|v| serde_json::from_value(v).map_err(|e| HarnessError::Input(format!("default for `{}`: {e}", knob.name))))
        .collect::<Result<_, _>>()?;
    if values.len() == 1 && knob.dims > 1 {
        values = vec![values[0].clone(); knob.dims];
    }
    if values.len() != knob.dims {
        return Err(HarnessError::Input(format!(
            "default for `{}` has {} values, knob has {} dims",
            knob.name,
            values.len(),
            knob.dims
        )));
    }
    Ok(values)
}

/// Freeze every knob the mode does not search at its default. Frozen knobs
/// leave the schema; their values are folded into the constraint bounds.
pub fn restrict_schema(
    schema: &Schema,
    mode: &Mode,
    defaults: &serde_json::Map<String, serde_json::Value>,
) -> Result<Restriction, HarnessError> {
    if let Mode::Custom(names) = mode {
        if let Some(bad) = names.iter().find(|n| schema.knob(n).is_none()) {
            return Err(HarnessError::Input(format!("custom mode names unknown knob `{bad}`")));
        }
    }
    if *mode == Mode::FullStack {
        return Ok(Restriction::identity(schema));
    }
    let mut frozen = DesignPoint::new();
    let mut warnings = Vec::new();
    for k in &schema.knobs {
        if mode.searchable(&k.name, k.stack) {
            continue;
        }
        let values = default_values(k, defaults)?;
        for v in &values {
            if k.index_of(v).is_none() {
                warnings.push(format!("default {v} for `{}` is outside its value list", k.name));
            }
        }
        frozen.set(k.name.clone(), values);
    }

    let knobs: Vec<_> = schema.knobs.iter().filter(|k| frozen.get(&k.name).is_none()).cloned().collect();
    let mut constraints = Vec::new();
    for c in &schema.constraints {
        let mut pinned: i128 = 1;
        let mut rest: Vec<Operand> = Vec::new();
        for op in &c.operands {
            match frozen.get(&op.knob) {
                Some(values) => {
                    let picked: Vec<&Value> = match op.component {
                        Some(i) => values.get(i).into_iter().collect(),
                        None => values.iter().collect(),
                    };
                    for v in picked {
                        let n = v.as_i64().filter(|&n| n >= 1).ok_or_else(|| {
                            HarnessError::Input(format!("default {v} for `{}` is not a positive integer", op.knob))
                        })?;
                        pinned = pinned.saturating_mul(n as i128);
                    }
                }
                None => rest.push(op.clone()),
            }
        }
        let bound = schema.bound_value(c.bound);
        let satisfiable = match c.kind {
            ConstraintKind::ProductLe => pinned <= bound,
            ConstraintKind::ProductEq if rest.is_empty() => pinned == bound,
            ConstraintKind::ProductEq => bound % pinned == 0,
        };
        if !satisfiable {
            warnings.push(format!("frozen defaults violate `{c}`; no point of this restriction is valid"));
            continue;
        }
        if rest.is_empty() {
            continue;
        }
        let folded = if pinned == 1 { c.bound } else { Bound::Literal((bound / pinned) as i64) };
        constraints.push(Constraint { kind: c.kind, operands: rest, bound: folded });
    }
    let restricted = Schema { npu_count: schema.npu_count, knobs, constraints };
    if let Cardinality::Exact(n) = constrained_cardinality(&restricted, 1 << 20) {
        if n == 0u32.into() {
            warnings.push("restricted schema has no valid points".into());
        }
    }
    Ok(Restriction { schema: restricted, frozen, warnings })
}
