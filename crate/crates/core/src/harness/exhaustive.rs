use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::Experiment;
use super::{io_err, HarnessError};
use crate::schema::{enumerate_valid, ActionVector, Cardinality, DesignPoint};

/// Relative width of the near-optimal band.
pub const DEFAULT_NEAR_BAND: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustiveRow {
    pub action: ActionVector,
    pub reward: f64,
    pub valid: bool,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    /// One row per valid point, in lexicographic action order.
    pub rows: Vec<ExhaustiveRow>,
    /// Index of the best row; ties go to the smallest action.
    pub best: Option<usize>,
    pub best_point: Option<DesignPoint>,
    /// Rows whose reward equals the best exactly.
    pub equivalent: Vec<usize>,
    /// Rows within `band` of the best reward.
    pub near_optimal: Vec<usize>,
    pub band: f64,
    /// Max over min latency among evaluable points.
    pub latency_spread: Option<f64>,
}

impl ExhaustiveResult {
    pub fn best_row(&self) -> Option<&ExhaustiveRow> {
        self.best.map(|i| &self.rows[i])
    }

    pub fn best_reward(&self) -> f64 {
        self.best_row().map_or(0.0, |r| r.reward)
    }

    pub fn valid_count(&self) -> usize {
        self.rows.iter().filter(|r| r.valid).count()
    }
}

/// Evaluate every constraint-satisfying point of the experiment's search
/// schema. Refuses when the count exceeds the configured cap.
pub fn run_exhaustive(exp: &Experiment) -> Result<ExhaustiveResult, HarnessError> {
    let cap = exp.config.exhaustive_cap;
    let actions = enumerate_valid(exp.schema(), cap).map_err(|c| match c {
        Cardinality::TooLarge => HarnessError::Input(format!(
            "more than {cap} valid points; raise exhaustive_cap or use `dse search`"
        )),
        Cardinality::Exact(n) => HarnessError::Input(format!("{n} valid points exceed the cap of {cap}; use `dse search`")),
    })?;
    let pool = exp.thread_pool()?;
    let rows: Vec<ExhaustiveRow> = pool.install(|| {
        actions
            .into_par_iter()
            .map(|a| {
                let e = exp.evaluator.evaluate_action(&a);
                ExhaustiveRow { action: a, reward: e.reward, valid: e.valid, latency: e.latency }
            })
            .collect()
    });
    let result = summarize(rows, DEFAULT_NEAR_BAND, |a| {
        let p = crate::schema::decode_action(exp.schema(), a).ok()?;
        Some(exp.evaluator.complete(&p))
    });
    if let Some(dir) = exp.ensure_output_dir()? {
        write_outputs(dir, &result)?;
    }
    Ok(result)
}

pub(crate) fn summarize(
    mut rows: Vec<ExhaustiveRow>,
    band: f64,
    point: impl Fn(&ActionVector) -> Option<DesignPoint>,
) -> ExhaustiveResult {
    rows.sort_by(|a, b| a.action.cmp(&b.action));
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if !r.valid {
            continue;
        }
        // strict comparison keeps the lexicographically smallest on ties
        if best.map_or(true, |b| r.reward > rows[b].reward) {
            best = Some(i);
        }
    }
    let (equivalent, near_optimal) = match best {
        Some(b) => {
            let top = rows[b].reward;
            let eq = (0..rows.len()).filter(|&i| rows[i].valid && rows[i].reward == top).collect();
            let near = (0..rows.len()).filter(|&i| rows[i].valid && rows[i].reward >= top * (1.0 - band)).collect();
            (eq, near)
        }
        None => (Vec::new(), Vec::new()),
    };
    let lat: Vec<f64> = rows.iter().filter(|r| r.valid && r.latency > 0.0).map(|r| r.latency).collect();
    let latency_spread = (!lat.is_empty()).then(|| {
        let max = lat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = lat.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    });
    let best_point = best.and_then(|b| point(&rows[b].action));
    ExhaustiveResult { rows, best, best_point, equivalent, near_optimal, band, latency_spread }
}

fn action_str(a: &ActionVector) -> String {
    a.0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_outputs(dir: &Path, res: &ExhaustiveResult) -> Result<(), HarnessError> {
    let table = dir.join("exhaustive.csv");
    let mut w = csv::Writer::from_path(&table).map_err(|e| io_err(&table, e))?;
    w.write_record(["action", "reward", "valid", "latency"]).map_err(|e| io_err(&table, e))?;
    for r in &res.rows {
        w.write_record([action_str(&r.action), r.reward.to_string(), r.valid.to_string(), r.latency.to_string()])
            .map_err(|e| io_err(&table, e))?;
    }
    w.flush().map_err(|e| io_err(&table, e))?;

    let summary = serde_json::json!({
        "points": res.rows.len(),
        "valid": res.valid_count(),
        "best": res.best_row(),
        "best_point": res.best_point.as_ref().map(DesignPoint::to_json_value),
        "equivalent": res.equivalent.iter().map(|&i| &res.rows[i].action).collect::<Vec<_>>(),
        "near_optimal_band": res.band,
        "near_optimal": res.near_optimal.len(),
        "latency_spread": res.latency_spread,
    });
    let path = dir.join("exhaustive.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
}
