use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::search::SearchLog;
use super::{io_err, HarnessError};
use crate::schema::{Stack, Value};

pub use super::search::read_log;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(format!("unknown export format `{s}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub step: usize,
    pub reward: f64,
    pub best_so_far: f64,
    pub valid: bool,
}

/// One row per logged evaluation.
pub fn convergence_rows(log: &SearchLog) -> Vec<ConvergenceRow> {
    log.records
        .iter()
        .map(|r| ConvergenceRow { step: r.eval, reward: r.reward, best_so_far: r.best_so_far, valid: r.valid })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub stack: String,
    pub knob: String,
    pub value: String,
    pub frozen: bool,
}

fn render(values: &[Value]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    if parts.len() == 1 {
        parts[0].clone()
    } else {
        format!("[{}]", parts.join(", "))
    }
}

/// The best point's knobs grouped network, collective, workload; the
/// workload group ends with the derived tensor-parallel degree.
pub fn best_config_report(log: &SearchLog) -> Result<Vec<ReportEntry>, HarnessError> {
    let Some(point) = log.best_point()? else { return Ok(Vec::new()) };
    let full = log.header.full_schema()?;
    let search = log.header.search_schema()?;
    let mut out = Vec::new();
    for stack in [Stack::Network, Stack::Collective, Stack::Workload] {
        for k in full.knobs_in_stack(stack) {
            if let Some(v) = point.get(&k.name) {
                out.push(ReportEntry {
                    stack: stack.as_str().into(),
                    knob: k.name.clone(),
                    value: render(v),
                    frozen: search.knob(&k.name).is_none(),
                });
            }
        }
        if stack == Stack::Workload {
            let int = |n: &str| point.scalar(n).and_then(Value::as_i64);
            if let (Some(dp), Some(pp), Some(sp)) = (int("dp"), int("pp"), int("sp")) {
                let used = dp * pp * sp;
                if used > 0 && full.npu_count as i64 % used == 0 {
                    out.push(ReportEntry {
                        stack: stack.as_str().into(),
                        knob: "tp (derived)".into(),
                        value: (full.npu_count as i64 / used).to_string(),
                        frozen: false,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| io_err(path, e)
}

/// Write the convergence table and best-config report next to each other
/// in `out_dir`. Returns the files written.
pub fn export(log: &SearchLog, format: ExportFormat, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let rows = convergence_rows(log);
    let report = best_config_report(log)?;
    match format {
        ExportFormat::Csv => {
            let conv = out_dir.join("convergence.csv");
            let mut w = csv::Writer::from_path(&conv).map_err(csv_err(&conv))?;
            w.write_record(["step", "reward", "best_so_far", "valid"]).map_err(csv_err(&conv))?;
            for r in &rows {
                w.write_record([r.step.to_string(), r.reward.to_string(), r.best_so_far.to_string(), r.valid.to_string()])
                    .map_err(csv_err(&conv))?;
            }
            w.flush().map_err(|e| io_err(&conv, e))?;

            let best = out_dir.join("best_config.csv");
            let mut w = csv::Writer::from_path(&best).map_err(csv_err(&best))?;
            w.write_record(["stack", "knob", "value", "frozen"]).map_err(csv_err(&best))?;
            for e in &report {
                w.write_record([&e.stack, &e.knob, &e.value, &e.frozen.to_string()]).map_err(csv_err(&best))?;
            }
            w.flush().map_err(|e| io_err(&best, e))?;
            Ok(vec![conv, best])
        }
        ExportFormat::Json => {
            let conv = out_dir.join("convergence.json");
            let best = out_dir.join("best_config.json");
            let ser = |v: serde_json::Value| serde_json::to_string_pretty(&v).expect("json value serializes") + "\n";
            std::fs::write(&conv, ser(serde_json::json!(rows))).map_err(|e| io_err(&conv, e))?;
            let summary = serde_json::json!({
                "best": log.best(),
                "knobs": report,
            });
            std::fs::write(&best, ser(summary)).map_err(|e| io_err(&best, e))?;
            Ok(vec![conv, best])
        }
    }
}
