use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, ExperimentConfig};
use super::{input, io_err, HarnessError};
use crate::agents::make_agent;
use crate::objective::Evaluation;
use crate::schema::{decode_action, ActionVector, DesignPoint, Schema};

pub const LOG_FORMAT: &str = "dse-search-log/1";
pub const LOG_FILE: &str = "search.jsonl";
/// Per-evaluation wall-clock seconds, kept apart so the log stays
/// reproducible bit for bit.
pub const WALL_TIME_FILE: &str = "wall_time.csv";

/// One evaluation of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Agent step that proposed the action.
    pub step: usize,
    /// Position in the run, from 0.
    pub eval: usize,
    pub action: ActionVector,
    pub reward: f64,
    pub valid: bool,
    pub latency: f64,
    pub best_so_far: f64,
}

/// First line of a log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub config: ExperimentConfig,
    /// Schema that actions index into, in the schema file format.
    pub schema: serde_json::Value,
    pub full_schema: serde_json::Value,
    pub frozen: serde_json::Value,
}

impl LogHeader {
    fn new(exp: &Experiment) -> LogHeader {
        let js = |s: &Schema| serde_json::from_str(&s.to_json()).expect("schema serializes");
        LogHeader {
            format: LOG_FORMAT.into(),
            config: exp.config.clone(),
            schema: js(&exp.restriction.schema),
            full_schema: js(&exp.full_schema),
            frozen: exp.restriction.frozen.to_json_value(),
        }
    }

    pub fn search_schema(&self) -> Result<Schema, HarnessError> {
        Schema::parse(&self.schema.to_string()).map_err(input)
    }

    pub fn full_schema(&self) -> Result<Schema, HarnessError> {
        Schema::parse(&self.full_schema.to_string()).map_err(input)
    }

    /// Decode an action and merge in the frozen knobs.
    pub fn full_point(&self, action: &ActionVector) -> Result<DesignPoint, HarnessError> {
        let search = self.search_schema()?;
        let full = self.full_schema()?;
        let searched = decode_action(&search, action).map_err(input)?;
        let frozen = match &self.frozen {
            serde_json::Value::Object(m) if !m.is_empty() => {
                let partial = Schema {
                    npu_count: full.npu_count,
                    knobs: full.knobs.iter().filter(|k| m.contains_key(&k.name)).cloned().collect(),
                    constraints: Vec::new(),
                };
                DesignPoint::from_json(&partial, &self.frozen.to_string()).map_err(input)?
            }
            _ => DesignPoint::new(),
        };
        let mut out = DesignPoint::new();
        for k in &full.knobs {
            if let Some(v) = searched.get(&k.name).or_else(|| frozen.get(&k.name)) {
                out.set(k.name.clone(), v.to_vec());
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchLog {
    pub header: LogHeader,
    pub records: Vec<StepRecord>,
    /// Seconds since the start of the run at which each record completed.
    pub wall_time: Vec<f64>,
}

impl SearchLog {
    /// Highest-reward record; the earliest wins ties.
    pub fn best(&self) -> Option<&StepRecord> {
        self.records.iter().fold(None, |acc: Option<&StepRecord>, r| match acc {
            Some(b) if b.reward >= r.reward => Some(b),
            _ => Some(r),
        })
    }

    pub fn best_point(&self) -> Result<Option<DesignPoint>, HarnessError> {
        self.best().map(|r| self.header.full_point(&r.action)).transpose()
    }

    pub fn steps(&self) -> usize {
        self.records.last().map_or(0, |r| r.step + 1)
    }
}

struct Writer {
    log: File,
    wall: File,
}

impl Writer {
    fn create(dir: &Path, header: &LogHeader, records: &[StepRecord], wall: &[f64]) -> Result<Writer, HarnessError> {
        let log_path = dir.join(LOG_FILE);
        let wall_path = dir.join(WALL_TIME_FILE);
        let mut log = File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
        let mut wt = File::create(&wall_path).map_err(|e| io_err(&wall_path, e))?;
        let line = serde_json::to_string(header).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        writeln!(log, "{line}").map_err(|e| io_err(&log_path, e))?;
        writeln!(wt, "eval,wall_time").map_err(|e| io_err(&wall_path, e))?;
        let mut w = Writer { log, wall: wt };
        for (r, t) in records.iter().zip(wall) {
            w.append(r, *t)?;
        }
        Ok(w)
    }

    fn append(&mut self, r: &StepRecord, wall: f64) -> Result<(), HarnessError> {
        let line = serde_json::to_string(r).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        writeln!(self.log, "{line}").map_err(|e| HarnessError::Io(e.to_string()))?;
        writeln!(self.wall, "{},{wall}", r.eval).map_err(|e| HarnessError::Io(e.to_string()))?;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), HarnessError> {
        self.log.flush().and_then(|_| self.wall.flush()).map_err(|e| HarnessError::Io(e.to_string()))
    }
}

/// Read a log written by `run_search`. A torn final line is dropped.
pub fn read_log(path: impl AsRef<Path>) -> Result<SearchLog, HarnessError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| HarnessError::Input(format!("{}: empty log", path.display())))?
        .map_err(|e| io_err(path, e))?;
    let header: LogHeader =
        serde_json::from_str(&first).map_err(|e| HarnessError::Input(format!("{}: bad header: {e}", path.display())))?;
    if header.format != LOG_FORMAT {
        return Err(HarnessError::Input(format!("{}: unsupported log format `{}`", path.display(), header.format)));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        match serde_json::from_str::<StepRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => break,
        }
    }
    let wall_path = path.with_file_name(WALL_TIME_FILE);
    let mut wall = vec![f64::NAN; records.len()];
    if let Ok(f) = File::open(&wall_path) {
        for line in BufReader::new(f).lines().skip(1).map_while(Result::ok) {
            if let Some((e, t)) = line.split_once(',') {
                if let (Ok(e), Ok(t)) = (e.parse::<usize>(), t.parse::<f64>()) {
                    if e < wall.len() {
                        wall[e] = t;
                    }
                }
            }
        }
    }
    Ok(SearchLog { header, records, wall_time: wall })
}

/// Records of a previous run of the same experiment, cut back to the last
/// complete agent step.
fn previous_records(exp: &Experiment, dir: &Path) -> Result<(Vec<StepRecord>, Vec<f64>), HarnessError> {
    let path = dir.join(LOG_FILE);
    if !path.is_file() {
        return Ok((Vec::new(), Vec::new()));
    }
    let log = read_log(&path)?;
    // the budget may grow between runs
    let mut expected = LogHeader::new(exp);
    expected.config.budget = log.header.config.budget;
    if log.header != expected {
        return Err(HarnessError::Input(format!(
            "{} belongs to a different experiment; remove it or change output_dir",
            path.display()
        )));
    }
    Ok((log.records, log.wall_time))
}

/// Propose, evaluate, observe until the budget is spent. With an output
/// directory the log is written as it grows and `resume` continues an
/// interrupted run: logged steps are replayed through the agent and must
/// match its proposals.
pub fn run_search(exp: &Experiment, resume: bool) -> Result<SearchLog, HarnessError> {
    let budget = exp.config.budget;
    let mut agent = make_agent(&exp.config.agent, exp.space.clone()).map_err(input)?;
    let header = LogHeader::new(exp);
    let dir = exp.ensure_output_dir()?;
    let (prior, prior_wall) = match (dir, resume) {
        (Some(d), true) => previous_records(exp, d)?,
        _ => (Vec::new(), Vec::new()),
    };

    let mut records: Vec<StepRecord> = Vec::new();
    let mut wall: Vec<f64> = Vec::new();
    let mut best = 0.0f64;
    let mut step = 0usize;
    let mut replaying = !prior.is_empty();
    let pool = exp.thread_pool()?;
    let mut writer: Option<Writer> = None;
    let start = Instant::now();
    let offset = prior_wall.iter().copied().filter(|t| t.is_finite()).fold(0.0, f64::max);

    while records.len() < budget {
        let mut batch = agent.propose();
        if batch.is_empty() {
            return Err(HarnessError::Runtime(format!("agent proposed nothing at step {step}")));
        }
        batch.truncate(budget - records.len());
        let n = records.len();

        let replay = replaying && prior.len() >= n + batch.len();
        let rewards: Vec<(f64, bool, f64)> = if replay {
            let logged = &prior[n..n + batch.len()];
            if logged.iter().zip(&batch).any(|(r, a)| r.action != *a || r.step != step) {
                return Err(HarnessError::Input(
                    "logged actions differ from the agent's proposals; cannot resume".into(),
                ));
            }
            logged.iter().map(|r| (r.reward, r.valid, r.latency)).collect()
        } else {
            if replaying {
                replaying = false;
            }
            let evals: Vec<Evaluation> =
                pool.install(|| batch.par_iter().map(|a| exp.evaluator.evaluate_action(a)).collect());
            evals.iter().map(|e| (e.reward, e.valid, e.latency)).collect()
        };
        if writer.is_none() && !replay {
            if let Some(d) = dir {
                writer = Some(Writer::create(d, &header, &records, &wall)?);
            }
        }

        let r: Vec<f64> = rewards.iter().map(|x| x.0).collect();
        agent.observe(&batch, &r).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        for (i, (a, (reward, valid, latency))) in batch.into_iter().zip(rewards).enumerate() {
            best = best.max(reward);
            let rec = StepRecord { step, eval: n + i, action: a, reward, valid, latency, best_so_far: best };
            let t = if replay { prior_wall.get(n + i).copied().unwrap_or(f64::NAN) } else { offset + start.elapsed().as_secs_f64() };
            if let Some(w) = writer.as_mut() {
                w.append(&rec, t)?;
            }
            records.push(rec);
            wall.push(t);
        }
        if let Some(w) = writer.as_mut() {
            w.flush()?;
        }
        step += 1;
    }
    if writer.is_none() {
        if let Some(d) = dir {
            Writer::create(d, &header, &records, &wall)?.flush()?;
        }
    }
    Ok(SearchLog { header, records, wall_time: wall })
}
