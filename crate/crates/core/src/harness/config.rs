use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::restrict::{restrict_schema, Mode, Restriction};
use super::{input, io_err, resolve_schema, HarnessError};
use crate::agents::{configure_action_space, ActionSpaceSpec, AgentConfig};
use crate::objective::{Evaluator, Objective, WorkloadMode, DEFAULT_MEMORY_LIMIT_GB};
use crate::schema::Schema;
use crate::sim::{CostCoefficients, SystemFixture};
use crate::workload::{LayerTemplate, MemoryModel, ModelSpec};

fn default_budget() -> usize {
    1200
}

fn default_memory_limit() -> f64 {
    DEFAULT_MEMORY_LIMIT_GB
}

fn default_global_batch() -> u64 {
    1024
}

fn default_cap() -> u64 {
    1_000_000
}

fn default_objective() -> Objective {
    Objective::PerfPerBw
}

/// An experiment file. Fixture references are built-in names or paths
/// relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub schema: String,
    pub model: String,
    pub system: String,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub mode: Mode,
    /// Overrides for the system's knob defaults.
    #[serde(default)]
    pub defaults: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default = "default_memory_limit")]
    pub memory_limit_gb: f64,
    #[serde(default)]
    pub workload: WorkloadMode,
    #[serde(default = "default_global_batch")]
    pub global_batch: u64,
    #[serde(default = "default_cap")]
    pub exhaustive_cap: u64,
    /// Evaluation threads; defaults to available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concurrency: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_template: Option<String>,
    #[serde(default)]
    pub memory_model: MemoryModel,
    #[serde(default)]
    pub cost: CostCoefficients,
}

impl ExperimentConfig {
    pub fn new(schema: &str, model: &str, system: &str) -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({"schema": schema, "model": model, "system": system}))
            .expect("minimal config deserializes")
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Input(format!("experiment file: {e}")))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.budget == 0 {
            return Err(HarnessError::Input("budget must be at least 1".into()));
        }
        if !(self.memory_limit_gb > 0.0) {
            return Err(HarnessError::Input("memory_limit_gb must be positive".into()));
        }
        if self.global_batch == 0 {
            return Err(HarnessError::Input("global_batch must be positive".into()));
        }
        if self.concurrency == Some(0) {
            return Err(HarnessError::Input("concurrency must be at least 1".into()));
        }
        self.agent.validate().map_err(input)
    }
}

/// A loaded experiment: fixtures resolved, schema restricted, evaluator and
/// action space ready.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub full_schema: Schema,
    pub restriction: Restriction,
    pub evaluator: Arc<Evaluator>,
    pub space: ActionSpaceSpec,
    pub output_dir: Option<PathBuf>,
}

fn locate(base: &Path, reference: &str) -> String {
    let p = Path::new(reference);
    if p.is_relative() && base.join(p).is_file() {
        base.join(p).display().to_string()
    } else {
        reference.to_string()
    }
}

impl Experiment {
    pub fn load(path: impl AsRef<Path>) -> Result<Experiment, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
        let config = ExperimentConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Experiment::from_config(config, base)
    }

    pub fn from_config(config: ExperimentConfig, base_dir: &Path) -> Result<Experiment, HarnessError> {
        config.validate()?;
        let mut system = SystemFixture::resolve(&locate(base_dir, &config.system)).map_err(input)?;
        for (k, v) in &config.defaults {
            system.knobs.insert(k.clone(), v.clone());
        }
        let mut full_schema = resolve_schema(&locate(base_dir, &config.schema))?;
        full_schema.npu_count = system.npu_count;
        let model = ModelSpec::resolve(&locate(base_dir, &config.model)).map_err(input)?;

        let restriction = restrict_schema(&full_schema, &config.mode, &system.knobs)?;
        for w in &restriction.warnings {
            log::warn!("{w}");
        }

        let mut evaluator = Evaluator::new(full_schema.clone(), model, system, config.objective);
        evaluator.search_schema = restriction.schema.clone();
        evaluator.frozen = restriction.frozen.clone();
        evaluator.memory_limit = config.memory_limit_gb * 1e9;
        evaluator.mode = config.workload;
        evaluator.global_batch = config.global_batch;
        evaluator.memory_model = config.memory_model;
        evaluator.cost = config.cost;
        if let Some(t) = &config.layer_template {
            let p = locate(base_dir, t);
            evaluator.template = Arc::new(LayerTemplate::from_file(Path::new(&p)).map_err(input)?);
        }

        let space = configure_action_space(&restriction.schema);
        let output_dir = config.output_dir.as_ref().map(|d| {
            let p = Path::new(d);
            if p.is_relative() {
                base_dir.join(p)
            } else {
                p.to_path_buf()
            }
        });
        Ok(Experiment { config, full_schema, restriction, evaluator: Arc::new(evaluator), space, output_dir })
    }

    /// The search schema: the full schema minus frozen knobs.
    pub fn schema(&self) -> &Schema {
        &self.restriction.schema
    }

    pub(crate) fn ensure_output_dir(&self) -> Result<Option<&Path>, HarnessError> {
        match &self.output_dir {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
                Ok(Some(d.as_path()))
            }
            None => Ok(None),
        }
    }

    pub(crate) fn thread_pool(&self) -> Result<rayon::ThreadPool, HarnessError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.config.concurrency {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| HarnessError::Runtime(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::new("table4", "gpt3-175b", "system2");
        assert_eq!(c.budget, 1200);
        assert_eq!(c.objective, Objective::PerfPerBw);
        assert_eq!(c.mode, Mode::FullStack);
        assert_eq!(c.memory_limit_gb, 24.0);
    }

    #[test]
    fn rejects_unknown_fields_and_zero_budget() {
        assert!(ExperimentConfig::parse(r#"{"schema":"table4","model":"m","system":"s","bugdet":3}"#).is_err());
        let mut c = ExperimentConfig::new("table4", "gpt3-175b", "system2");
        c.budget = 0;
        assert!(matches!(Experiment::from_config(c, Path::new(".")), Err(HarnessError::Input(_))));
    }

    #[test]
    fn workload_only_experiment() {
        let mut c = ExperimentConfig::new("table4", "gpt3-175b", "system2");
        c.mode = Mode::WorkloadOnly;
        let e = Experiment::from_config(c, Path::new(".")).unwrap();
        assert_eq!(e.space.len(), 4);
        assert_eq!(e.full_schema.npu_count, 1024);
        assert_eq!(e.evaluator.frozen.len(), 7);
    }
}
