use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dse_core::harness::{
    best_config_report, export, read_log, resolve_schema, run_exhaustive, run_search, Experiment, ExportFormat,
    HarnessError,
};
use dse_core::objective::{Evaluator, Objective, WorkloadMode};
use dse_core::schema::{constrained_cardinality, raw_cardinality, Cardinality, DesignPoint};
use dse_core::sim::SystemFixture;
use dse_core::workload::ModelSpec;

#[derive(Parser)]
#[command(name = "dse", version, about = "Design-space exploration for distributed ML systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a schema file.
    Validate { schema: String },
    /// Count the points of a schema.
    Cardinality {
        schema: String,
        /// Count only points that satisfy every constraint.
        #[arg(long)]
        constrained: bool,
    },
    /// Evaluate one design point.
    Simulate {
        schema: String,
        point: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        system: String,
        #[arg(long, default_value = "perf_per_bw")]
        objective: Objective,
        /// training, chat or qa
        #[arg(long, default_value = "training")]
        workload: String,
    },
    /// Run an agent search described by an experiment file.
    Search {
        experiment: PathBuf,
        /// Overrides the agent seed.
        #[arg(long, env = "DSE_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<usize>,
        /// Continue from an existing log in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate every valid point of an experiment's schema.
    Exhaustive { experiment: PathBuf },
    /// Write convergence and best-config tables from a search log.
    Export {
        log: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        /// Output directory; defaults to the log's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Scientific notation with three significant digits, e.g. `7.69e13`.
fn scientific(digits: &str) -> String {
    match digits.parse::<f64>() {
        Ok(v) if v != 0.0 => format!("{v:.2e}"),
        _ => digits.to_string(),
    }
}

fn workload_mode(name: &str) -> Result<WorkloadMode, HarnessError> {
    match name {
        "training" => Ok(WorkloadMode::Training),
        "chat" => Ok(WorkloadMode::CHAT),
        "qa" => Ok(WorkloadMode::QA),
        _ => Err(HarnessError::Input(format!("unknown workload `{name}` (expected training, chat or qa)"))),
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let input = |e: &dyn std::fmt::Display| HarnessError::Input(e.to_string());
    match cli.command {
        Command::Validate { schema } => {
            let s = resolve_schema(&schema)?;
            println!(
                "ok: {} knobs, {} action slots, {} constraints, npu_count {}",
                s.knobs.len(),
                s.slot_count(),
                s.constraints.len(),
                s.npu_count
            );
        }
        Command::Cardinality { schema, constrained } => {
            let s = resolve_schema(&schema)?;
            let n = if constrained {
                match constrained_cardinality(&s, u64::MAX) {
                    Cardinality::Exact(n) => n,
                    Cardinality::TooLarge => {
                        println!("more than {}", u64::MAX);
                        return Ok(());
                    }
                }
            } else {
                raw_cardinality(&s)
            };
            let digits = n.to_string();
            println!("{digits}");
            println!("{}", scientific(&digits));
        }
        Command::Simulate { schema, point, model, system, objective, workload } => {
            let s = resolve_schema(&schema)?;
            let text = std::fs::read_to_string(&point).map_err(|e| HarnessError::Input(format!("{}: {e}", point.display())))?;
            let p = DesignPoint::from_json(&s, &text).map_err(|e| input(&e))?;
            let model = ModelSpec::resolve(&model).map_err(|e| input(&e))?;
            let system = SystemFixture::resolve(&system).map_err(|e| input(&e))?;
            let mut schema = s;
            schema.npu_count = system.npu_count;
            let mut ev = Evaluator::new(schema, model, system, objective);
            ev.mode = workload_mode(&workload)?;
            let e = ev.evaluate(&p);
            print_json(&serde_json::to_value(&e).map_err(|e| HarnessError::Runtime(e.to_string()))?);
        }
        Command::Search { experiment, seed, budget, resume } => {
            let mut exp = Experiment::load(&experiment)?;
            if seed.is_some() || budget.is_some() {
                let mut config = exp.config.clone();
                if let Some(s) = seed {
                    config.agent.seed = s;
                }
                if let Some(b) = budget {
                    config.budget = b;
                }
                let base = experiment.parent().unwrap_or(Path::new("."));
                exp = Experiment::from_config(config, base)?;
            }
            let log = run_search(&exp, resume)?;
            let best = log.best();
            print_json(&serde_json::json!({
                "evaluations": log.records.len(),
                "steps": log.steps(),
                "valid": log.records.iter().filter(|r| r.valid).count(),
                "best": best,
                "best_point": log.best_point()?.map(|p| p.to_json_value()),
                "log": exp.output_dir.as_ref().map(|d| d.join(dse_core::harness::LOG_FILE)),
            }));
        }
        Command::Exhaustive { experiment } => {
            let exp = Experiment::load(&experiment)?;
            let r = run_exhaustive(&exp)?;
            print_json(&serde_json::json!({
                "points": r.rows.len(),
                "valid": r.valid_count(),
                "best": r.best_row(),
                "best_point": r.best_point.as_ref().map(DesignPoint::to_json_value),
                "equivalent": r.equivalent.len(),
                "near_optimal": r.near_optimal.len(),
                "near_optimal_band": r.band,
                "latency_spread": r.latency_spread,
            }));
        }
        Command::Export { log, format, out } => {
            let l = read_log(&log)?;
            let dir = out.unwrap_or_else(|| log.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")));
            let files = export(&l, format, &dir)?;
            for f in files {
                println!("{}", f.display());
            }
            for e in best_config_report(&l)? {
                println!("{:<10} {:<24} {}", e.stack, e.knob, e.value);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
