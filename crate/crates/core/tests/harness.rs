use std::path::Path;

use dse_core::agents::{AgentConfig, AgentKind};
use dse_core::harness::{
    best_config_report, export, read_log, run_exhaustive, run_search, Experiment, ExperimentConfig, ExportFormat,
    HarnessError, Mode, LOG_FILE,
};
use dse_core::schema::{check_constraints, Stack};

fn table4(kind: AgentKind, budget: usize, out: Option<&Path>) -> Experiment {
    let mut c = ExperimentConfig::new("table4", "gpt3-175b", "system2");
    c.agent = AgentConfig::new(kind, 3);
    c.budget = budget;
    c.output_dir = out.map(|p| p.display().to_string());
    Experiment::from_config(c, Path::new(".")).unwrap()
}

#[test]
fn evaluation_count_follows_the_budget() {
    // RW proposes 16 per step
    for (budget, steps) in [(1, 1), (15, 1), (16, 1), (17, 2), (100, 7), (1200, 75)] {
        let log = run_search(&table4(AgentKind::RW, budget, None), false).unwrap();
        assert_eq!(log.records.len(), budget);
        assert_eq!(log.steps(), steps, "budget {budget}");
        for (i, r) in log.records.iter().enumerate() {
            assert_eq!(r.eval, i);
            assert_eq!(r.step, i / 16);
        }
    }
}

#[test]
fn every_agent_respects_a_budget_of_one() {
    for kind in AgentKind::ALL {
        let log = run_search(&table4(kind, 1, None), false).unwrap();
        assert_eq!(log.records.len(), 1, "{kind}");
    }
}

#[test]
fn logs_are_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let exp = table4(AgentKind::GA, 200, Some(dir.path()));
    let first = run_search(&exp, false).unwrap();
    let bytes = std::fs::read(dir.path().join(LOG_FILE)).unwrap();
    let second = run_search(&exp, false).unwrap();
    assert_eq!(bytes, std::fs::read(dir.path().join(LOG_FILE)).unwrap());
    assert_eq!(first.records, second.records);

    let log = read_log(dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(log.records, first.records);
    let full = log.header.full_schema().unwrap();
    for r in &log.records {
        let p = log.header.full_point(&r.action).unwrap();
        let e = exp.evaluator.evaluate(&p);
        assert_eq!(e.reward.to_bits(), r.reward.to_bits());
        assert_eq!(e.valid, r.valid);
        assert_eq!(check_constraints(&full, &p).unwrap().valid, true);
    }
}

#[test]
fn resume_after_a_crash_reproduces_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(LOG_FILE);
    let exp = table4(AgentKind::ACO, 100, Some(dir.path()));
    run_search(&exp, false).unwrap();
    let whole = std::fs::read_to_string(&path).unwrap();

    // keep the header and 37 records, then a torn line
    let mut cut: String = whole.lines().take(38).map(|l| format!("{l}\n")).collect();
    cut.push_str(&whole.lines().nth(38).unwrap()[..20]);
    std::fs::write(&path, cut).unwrap();
    run_search(&exp, true).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), whole);

    // a larger budget continues where the finished run stopped
    let longer = table4(AgentKind::ACO, 150, Some(dir.path()));
    let resumed = run_search(&longer, true).unwrap();
    let fresh_dir = tempfile::tempdir().unwrap();
    let fresh = run_search(&table4(AgentKind::ACO, 150, Some(fresh_dir.path())), false).unwrap();
    assert_eq!(resumed.records, fresh.records);
}

#[test]
fn resume_refuses_a_different_experiment() {
    let dir = tempfile::tempdir().unwrap();
    run_search(&table4(AgentKind::GA, 20, Some(dir.path())), false).unwrap();
    let err = run_search(&table4(AgentKind::RW, 20, Some(dir.path())), true).unwrap_err();
    assert!(matches!(err, HarnessError::Input(_)));
}

#[test]
fn export_writes_one_row_per_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let log = run_search(&table4(AgentKind::RW, 1200, Some(dir.path())), false).unwrap();
    let out = dir.path().join("csv");
    export(&log, ExportFormat::Csv, &out).unwrap();
    let conv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().count(), 1201);
    assert_eq!(conv.lines().next().unwrap(), "step,reward,best_so_far,valid");

    let mut empty = log.clone();
    empty.records.clear();
    let out = dir.path().join("empty");
    export(&empty, ExportFormat::Csv, &out).unwrap();
    assert_eq!(std::fs::read_to_string(out.join("convergence.csv")).unwrap().lines().count(), 1);
    export(&empty, ExportFormat::Json, &out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(v, serde_json::json!([]));

    let out = dir.path().join("json");
    export(&log, ExportFormat::Json, &out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1200);
}

#[test]
fn best_config_report_covers_every_stack() {
    let log = run_search(&table4(AgentKind::GA, 64, None), false).unwrap();
    let report = best_config_report(&log).unwrap();
    for stack in [Stack::Network, Stack::Collective, Stack::Workload] {
        assert!(report.iter().any(|e| e.stack == stack.as_str()), "{stack} missing");
    }
    assert!(report.iter().any(|e| e.knob == "tp (derived)"));
    let order: Vec<&str> = report.iter().map(|e| e.stack.as_str()).collect();
    let first_workload = order.iter().position(|s| *s == "workload").unwrap();
    assert!(order[..first_workload].iter().all(|s| *s != "workload"));
}

#[test]
fn exhaustive_refuses_large_spaces() {
    let err = run_exhaustive(&table4(AgentKind::GA, 1, None)).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("dse search"), "{err}");
}

#[test]
fn restricted_modes_search_only_their_stack() {
    for (mode, stack) in [
        (Mode::WorkloadOnly, Stack::Workload),
        (Mode::CollectiveOnly, Stack::Collective),
        (Mode::NetworkOnly, Stack::Network),
    ] {
        let mut c = ExperimentConfig::new("table4", "gpt3-175b", "system2");
        c.mode = mode.clone();
        c.budget = 40;
        let exp = Experiment::from_config(c, Path::new(".")).unwrap();
        assert!(!exp.schema().knobs.is_empty());
        assert!(exp.schema().knobs.iter().all(|k| k.stack == stack), "{mode}");
        assert_eq!(exp.schema().knobs.len() + exp.restriction.frozen.len(), exp.full_schema.knobs.len());
        let log = run_search(&exp, false).unwrap();
        for r in &log.records {
            let p = log.header.full_point(&r.action).unwrap();
            for k in &exp.full_schema.knobs {
                if k.stack != stack {
                    assert_eq!(p.get(&k.name), exp.restriction.frozen.get(&k.name), "{mode}: {} moved", k.name);
                }
            }
        }
    }
}
