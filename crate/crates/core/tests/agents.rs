use std::path::Path;

use dse_core::agents::{configure_action_space, make_agent, AgentConfig, AgentError, AgentKind};
use dse_core::harness::{resolve_schema, run_exhaustive, run_search, Experiment};
use dse_core::schema::{ActionVector, Schema};

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy"))
}

fn toy(name: &str, kind: AgentKind, seed: u64, budget: usize) -> Experiment {
    let mut exp = Experiment::load(fixtures().join(format!("{name}.experiment.json"))).unwrap();
    exp.config.agent = AgentConfig::new(kind, seed);
    exp.config.budget = budget;
    Experiment::from_config(exp.config, fixtures()).unwrap()
}

/// Smooth synthetic reward over the raw action, peaked at a fixed vector.
fn synthetic(a: &ActionVector) -> f64 {
    let target = [3usize, 1, 0, 2, 1, 3, 0, 2];
    let d: usize = a.0.iter().zip(target.iter().cycle()).map(|(x, t)| x.abs_diff(*t)).sum();
    1.0 / (1.0 + d as f64)
}

fn run_synthetic(schema: &Schema, kind: AgentKind, seed: u64, steps: usize) -> (Vec<Vec<ActionVector>>, Vec<f64>) {
    let space = configure_action_space(schema);
    let mut agent = make_agent(&AgentConfig::new(kind, seed), space.clone()).unwrap();
    let mut proposals = Vec::new();
    let mut best = Vec::new();
    for _ in 0..steps {
        let batch = agent.propose();
        assert!(!batch.is_empty());
        for a in &batch {
            assert!(space.is_feasible(&a.0), "{kind}: infeasible proposal {a}");
        }
        let rewards: Vec<f64> = batch.iter().map(synthetic).collect();
        agent.observe(&batch, &rewards).unwrap();
        best.push(agent.best().unwrap().1);
        proposals.push(batch);
    }
    (proposals, best)
}

#[test]
fn agents_propose_feasible_actions_and_keep_a_monotone_best() {
    let schema = resolve_schema("table4").unwrap();
    for kind in AgentKind::ALL {
        let steps = if kind == AgentKind::BO { 10 } else { 30 };
        let (_, best) = run_synthetic(&schema, kind, 5, steps);
        assert!(best.windows(2).all(|w| w[1] >= w[0]), "{kind}: {best:?}");
    }
}

#[test]
fn same_seed_same_proposals() {
    let schema = resolve_schema("table1").unwrap();
    for kind in AgentKind::ALL {
        let a = run_synthetic(&schema, kind, 11, 6);
        let b = run_synthetic(&schema, kind, 11, 6);
        assert_eq!(a, b, "{kind}");
        let c = run_synthetic(&schema, kind, 12, 6);
        assert_ne!(a.0, c.0, "{kind}: seed ignored");
    }
}

#[test]
fn mismatched_observation_is_an_error() {
    let space = configure_action_space(&resolve_schema("table1").unwrap());
    for kind in AgentKind::ALL {
        let mut agent = make_agent(&AgentConfig::new(kind, 0), space.clone()).unwrap();
        let batch = agent.propose();
        let err = agent.observe(&batch, &[]).unwrap_err();
        assert_eq!(err, AgentError::LengthMismatch { proposals: batch.len(), rewards: 0 });
    }
}

#[test]
fn bad_configs_are_rejected() {
    let space = configure_action_space(&resolve_schema("table1").unwrap());
    let bad = [
        AgentConfig { population_size: 0, ..Default::default() },
        AgentConfig { mutation_prob: 1.5, ..Default::default() },
        AgentConfig { evaporation_rate: -0.1, ..Default::default() },
        AgentConfig { batch_size: Some(0), ..Default::default() },
    ];
    for c in bad {
        assert!(matches!(make_agent(&c, space.clone()), Err(AgentError::Config(_))));
    }
}

#[test]
fn population_agents_find_the_toy_optimum() {
    let optimum = run_exhaustive(&toy("toy_a", AgentKind::GA, 0, 1)).unwrap().best_reward();
    for kind in [AgentKind::GA, AgentKind::ACO] {
        for seed in 0..3 {
            let log = run_search(&toy("toy_a", kind, seed, 2000), false).unwrap();
            let best = log.best().unwrap().reward;
            assert_eq!(best, optimum, "{kind} seed {seed}");
        }
    }
}

#[test]
fn random_walk_gets_close_on_the_toy() {
    let optimum = run_exhaustive(&toy("toy_a", AgentKind::RW, 0, 1)).unwrap().best_reward();
    let log = run_search(&toy("toy_a", AgentKind::RW, 0, 2000), false).unwrap();
    assert!(log.best().unwrap().reward >= 0.95 * optimum);
    assert!(log.records.windows(2).all(|w| w[1].best_so_far >= w[0].best_so_far));
}
