//! Search agents. They see only an [`ActionSpaceSpec`], never knob names.

mod aco;
mod bo;
mod ga;
pub mod gp;
mod rw;
pub mod space;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aco::AntColony;
pub use bo::BayesOpt;
pub use ga::Genetic;
pub use rw::RandomWalk;
pub use space::{configure_action_space, ActionSpaceSpec, Component, ConstraintSpec, Relation, Slot, SlotKind};

use crate::schema::ActionVector;

/// Attempts to find a feasible, not yet proposed vector before emitting
/// the last candidate as-is.
pub const RESAMPLE_RETRIES: usize = 64;
/// Draws from the agent's own generator used to fix one violated component.
const REPAIR_DRAWS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("observed {rewards} rewards for {proposals} proposals")]
    LengthMismatch { proposals: usize, rewards: usize },
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    RW,
    GA,
    ACO,
    BO,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::RW, AgentKind::GA, AgentKind::ACO, AgentKind::BO];
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RW" => Ok(AgentKind::RW),
            "GA" => Ok(AgentKind::GA),
            "ACO" => Ok(AgentKind::ACO),
            "BO" => Ok(AgentKind::BO),
            _ => Err(format!("unknown agent `{s}`")),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub seed: u64,
    /// RW and ACO: proposals per step. GA: population kept.
    pub population_size: usize,
    pub mutation_prob: f64,
    pub greediness: f64,
    pub evaporation_rate: f64,
    /// Lower bound on any pheromone entry.
    pub pheromone_floor: f64,
    /// Seeds the BO candidate pool; defaults to `seed`.
    pub surrogate_seed: Option<u64>,
    /// Proposals per step; overrides the per-agent default.
    pub batch_size: Option<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            kind: AgentKind::GA,
            seed: 0,
            population_size: 16,
            mutation_prob: 0.05,
            greediness: 1.0,
            evaporation_rate: 0.1,
            pheromone_floor: 1e-2,
            surrogate_seed: None,
            batch_size: None,
        }
    }
}

impl AgentConfig {
    pub fn new(kind: AgentKind, seed: u64) -> AgentConfig {
        AgentConfig { kind, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let err = |m: &str| Err(AgentError::Config(m.to_string()));
        if self.population_size == 0 {
            return err("population_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return err("mutation_prob must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.evaporation_rate) {
            return err("evaporation_rate must lie in [0, 1]");
        }
        if !(self.greediness >= 0.0 && self.greediness.is_finite()) {
            return err("greediness must be non-negative");
        }
        if !(self.pheromone_floor >= 0.0) {
            return err("pheromone_floor must be non-negative");
        }
        if self.batch_size == Some(0) {
            return err("batch_size must be at least 1");
        }
        Ok(())
    }

    pub fn batch(&self) -> usize {
        self.batch_size.unwrap_or(match self.kind {
            AgentKind::BO => 4,
            _ => self.population_size,
        })
    }
}

/// Propose/observe contract shared by every agent.
pub trait Agent: Send {
    fn kind(&self) -> AgentKind;
    fn propose(&mut self) -> Vec<ActionVector>;
    fn observe(&mut self, proposals: &[ActionVector], rewards: &[f64]) -> Result<(), AgentError>;
    fn best(&self) -> Option<(&ActionVector, f64)>;
    fn steps(&self) -> usize;
}

pub fn make_agent(config: &AgentConfig, space: ActionSpaceSpec) -> Result<Box<dyn Agent>, AgentError> {
    config.validate()?;
    Ok(match config.kind {
        AgentKind::RW => Box::new(RandomWalk::new(config, space)),
        AgentKind::GA => Box::new(Genetic::new(config, space)),
        AgentKind::ACO => Box::new(AntColony::new(config, space)),
        AgentKind::BO => Box::new(BayesOpt::new(config, space)),
    })
}

/// State every agent carries: space, rng, proposal history and best-so-far.
pub(crate) struct Common {
    pub space: ActionSpaceSpec,
    pub rng: ChaCha8Rng,
    pub seen: HashSet<ActionVector>,
    pub best: Option<(ActionVector, f64)>,
    pub steps: usize,
}

impl Common {
    pub fn new(space: ActionSpaceSpec, seed: u64) -> Common {
        Common { space, rng: ChaCha8Rng::seed_from_u64(seed), seen: HashSet::new(), best: None, steps: 0 }
    }

    /// Draw from `gen`, repairing violated constraint components with
    /// further draws from `gen`, and skipping vectors proposed before.
    pub fn draw(&mut self, mut gen: impl FnMut(&mut ChaCha8Rng) -> Vec<usize>) -> ActionVector {
        let mut last = None;
        for _ in 0..RESAMPLE_RETRIES {
            let mut c = gen(&mut self.rng);
            for comp in &self.space.components {
                if self.space.component_feasible(comp, &c) {
                    continue;
                }
                let mut fixed = false;
                for _ in 0..REPAIR_DRAWS {
                    let d = gen(&mut self.rng);
                    for &s in &comp.slots {
                        c[s] = d[s];
                    }
                    if self.space.component_feasible(comp, &c) {
                        fixed = true;
                        break;
                    }
                }
                if !fixed {
                    self.space.resample_component(comp, &mut c, &mut self.rng);
                }
            }
            let a = ActionVector(c);
            if !self.seen.contains(&a) {
                self.seen.insert(a.clone());
                return a;
            }
            last = Some(a);
        }
        last.expect("at least one draw")
    }

    pub fn check(&self, proposals: &[ActionVector], rewards: &[f64]) -> Result<(), AgentError> {
        if proposals.len() != rewards.len() {
            return Err(AgentError::LengthMismatch { proposals: proposals.len(), rewards: rewards.len() });
        }
        Ok(())
    }

    pub fn record(&mut self, proposals: &[ActionVector], rewards: &[f64]) {
        for (p, &r) in proposals.iter().zip(rewards) {
            self.seen.insert(p.clone());
            if self.best.as_ref().map_or(true, |(_, b)| r > *b) {
                self.best = Some((p.clone(), r));
            }
        }
        self.steps += 1;
    }

    pub fn best(&self) -> Option<(&ActionVector, f64)> {
        self.best.as_ref().map(|(a, r)| (a, *r))
    }
}
