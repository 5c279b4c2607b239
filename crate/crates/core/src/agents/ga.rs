use rand::Rng;

use super::{ActionSpaceSpec, Agent, AgentConfig, AgentError, AgentKind, Common};
use crate::schema::ActionVector;

/// Steady-state genetic algorithm: binary tournaments, uniform crossover,
/// per-slot mutation, offspring replace the worst members.
pub struct Genetic {
    common: Common,
    population: Vec<(ActionVector, f64)>,
    capacity: usize,
    observed: usize,
    mutation_prob: f64,
    batch: usize,
}

impl Genetic {
    pub fn new(config: &AgentConfig, space: ActionSpaceSpec) -> Genetic {
        Genetic {
            common: Common::new(space, config.seed),
            population: Vec::new(),
            capacity: config.population_size,
            observed: 0,
            mutation_prob: config.mutation_prob,
            batch: config.batch(),
        }
    }

    pub fn population(&self) -> &[(ActionVector, f64)] {
        &self.population
    }
}

fn tournament<'a, R: Rng>(pop: &'a [(ActionVector, f64)], rng: &mut R) -> &'a ActionVector {
    let a = &pop[rng.gen_range(0..pop.len())];
    let b = &pop[rng.gen_range(0..pop.len())];
    if b.1 > a.1 {
        &b.0
    } else {
        &a.0
    }
}

impl Agent for Genetic {
    fn kind(&self) -> AgentKind {
        AgentKind::GA
    }

    fn propose(&mut self) -> Vec<ActionVector> {
        let space = self.common.space.clone();
        if self.observed < self.capacity || self.population.is_empty() {
            return (0..self.batch).map(|_| self.common.draw(|rng| space.sample_feasible(rng))).collect();
        }
        let pop = std::mem::take(&mut self.population);
        let pm = self.mutation_prob;
        let out = (0..self.batch)
            .map(|_| {
                self.common.draw(|rng| {
                    let x = tournament(&pop, rng);
                    let y = tournament(&pop, rng);
                    x.0.iter()
                        .zip(&y.0)
                        .zip(&space.slots)
                        .map(|((&a, &b), slot)| {
                            let v = if rng.gen_bool(0.5) { a } else { b };
                            if pm > 0.0 && rng.gen_bool(pm) {
                                rng.gen_range(0..slot.count)
                            } else {
                                v
                            }
                        })
                        .collect()
                })
            })
            .collect();
        self.population = pop;
        out
    }

    fn observe(&mut self, proposals: &[ActionVector], rewards: &[f64]) -> Result<(), AgentError> {
        self.common.check(proposals, rewards)?;
        self.common.record(proposals, rewards);
        self.observed += proposals.len();
        for (p, &r) in proposals.iter().zip(rewards) {
            if self.population.iter().any(|(q, _)| q == p) {
                continue;
            }
            self.population.push((p.clone(), r));
        }
        // stable sort keeps earlier members ahead on ties
        self.population.sort_by(|a, b| b.1.total_cmp(&a.1));
        self.population.truncate(self.capacity);
        Ok(())
    }

    fn best(&self) -> Option<(&ActionVector, f64)> {
        self.common.best()
    }

    fn steps(&self) -> usize {
        self.common.steps
    }
}
