use rand::Rng;

use super::{ActionSpaceSpec, Agent, AgentConfig, AgentError, AgentKind, Common};
use crate::schema::ActionVector;

/// Ant colony with an independent pheromone table per slot. Each step the
/// tables evaporate, every ant deposits reward/best on the values it chose,
/// and the best-so-far vector deposits once more.
pub struct AntColony {
    common: Common,
    pheromone: Vec<Vec<f64>>,
    greediness: f64,
    evaporation: f64,
    floor: f64,
    batch: usize,
}

impl AntColony {
    pub fn new(config: &AgentConfig, space: ActionSpaceSpec) -> AntColony {
        let pheromone = space.slots.iter().map(|s| vec![1.0; s.count]).collect();
        AntColony {
            common: Common::new(space, config.seed),
            pheromone,
            greediness: config.greediness,
            evaporation: config.evaporation_rate,
            floor: config.pheromone_floor,
            batch: config.batch(),
        }
    }

    pub fn pheromone(&self) -> &[Vec<f64>] {
        &self.pheromone
    }
}

fn roulette<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return rng.gen_range(0..weights.len());
    }
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

impl Agent for AntColony {
    fn kind(&self) -> AgentKind {
        AgentKind::ACO
    }

    fn propose(&mut self) -> Vec<ActionVector> {
        let weights: Vec<Vec<f64>> = self
            .pheromone
            .iter()
            .map(|row| row.iter().map(|t| t.powf(self.greediness)).collect())
            .collect();
        (0..self.batch)
            .map(|_| self.common.draw(|rng| weights.iter().map(|w| roulette(w, rng)).collect()))
            .collect()
    }

    fn observe(&mut self, proposals: &[ActionVector], rewards: &[f64]) -> Result<(), AgentError> {
        self.common.check(proposals, rewards)?;
        self.common.record(proposals, rewards);
        let keep = 1.0 - self.evaporation;
        for row in &mut self.pheromone {
            for t in row.iter_mut() {
                *t *= keep;
            }
        }
        let Some((best, best_reward)) = self.common.best.clone() else { return Ok(()) };
        if best_reward > 0.0 {
            let mut deposit = |a: &ActionVector, amount: f64| {
                for (row, &i) in self.pheromone.iter_mut().zip(&a.0) {
                    if let Some(t) = row.get_mut(i) {
                        *t += amount;
                    }
                }
            };
            for (p, &r) in proposals.iter().zip(rewards) {
                if r > 0.0 {
                    deposit(p, r / best_reward);
                }
            }
            deposit(&best, 1.0);
        }
        for row in &mut self.pheromone {
            for t in row.iter_mut() {
                *t = t.max(self.floor);
            }
        }
        Ok(())
    }

    fn best(&self) -> Option<(&ActionVector, f64)> {
        self.common.best()
    }

    fn steps(&self) -> usize {
        self.common.steps
    }
}
