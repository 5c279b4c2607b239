use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gp::{expected_improvement, GaussianProcess};
use super::{ActionSpaceSpec, Agent, AgentConfig, AgentError, AgentKind, Common};
use crate::schema::ActionVector;

pub const POOL_SIZE: usize = 512;
/// Points kept in the surrogate: the best half and the most recent half.
pub const ACTIVE_SET: usize = 128;
const LENGTH_SCALES: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
const NOISE: f64 = 1e-6;
const XI: f64 = 1e-3;

/// Batch Bayesian optimization: GP surrogate on log-reward, expected
/// improvement over a pool of unseen feasible samples.
pub struct BayesOpt {
    common: Common,
    archive: Vec<(ActionVector, f64)>,
    pool_rng: ChaCha8Rng,
    batch: usize,
    initial: usize,
}

impl BayesOpt {
    pub fn new(config: &AgentConfig, space: ActionSpaceSpec) -> BayesOpt {
        let batch = config.batch();
        BayesOpt {
            common: Common::new(space, config.seed),
            archive: Vec::new(),
            pool_rng: ChaCha8Rng::seed_from_u64(config.surrogate_seed.unwrap_or(config.seed) ^ 0x9e37_79b9_7f4a_7c15),
            batch,
            initial: (2 * batch).max(8),
        }
    }

    pub fn archive(&self) -> &[(ActionVector, f64)] {
        &self.archive
    }

    fn active_set(&self) -> Vec<usize> {
        let n = self.archive.len();
        if n <= ACTIVE_SET {
            return (0..n).collect();
        }
        let mut by_reward: Vec<usize> = (0..n).collect();
        by_reward.sort_by(|&a, &b| self.archive[b].1.total_cmp(&self.archive[a].1).then(a.cmp(&b)));
        let mut chosen: Vec<usize> = by_reward[..ACTIVE_SET / 2].to_vec();
        let mut i = n;
        while chosen.len() < ACTIVE_SET && i > 0 {
            i -= 1;
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
        chosen.sort_unstable();
        chosen
    }

    /// Fit the surrogate on the active set; `None` until a valid point exists.
    pub fn surrogate(&self) -> Option<(GaussianProcess, f64)> {
        let idx = self.active_set();
        let logs: Vec<Option<f64>> =
            idx.iter().map(|&i| (self.archive[i].1 > 0.0).then(|| self.archive[i].1.ln())).collect();
        let floor = logs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return None;
        }
        let y: Vec<f64> = logs.iter().map(|v| v.unwrap_or(floor - 1.0)).collect();
        let x: Vec<Vec<f64>> = idx.iter().map(|&i| self.common.space.normalize(&self.archive[i].0 .0)).collect();
        let scale = (self.common.space.len().max(1) as f64).sqrt();
        let scales: Vec<f64> = LENGTH_SCALES.iter().map(|l| l * scale).collect();
        let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        GaussianProcess::fit_best(x, &y, &scales, NOISE).map(|gp| (gp, best))
    }

    fn random_batch(&mut self) -> Vec<ActionVector> {
        let space = self.common.space.clone();
        (0..self.batch).map(|_| self.common.draw(|rng| space.sample_feasible(rng))).collect()
    }
}

impl Agent for BayesOpt {
    fn kind(&self) -> AgentKind {
        AgentKind::BO
    }

    fn propose(&mut self) -> Vec<ActionVector> {
        if self.archive.len() < self.initial {
            return self.random_batch();
        }
        let Some((gp, best)) = self.surrogate() else { return self.random_batch() };

        let mut pool: Vec<ActionVector> = Vec::with_capacity(POOL_SIZE);
        let mut in_pool: HashSet<ActionVector> = HashSet::new();
        for _ in 0..POOL_SIZE * 4 {
            if pool.len() == POOL_SIZE {
                break;
            }
            let a = ActionVector(self.common.space.sample_feasible(&mut self.pool_rng));
            if !self.common.seen.contains(&a) && in_pool.insert(a.clone()) {
                pool.push(a);
            }
        }
        if pool.is_empty() {
            return self.random_batch();
        }
        let mut scored: Vec<(f64, usize)> = pool
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let (m, s) = gp.predict(&self.common.space.normalize(&a.0));
                (expected_improvement(m, s, best, XI), i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<ActionVector> = scored.iter().take(self.batch).map(|&(_, i)| pool[i].clone()).collect();
        for a in &out {
            self.common.seen.insert(a.clone());
        }
        if out.len() < self.batch {
            let extra = self.batch - out.len();
            let space = self.common.space.clone();
            out.extend((0..extra).map(|_| self.common.draw(|rng| space.sample_feasible(rng))));
        }
        out
    }

    fn observe(&mut self, proposals: &[ActionVector], rewards: &[f64]) -> Result<(), AgentError> {
        self.common.check(proposals, rewards)?;
        self.common.record(proposals, rewards);
        for (p, &r) in proposals.iter().zip(rewards) {
            self.archive.push((p.clone(), r));
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
