use super::{ActionSpaceSpec, Agent, AgentConfig, AgentError, AgentKind, Common};
use crate::schema::ActionVector;

/// Uniform random sampling of the feasible set.
pub struct RandomWalk {
    common: Common,
    batch: usize,
}

impl RandomWalk {
    pub fn new(config: &AgentConfig, space: ActionSpaceSpec) -> RandomWalk {
        RandomWalk { common: Common::new(space, config.seed), batch: config.batch() }
    }
}

impl Agent for RandomWalk {
    fn kind(&self) -> AgentKind {
        AgentKind::RW
    }

    fn propose(&mut self) -> Vec<ActionVector> {
        let space = self.common.space.clone();
        (0..self.batch).map(|_| self.common.draw(|rng| space.sample_feasible(rng))).collect()
    }

    fn observe(&mut self, proposals: &[ActionVector], rewards: &[f64]) -> Result<(), AgentError> {
        self.common.check(proposals, rewards)?;
        self.common.record(proposals, rewards);
        Ok(())
    }

    fn best(&self) -> Option<(&ActionVector, f64)> {
        self.common.best()
    }

    fn steps(&self) -> usize {
        self.common.steps
    }
}
