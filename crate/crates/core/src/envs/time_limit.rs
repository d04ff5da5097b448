use super::{EnvError, Environment, StepResult, Termination};
use crate::policy::ActionBounds;

/// Ends episodes after `limit` steps. A step that would otherwise continue
/// is reported as `Timeout` exactly at step `limit`; `Terminal` always wins.
#[derive(Debug, Clone)]
pub struct TimeLimit<E> {
    inner: E,
    limit: usize,
    elapsed: usize,
    done: bool,
}

impl<E: Environment> TimeLimit<E> {
    pub fn new(inner: E, limit: usize) -> Result<Self, EnvError> {
        if limit == 0 {
            return Err(EnvError::InvalidConfig("time limit must be >= 1".into()));
        }
        Ok(Self { inner, limit, elapsed: 0, done: false })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut E {
        &mut self.inner
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn elapsed(&self) -> usize {
        self.elapsed
    }
}

impl<E: Environment> Environment for TimeLimit<E> {
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn action_bounds(&self) -> &ActionBounds {
        self.inner.action_bounds()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.elapsed = 0;
        self.done = false;
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let mut result = self.inner.step(action)?;
        self.elapsed += 1;
        if result.termination == Termination::Continue && self.elapsed >= self.limit {
            result.termination = Termination::Timeout;
        }
        self.done = result.termination.is_done();
        Ok(result)
    }

    fn at_goal(&self) -> bool {
        self.inner.at_goal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Chain, ChainConfig};

    #[test]
    fn chain_times_out_at_fifty() {
        let mut env = TimeLimit::new(Chain::new(ChainConfig::default()).unwrap(), 50).unwrap();
        env.reset(0);
        for _ in 0..49 {
            assert_eq!(env.step(&[-1.0]).unwrap().termination, Termination::Continue);
        }
        assert_eq!(env.step(&[-1.0]).unwrap().termination, Termination::Timeout);
        assert_eq!(env.step(&[-1.0]), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn terminal_at_limit_stays_terminal() {
        let mut env = TimeLimit::new(Chain::new(ChainConfig::default()).unwrap(), 50).unwrap();
        env.reset(0);
        for _ in 0..46 {
            env.step(&[-1.0]).unwrap();
        }
        for _ in 0..3 {
            assert_eq!(env.step(&[1.0]).unwrap().termination, Termination::Continue);
        }
        assert_eq!(env.elapsed(), 49);
        assert_eq!(env.step(&[1.0]).unwrap().termination, Termination::Terminal);
    }

    #[test]
    fn limit_one() {
        let mut env = TimeLimit::new(Chain::new(ChainConfig::default()).unwrap(), 1).unwrap();
        for a in [-1.0, 0.0, 1.0] {
            env.reset(0);
            assert_eq!(env.step(&[a]).unwrap().termination, Termination::Timeout);
        }
        assert!(TimeLimit::new(Chain::new(ChainConfig::default()).unwrap(), 0).is_err());
    }

    #[test]
    fn reset_clears_the_counter() {
        let mut env = TimeLimit::new(Chain::new(ChainConfig::default()).unwrap(), 2).unwrap();
        env.reset(0);
        env.step(&[0.0]).unwrap();
        env.step(&[0.0]).unwrap();
        env.reset(0);
        assert_eq!(env.elapsed(), 0);
        assert_eq!(env.step(&[0.0]).unwrap().termination, Termination::Continue);
    }
}
