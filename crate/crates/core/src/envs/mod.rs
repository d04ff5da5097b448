//! Deterministic toy tasks and the episode time-limit wrapper.

mod chain;
mod nav;
mod time_limit;

pub use chain::{Chain, ChainConfig};
pub use nav::{Nav, NavConfig, Rect};
pub use time_limit::TimeLimit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::ActionBounds;

/// How a step ended.
///
/// `Terminal` comes only from absorbing events of the task itself; `Timeout`
/// only from [`TimeLimit`]. TD targets bootstrap through `Timeout`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Continue,
    Terminal,
    Timeout,
}

impl Termination {
    pub fn is_done(self) -> bool {
        self != Termination::Continue
    }

    /// 0 for `Terminal`, 1 otherwise.
    pub fn bootstrap(self) -> f64 {
        match self {
            Termination::Terminal => 0.0,
            Termination::Continue | Termination::Timeout => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    pub reward: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action {0:?} outside the action bounds")]
    ActionOutOfBounds(Vec<f64>),
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

pub trait Environment {
    fn obs_dim(&self) -> usize;

    fn action_bounds(&self) -> &ActionBounds;

    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;

    /// Whether the current state is the task's goal (last chain node, or
    /// within the goal radius).
    fn at_goal(&self) -> bool;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn action_bounds(&self) -> &ActionBounds {
        (**self).action_bounds()
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        (**self).step(action)
    }
    fn at_goal(&self) -> bool {
        (**self).at_goal()
    }
}

/// Environment selection as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvSpec {
    Chain(ChainConfig),
    Nav(NavConfig),
}

impl EnvSpec {
    pub fn time_limit(&self) -> usize {
        match self {
            EnvSpec::Chain(c) => c.time_limit,
            EnvSpec::Nav(n) => n.time_limit,
        }
    }

    /// The task wrapped in its time limit.
    pub fn build(&self) -> Result<TimeLimit<Box<dyn Environment + Send>>, EnvError> {
        let inner: Box<dyn Environment + Send> = match self {
            EnvSpec::Chain(c) => Box::new(Chain::new(c.clone())?),
            EnvSpec::Nav(n) => Box::new(Nav::new(n.clone())?),
        };
        TimeLimit::new(inner, self.time_limit())
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvSpec::Chain(_) => 1,
            EnvSpec::Nav(_) => 2,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            EnvSpec::Chain(_) => 1,
            EnvSpec::Nav(_) => 2,
        }
    }
}

fn check_action(bounds: &ActionBounds, action: &[f64]) -> Result<(), EnvError> {
    if bounds.contains(action) {
        Ok(())
    } else {
        Err(EnvError::ActionOutOfBounds(action.to_vec()))
    }
}
