use serde::{Deserialize, Serialize};

use super::{check_action, EnvError, Environment, StepResult, Termination};
use crate::policy::ActionBounds;

/// Chain of nodes `0..length`. Actions at or above `right_threshold` move
/// right, everything else moves left. The reward depends on the node arrived
/// at: `goal_reward` for the last node, `step_penalty` elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub length: usize,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub episodic: bool,
    pub right_threshold: f64,
    pub time_limit: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            length: 5,
            step_penalty: -0.05,
            goal_reward: 0.0,
            episodic: true,
            right_threshold: 0.8,
            time_limit: 50,
        }
    }
}

impl ChainConfig {
    pub fn infinite() -> Self {
        Self { episodic: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.length < 2 {
            return Err(EnvError::InvalidConfig(format!("chain length {} < 2", self.length)));
        }
        if !(self.right_threshold > -1.0 && self.right_threshold < 1.0) {
            return Err(EnvError::InvalidConfig(format!(
                "right_threshold {} outside (-1, 1)",
                self.right_threshold
            )));
        }
        if self.time_limit == 0 {
            return Err(EnvError::InvalidConfig("time_limit must be >= 1".into()));
        }
        Ok(())
    }

    pub fn last_node(&self) -> usize {
        self.length - 1
    }

    /// Reward for arriving at `node`.
    pub fn arrival_reward(&self, node: usize) -> f64 {
        if node == self.last_node() {
            self.goal_reward
        } else {
            self.step_penalty
        }
    }

    /// Node index scaled to `[0, 1]`.
    pub fn observe(&self, node: usize) -> f64 {
        node as f64 / self.last_node() as f64
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    config: ChainConfig,
    bounds: ActionBounds,
    position: usize,
    done: bool,
}

impl Chain {
    pub fn new(config: ChainConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self {
            config,
            bounds: ActionBounds::symmetric(1),
            position: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn position(&self) -> usize {
        self.position
    }

    /// Places the agent at `node`, for tests and oracle comparisons.
    pub fn set_position(&mut self, node: usize) {
        self.position = node.min(self.config.last_node());
        self.done = false;
    }
}

impl Environment for Chain {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.position = 0;
        self.done = false;
        vec![self.config.observe(0)]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        check_action(&self.bounds, action)?;
        let last = self.config.last_node();
        self.position = if action[0] >= self.config.right_threshold {
            (self.position + 1).min(last)
        } else {
            self.position.saturating_sub(1)
        };
        let reward = self.config.arrival_reward(self.position);
        let termination = if self.config.episodic && self.position == last {
            self.done = true;
            Termination::Terminal
        } else {
            Termination::Continue
        };
        Ok(StepResult {
            next_obs: vec![self.config.observe(self.position)],
            reward,
            termination,
        })
    }

    fn at_goal(&self) -> bool {
        self.position == self.config.last_node()
    }
}
