//! Exact solvers for the two-action abstraction of the chain task.
//!
//! The policy's entropy bonus is modeled as a constant `c = alpha * gamma * h`
//! added to every transition that does not end the episode. Termination
//! forfeits all future bonuses, which is what makes the episodic optimum
//! depend on `c` while the infinite-horizon optimum does not.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::envs::ChainConfig;

pub const DEFAULT_VI_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid chain MDP: {0}")]
    InvalidMdp(String),
    #[error("value iteration does not converge for gamma = {0}")]
    NonConvergent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainAction {
    Left,
    Right,
}

impl fmt::Display for ChainAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Left => "L",
            Self::Right => "R",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainMdp {
    pub length: usize,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub episodic: bool,
    pub gamma: f64,
    pub horizon: usize,
    /// Constant per-step bonus on non-terminating transitions.
    pub bonus: f64,
}

impl ChainMdp {
    /// Uses the arrival rewards, episodic flag and time limit of `config`.
    pub fn from_config(config: &ChainConfig, gamma: f64, bonus: f64) -> Self {
        Self {
            length: config.length,
            step_penalty: config.step_penalty,
            goal_reward: config.goal_reward,
            episodic: config.episodic,
            gamma,
            horizon: config.time_limit,
            bonus,
        }
    }

    /// Default episodic chain with the bonus `alpha * gamma * h`.
    pub fn episodic(gamma: f64, horizon: usize, alpha: f64, entropy: f64) -> Self {
        let config = ChainConfig { time_limit: horizon, ..ChainConfig::default() };
        Self::from_config(&config, gamma, alpha * gamma * entropy)
    }

    fn validate(&self) -> Result<(), OracleError> {
        if self.length < 2 {
            return Err(OracleError::InvalidMdp(format!("length {} < 2", self.length)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(OracleError::InvalidMdp(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !self.bonus.is_finite() {
            return Err(OracleError::InvalidMdp("bonus must be finite".into()));
        }
        Ok(())
    }

    pub fn last_node(&self) -> usize {
        self.length - 1
    }

    pub fn next(&self, node: usize, action: ChainAction) -> usize {
        match action {
            ChainAction::Left => node.saturating_sub(1),
            ChainAction::Right => (node + 1).min(self.last_node()),
        }
    }

    pub fn arrival_reward(&self, node: usize) -> f64 {
        if node == self.last_node() {
            self.goal_reward
        } else {
            self.step_penalty
        }
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.episodic && node == self.last_node()
    }

    /// Reward plus bonus for arriving at `node`, and whether to bootstrap.
    fn transition(&self, node: usize) -> (f64, bool) {
        if self.is_terminal(node) {
            (self.arrival_reward(node), false)
        } else {
            (self.arrival_reward(node) + self.bonus, true)
        }
    }

    fn q(&self, node: usize, action: ChainAction, next_values: &[f64]) -> f64 {
        let s = self.next(node, action);
        let (r, boot) = self.transition(s);
        if boot {
            r + self.gamma * next_values[s]
        } else {
            r
        }
    }

    /// Greedy choice; ties go to `Right`.
    fn greedy(&self, node: usize, next_values: &[f64]) -> (ChainAction, f64, f64) {
        let ql = self.q(node, ChainAction::Left, next_values);
        let qr = self.q(node, ChainAction::Right, next_values);
        if qr >= ql {
            (ChainAction::Right, qr, ql)
        } else {
            (ChainAction::Left, ql, qr)
        }
    }
}

/// Outcome of following a policy from node 0 for the full horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollout {
    pub actions: Vec<ChainAction>,
    pub nodes: Vec<usize>,
    pub terminated: bool,
    /// Undiscounted task return, without the bonus.
    pub task_return: f64,
    /// Steps whose arrival node is the last node.
    pub steps_at_goal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteHorizonSolution {
    /// `values[t][node]` for `t` in `0..=horizon`; `values[horizon]` is zero.
    pub values: Vec<Vec<f64>>,
    /// `q_left[t][node]` and `q_right[t][node]` for `t < horizon`.
    pub q_left: Vec<Vec<f64>>,
    pub q_right: Vec<Vec<f64>>,
    pub policy: Vec<Vec<ChainAction>>,
    pub mdp: ChainMdp,
}

impl FiniteHorizonSolution {
    pub fn v0(&self) -> f64 {
        self.values[0][0]
    }

    /// Greedy rollout from node 0.
    pub fn rollout(&self) -> Rollout {
        let mdp = &self.mdp;
        rollout(mdp, |t, node| self.policy[t][node])
    }

    /// Whether the greedy policy avoids termination for the whole horizon.
    pub fn survive_preferred(&self) -> bool {
        !self.rollout().terminated
    }
}

/// Follows `policy(t, node)` from node 0 for `mdp.horizon` steps.
pub fn rollout(mdp: &ChainMdp, policy: impl Fn(usize, usize) -> ChainAction) -> Rollout {
    let mut node = 0;
    let mut out = Rollout { actions: Vec::new(), nodes: vec![0], terminated: false, task_return: 0.0, steps_at_goal: 0 };
    for t in 0..mdp.horizon {
        let a = policy(t, node);
        node = mdp.next(node, a);
        out.actions.push(a);
        out.nodes.push(node);
        out.task_return += mdp.arrival_reward(node);
        if node == mdp.last_node() {
            out.steps_at_goal += 1;
        }
        if mdp.is_terminal(node) {
            out.terminated = true;
            break;
        }
    }
    out
}

/// Backward induction over `horizon` steps with `V[horizon] = 0`.
pub fn finite_horizon_dp(mdp: &ChainMdp) -> Result<FiniteHorizonSolution, OracleError> {
    mdp.validate()?;
    if mdp.horizon == 0 {
        return Err(OracleError::InvalidMdp("horizon must be >= 1".into()));
    }
    let n = mdp.length;
    let h = mdp.horizon;
    let mut values = vec![vec![0.0; n]; h + 1];
    let mut q_left = vec![vec![0.0; n]; h];
    let mut q_right = vec![vec![0.0; n]; h];
    let mut policy = vec![vec![ChainAction::Right; n]; h];
    for t in (0..h).rev() {
        for node in 0..n {
            let ql = mdp.q(node, ChainAction::Left, &values[t + 1]);
            let qr = mdp.q(node, ChainAction::Right, &values[t + 1]);
            q_left[t][node] = ql;
            q_right[t][node] = qr;
            let (a, v) = if qr >= ql { (ChainAction::Right, qr) } else { (ChainAction::Left, ql) };
            policy[t][node] = a;
            values[t][node] = v;
        }
    }
    Ok(FiniteHorizonSolution { values, q_left, q_right, policy, mdp: mdp.clone() })
}

/// Undiscounted rule of thumb: surviving pays when the bonus `alpha * h`
/// outweighs the step penalty. Disagrees with [`finite_horizon_dp`] only for
/// `alpha * h` in `[penalty, penalty / gamma]`, where discounting decides.
pub fn inflation_threshold(alpha: f64, entropy: f64, penalty: f64) -> bool {
    alpha * entropy > penalty
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfiniteHorizonSolution {
    pub values: Vec<f64>,
    pub policy: Vec<ChainAction>,
    pub iterations: usize,
}

impl InfiniteHorizonSolution {
    /// Stationary greedy rollout over `mdp.horizon` steps.
    pub fn rollout(&self, mdp: &ChainMdp) -> Rollout {
        rollout(mdp, |_, node| self.policy[node])
    }
}

/// Value iteration until the sup-norm distance to the fixed point is below
/// `tolerance`.
pub fn infinite_horizon_vi(mdp: &ChainMdp, tolerance: f64) -> Result<InfiniteHorizonSolution, OracleError> {
    mdp.validate()?;
    if mdp.gamma >= 1.0 {
        return Err(OracleError::NonConvergent(mdp.gamma));
    }
    if !(tolerance > 0.0) {
        return Err(OracleError::InvalidMdp(format!("tolerance {tolerance} must be positive")));
    }
    let n = mdp.length;
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let bound_factor = if mdp.gamma > 0.0 { mdp.gamma / (1.0 - mdp.gamma) } else { 0.0 };
    let max_iterations = 10_000_000;
    for iteration in 1..=max_iterations {
        let mut delta: f64 = 0.0;
        for node in 0..n {
            next[node] = mdp.greedy(node, &values).1;
            delta = delta.max((next[node] - values[node]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if delta * bound_factor < tolerance {
            let policy = (0..n).map(|node| mdp.greedy(node, &values).0).collect();
            return Ok(InfiniteHorizonSolution { values, policy, iterations: iteration });
        }
    }
    Err(OracleError::NonConvergent(mdp.gamma))
}

/// Everything the `oracle` command prints.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub alpha: f64,
    pub entropy: f64,
    pub penalty: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub bonus: f64,
    pub survive_preferred: bool,
    pub threshold_survive_preferred: bool,
    pub v0: f64,
    pub rollout: Rollout,
    pub baseline_v0: f64,
    pub baseline_rollout: Rollout,
}

/// Solves the episodic chain with and without the entropy bonus.
pub fn report(alpha: f64, entropy: f64, penalty: f64, gamma: f64, horizon: usize) -> Result<OracleReport, OracleError> {
    let config = ChainConfig { step_penalty: -penalty.abs(), time_limit: horizon.max(1), ..ChainConfig::default() };
    let bonus = alpha * gamma * entropy;
    let with = finite_horizon_dp(&ChainMdp { horizon, ..ChainMdp::from_config(&config, gamma, bonus) })?;
    let without = finite_horizon_dp(&ChainMdp { horizon, ..ChainMdp::from_config(&config, gamma, 0.0) })?;
    Ok(OracleReport {
        alpha,
        entropy,
        penalty,
        gamma,
        horizon,
        bonus,
        survive_preferred: with.survive_preferred(),
        threshold_survive_preferred: inflation_threshold(alpha, entropy, penalty),
        v0: with.v0(),
        rollout: with.rollout(),
        baseline_v0: without.v0(),
        baseline_rollout: without.rollout(),
    })
}
