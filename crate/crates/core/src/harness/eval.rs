use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::HarnessError;
use crate::envs::{EnvSpec, Environment, NavConfig};
use crate::policy::ActionSample;
use crate::sac::{ActionMode, Agent};

/// Anything that maps observations to actions during evaluation.
pub trait Policy {
    fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionSample, HarnessError>;
}

/// A trained agent acting by sampling or by its squashed mean.
#[derive(Debug, Clone, Copy)]
pub struct AgentPolicy<'a> {
    pub agent: &'a Agent,
    pub mode: ActionMode,
}

impl Policy for AgentPolicy<'_> {
    fn act(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<ActionSample, HarnessError> {
        Ok(self.agent.act_with(obs, self.mode, rng)?)
    }
}

/// Deterministic hand-written policy; reports a log density of 0.
pub struct Scripted<F>(pub F);

impl<F: Fn(&[f64]) -> Vec<f64>> Policy for Scripted<F> {
    fn act(&self, obs: &[f64], _rng: &mut ChaCha8Rng) -> Result<ActionSample, HarnessError> {
        let action = (self.0)(obs);
        Ok(ActionSample { pre_squash: action.clone(), action, log_prob: 0.0 })
    }
}

/// Everything observed during one evaluation episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub observations: Vec<Vec<f64>>,
    pub pre_squash: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub success: bool,
    pub steps_at_goal: usize,
}

impl EpisodeLog {
    pub fn task_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn log_prob_sum(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub success_rate: f64,
    pub mean_length: f64,
    /// Mean number of steps per episode that ended at the goal.
    pub mean_steps_at_goal: f64,
    #[serde(skip)]
    pub episodes: Vec<EpisodeLog>,
}

/// Runs `episodes` full episodes without learning. Success means the
/// episode ended at the goal.
pub fn eval_policy<P: Policy + ?Sized, E: Environment + ?Sized>(
    policy: &P,
    env: &mut E,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalSummary, HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::Config("evaluation needs at least one episode".into()));
    }
    let mut logs = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut log = EpisodeLog::default();
        let mut obs = env.reset(ep as u64);
        loop {
            let a = policy.act(&obs, rng)?;
            let step = env.step(&a.action)?;
            log.observations.push(obs);
            log.pre_squash.push(a.pre_squash);
            log.actions.push(a.action);
            log.log_probs.push(a.log_prob);
            log.rewards.push(step.reward);
            if env.at_goal() {
                log.steps_at_goal += 1;
            }
            obs = step.next_obs;
            if step.termination.is_done() {
                log.success = env.at_goal();
                break;
            }
        }
        logs.push(log);
    }
    let n = logs.len() as f64;
    Ok(EvalSummary {
        mean_return: logs.iter().map(EpisodeLog::task_return).sum::<f64>() / n,
        success_rate: logs.iter().filter(|l| l.success).count() as f64 / n,
        mean_length: logs.iter().map(|l| l.len() as f64).sum::<f64>() / n,
        mean_steps_at_goal: logs.iter().map(|l| l.steps_at_goal as f64).sum::<f64>() / n,
        episodes: logs,
    })
}

/// Evaluates `agent` on a fresh copy of the task described by `spec`.
pub fn eval_agent(agent: &Agent, spec: &EnvSpec, episodes: usize, mode: ActionMode, rng: &mut ChaCha8Rng) -> Result<EvalSummary, HarnessError> {
    let mut env = spec.build()?;
    eval_policy(&AgentPolicy { agent, mode }, &mut env, episodes, rng)
}

/// Mean sampled-action return on the nav task as configured by `nav`,
/// typically with the obstacle switched on after obstacle-free training.
pub fn eval_dynamics_robustness(agent: &Agent, nav: &NavConfig, episodes: usize, rng: &mut ChaCha8Rng) -> Result<f64, HarnessError> {
    Ok(eval_agent(agent, &EnvSpec::Nav(nav.clone()), episodes, ActionMode::Sample, rng)?.mean_return)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub alpha: f64,
    pub task_return: f64,
    /// Mean return under `r - alpha * log pi(a|s)`.
    pub adversarial_return: f64,
    /// `task_return - adversarial_return`.
    pub gap: f64,
    #[serde(skip)]
    pub episodes: Vec<EpisodeLog>,
}

/// Return gap between the task reward and the adversarial reward
/// `r - alpha * log pi(a|s)` over sampled-action episodes.
pub fn eval_adversarial_gap(agent: &Agent, spec: &EnvSpec, episodes: usize, rng: &mut ChaCha8Rng) -> Result<GapReport, HarnessError> {
    let summary = eval_agent(agent, spec, episodes, ActionMode::Sample, rng)?;
    let alpha = agent.alpha();
    let n = summary.episodes.len() as f64;
    let adversarial_return = summary
        .episodes
        .iter()
        .map(|e| e.rewards.iter().zip(&e.log_probs).map(|(r, lp)| r - alpha * lp).sum::<f64>())
        .sum::<f64>()
        / n;
    Ok(GapReport {
        alpha,
        task_return: summary.mean_return,
        adversarial_return,
        gap: summary.mean_return - adversarial_return,
        episodes: summary.episodes,
    })
}
