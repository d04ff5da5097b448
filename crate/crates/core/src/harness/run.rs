use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::eval::{eval_adversarial_gap, eval_agent};
use super::metrics::{MetricsRow, MetricsWriter};
use super::normalize::RewardNormalizer;
use super::HarnessError;
use crate::diffnn::Tensor;
use crate::envs::Environment;
use crate::replay::{ReplayBuffer, Transition};
use crate::sac::{Agent, SacError};

/// A finished training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainEpisode {
    pub end_step: u64,
    pub task_return: f64,
    pub length: usize,
    pub success: bool,
}

/// Evaluation details beyond the CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalPoint {
    pub env_steps: u64,
    pub mean_steps_at_goal: f64,
    pub adversarial_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub evals: Vec<EvalPoint>,
    pub train_episodes: Vec<TrainEpisode>,
    /// Largest per-iteration expected V seen during training.
    pub max_train_expected_v: f64,
    pub agent: Agent,
}

impl RunResult {
    /// Mean task return of training episodes that ended after `from_step`.
    pub fn mean_train_return_after(&self, from_step: u64) -> Option<f64> {
        let eps: Vec<f64> = self.train_episodes.iter().filter(|e| e.end_step > from_step).map(|e| e.task_return).collect();
        (!eps.is_empty()).then(|| eps.iter().sum::<f64>() / eps.len() as f64)
    }
}

/// Independent RNG seeds derived from the run seed.
struct Streams {
    agent: u64,
    replay: u64,
    eval: u64,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let mut root = ChaCha8Rng::seed_from_u64(seed);
        Self { agent: root.next_u64(), replay: root.next_u64(), eval: root.next_u64() }
    }

    fn eval_rng(&self, point: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.eval.wrapping_add(point))
    }
}

fn diverged(env_steps: u64) -> impl Fn(SacError) -> HarnessError {
    move |source| match source {
        SacError::NonFiniteLoss(_) | SacError::Diff(_) => HarnessError::Diverged { env_steps, source },
        other => HarnessError::Sac(other),
    }
}

/// Trains one seed, streaming a metrics row to `sink` at every eval point.
/// On divergence the rows written so far stay in `sink`.
pub fn run_experiment<W: Write>(cfg: &ExperimentConfig, seed: u64, sink: W) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let spec = cfg.env.spec();
    let streams = Streams::new(seed);
    let mut agent = Agent::new(cfg.sac_config()?, streams.agent)?;
    let mut replay = ReplayBuffer::new(cfg.train.buffer_capacity)?;
    let mut replay_rng = ChaCha8Rng::seed_from_u64(streams.replay);
    let mut normalizer = cfg.reward_norm.enabled.then(|| RewardNormalizer::symmetric(cfg.reward_norm.clip, cfg.reward_norm.epsilon));
    let mut writer = MetricsWriter::new(sink)?;

    let mut env = spec.build()?;
    let mut episode = 0u64;
    let mut obs = env.reset(episode);
    let (mut ep_return, mut ep_len) = (0.0, 0usize);

    let mut rows = Vec::new();
    let mut evals = Vec::new();
    let mut train_episodes = Vec::new();
    let mut max_train_expected_v = f64::NEG_INFINITY;

    for step in 1..=cfg.train.total_steps {
        let a = agent.act(&obs).map_err(diverged(step))?;
        let res = env.step(&a.action)?;
        ep_return += res.reward;
        ep_len += 1;
        let stored = match normalizer.as_mut() {
            Some(n) => n.observe(res.reward),
            None => res.reward,
        };
        let done = res.termination.is_done();
        replay.push(Transition {
            obs: std::mem::take(&mut obs),
            action: a.action,
            reward: stored,
            next_obs: res.next_obs.clone(),
            termination: res.termination,
        });
        if done {
            train_episodes.push(TrainEpisode { end_step: step, task_return: ep_return, length: ep_len, success: env.at_goal() });
            episode += 1;
            obs = env.reset(episode);
            ep_return = 0.0;
            ep_len = 0;
        } else {
            obs = res.next_obs;
        }

        if step >= cfg.train.initial_collect {
            let m = agent.train_iteration(&replay, cfg.agent.batch_size, &mut replay_rng).map_err(diverged(step))?;
            max_train_expected_v = max_train_expected_v.max(m.expected_v);
        }

        if step % cfg.eval.interval == 0 {
            let mut erng = streams.eval_rng(step / cfg.eval.interval);
            let summary = eval_agent(&agent, &spec, cfg.eval.episodes, cfg.eval.action_mode, &mut erng)?;
            let states: Vec<&[f64]> = replay.sample(cfg.agent.batch_size, &mut erng)?.into_iter().map(|t| t.obs.as_slice()).collect();
            let (expected_v, entropy) = agent.diagnostics(&Tensor::from_rows(&states).map_err(SacError::from)?, &mut erng).map_err(diverged(step))?;
            let adversarial_gap = if cfg.eval.adversarial_gap {
                Some(eval_adversarial_gap(&agent, &spec, cfg.eval.episodes, &mut erng)?.gap)
            } else {
                None
            };
            let row = MetricsRow {
                env_steps: step,
                seed,
                episodic_return: summary.mean_return,
                success: summary.success_rate,
                episode_len: summary.mean_length,
                expected_v,
                entropy,
                alpha: agent.alpha(),
                ent_reward_mean: agent.entropy_mean().value(),
            };
            writer.write(&row)?;
            log::debug!("seed {seed} step {step}: return {:.3} success {:.2} V {:.3}", row.episodic_return, row.success, row.expected_v);
            rows.push(row);
            evals.push(EvalPoint { env_steps: step, mean_steps_at_goal: summary.mean_steps_at_goal, adversarial_gap });
        }
    }

    Ok(RunResult { seed, rows, evals, train_episodes, max_train_expected_v, agent })
}

pub fn csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.ckpt"))
}

/// Runs one seed writing `seed_<N>.csv` and, on success, `seed_<N>.ckpt`
/// into `dir`.
pub fn run_experiment_to_dir(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunResult, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let sink = BufWriter::new(File::create(csv_path(dir, seed))?);
    let result = run_experiment(cfg, seed, sink)?;
    result.agent.save(&checkpoint_path(dir, seed))?;
    Ok(result)
}
