//! Soft actor-critic with a switchable entropy reward.
//!
//! The three variants differ only in what the critic target adds for the
//! next state's entropy:
//!
//! * [`EntropyRewardMode::Full`] adds `alpha * h'` (SAC),
//! * [`EntropyRewardMode::ZeroMean`] adds `alpha * h'` minus its moving
//!   average (SACZero),
//! * [`EntropyRewardMode::None`] adds nothing (SACLite).
//!
//! The actor objective `E[alpha * log pi(a|s) - min Q(s, a)]` and the
//! temperature update are shared by all three.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffnn::{Adam, AdamConfig, DiffError, Mlp, Tape, Tensor};
use crate::policy::{sample_batch, sample_on_tape, standard_normal, ActionBounds, ActionSample, PolicyError, SquashedGaussian};
use crate::replay::{ReplayBuffer, ReplayError, Transition};

pub const CHECKPOINT_HEADER: &str = "entsac-checkpoint v1";

#[derive(Debug, Error)]
pub enum SacError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyRewardMode {
    Full,
    ZeroMean,
    None,
}

impl EntropyRewardMode {
    pub const ALL: [EntropyRewardMode; 3] = [Self::Full, Self::ZeroMean, Self::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::ZeroMean => "zeromean",
            Self::None => "none",
        }
    }

    /// Name of the algorithm variant the mode produces.
    pub fn variant_name(self) -> &'static str {
        match self {
            Self::Full => "SAC",
            Self::ZeroMean => "SACZero",
            Self::None => "SACLite",
        }
    }
}

impl fmt::Display for EntropyRewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntropyRewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "sac" => Ok(Self::Full),
            "zeromean" | "zero_mean" | "saczero" => Ok(Self::ZeroMean),
            "none" | "saclite" => Ok(Self::None),
            other => Err(format!("unknown entropy reward mode `{other}` (expected full|zeromean|none)")),
        }
    }
}

/// Exponential moving average of the weighted entropy reward `alpha * h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRewardMean {
    running_mean: f64,
    momentum: f64,
    initialized: bool,
}

impl EntropyRewardMean {
    pub fn new(momentum: f64) -> Self {
        Self { running_mean: 0.0, momentum, initialized: false }
    }

    /// The first update sets the mean to `batch_mean`.
    pub fn update(&mut self, batch_mean: f64) {
        if self.initialized {
            self.running_mean += self.momentum * (batch_mean - self.running_mean);
        } else {
            self.running_mean = batch_mean;
            self.initialized = true;
        }
    }

    pub fn value(&self) -> f64 {
        self.running_mean
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn set_value(&mut self, v: f64) {
        self.running_mean = v;
        self.initialized = true;
    }
}

/// Entropy reward added to the critic target for a next-state entropy estimate `h`.
pub fn entropy_reward(mode: EntropyRewardMode, alpha: f64, h: f64, mean: &EntropyRewardMean) -> f64 {
    match mode {
        EntropyRewardMode::Full => alpha * h,
        EntropyRewardMode::ZeroMean => alpha * h - mean.value(),
        EntropyRewardMode::None => 0.0,
    }
}

/// `y = r + bootstrap * gamma * (min_q' + entropy_reward)` for one transition.
pub fn td_target(reward: f64, bootstrap: f64, gamma: f64, next_min_q: f64, entropy_reward: f64) -> f64 {
    reward + bootstrap * gamma * (next_min_q + entropy_reward)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    Tunable,
    Fixed,
}

/// Temperature kept as `log_alpha` so that `alpha` stays positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTuner {
    log_alpha: Tensor,
    target_entropy: f64,
    mode: AlphaMode,
    optimizer: Adam,
}

impl AlphaTuner {
    pub fn new(initial_alpha: f64, target_entropy: f64, mode: AlphaMode, adam: AdamConfig) -> Result<Self, SacError> {
        if !(initial_alpha > 0.0 && initial_alpha.is_finite()) {
            return Err(SacError::InvalidConfig(format!("initial alpha {initial_alpha} must be positive")));
        }
        let log_alpha = Tensor::scalar(initial_alpha.ln());
        let optimizer = Adam::new(adam, &[&log_alpha])?;
        Ok(Self { log_alpha, target_entropy, mode, optimizer })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.values()[0].exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha.values()[0]
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn mode(&self) -> AlphaMode {
        self.mode
    }

    /// One Adam step on `log_alpha * mean(h - target)` with `h` detached.
    /// No-op when fixed. Returns the new alpha.
    pub fn update(&mut self, entropies: &[f64]) -> Result<f64, SacError> {
        if self.mode == AlphaMode::Fixed || entropies.is_empty() {
            return Ok(self.alpha());
        }
        let grad = entropies.iter().map(|h| h - self.target_entropy).sum::<f64>() / entropies.len() as f64;
        if !grad.is_finite() {
            return Err(SacError::NonFiniteLoss("alpha"));
        }
        self.optimizer.step(&mut [&mut self.log_alpha], &[&Tensor::scalar(grad)])?;
        Ok(self.alpha())
    }
}

/// Twin critics with Polyak-averaged targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticPair {
    pub q1: Mlp,
    pub q2: Mlp,
    pub target_q1: Mlp,
    pub target_q2: Mlp,
    tau: f64,
    opt1: Adam,
    opt2: Adam,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], tau: f64, adam: AdamConfig, rng: &mut R) -> Result<Self, SacError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(SacError::InvalidConfig(format!("tau {tau} outside [0, 1]")));
        }
        let q1 = Mlp::new(layer_sizes, rng)?;
        let q2 = Mlp::new(layer_sizes, rng)?;
        let opt1 = Adam::new(adam, &q1.params())?;
        let opt2 = Adam::new(adam, &q2.params())?;
        Ok(Self { target_q1: q1.clone(), target_q2: q2.clone(), q1, q2, tau, opt1, opt2 })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn soft_update(&mut self) {
        self.soft_update_with(self.tau);
    }

    /// `target <- (1 - tau) * target + tau * online`. `tau` of exactly 0 or 1
    /// leaves or copies the parameters bit for bit.
    pub fn soft_update_with(&mut self, tau: f64) {
        for (target, online) in [(&mut self.target_q1, &self.q1), (&mut self.target_q2, &self.q2)] {
            for (t, o) in target.params_mut().into_iter().zip(online.params()) {
                for (tv, &ov) in t.values_mut().iter_mut().zip(o.values()) {
                    if tau == 1.0 {
                        *tv = ov;
                    } else if tau != 0.0 {
                        *tv = (1.0 - tau) * *tv + tau * ov;
                    }
                }
            }
        }
    }

    /// Elementwise `min(target_q1, target_q2)` at `[obs ++ action]` rows.
    pub fn target_min(&self, inputs: &Tensor) -> Result<Vec<f64>, SacError> {
        let a = self.target_q1.predict(inputs)?;
        let b = self.target_q2.predict(inputs)?;
        Ok(a.values().iter().zip(b.values()).map(|(x, y)| x.min(*y)).collect())
    }

    pub fn online_min(&self, inputs: &Tensor) -> Result<Vec<f64>, SacError> {
        let a = self.q1.predict(inputs)?;
        let b = self.q2.predict(inputs)?;
        Ok(a.values().iter().zip(b.values()).map(|(x, y)| x.min(*y)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub obs_dim: usize,
    pub bounds: ActionBounds,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub mode: EntropyRewardMode,
    pub alpha_init: f64,
    pub alpha_mode: AlphaMode,
    pub target_entropy_per_dim: f64,
    pub zero_mean_momentum: f64,
}

impl SacConfig {
    /// Chain-task defaults: one hidden layer of 100, lr 1e-4, gamma 0.99,
    /// tau 5e-3, entropy target -1 per action dimension.
    pub fn new(obs_dim: usize, bounds: ActionBounds, mode: EntropyRewardMode) -> Self {
        Self {
            obs_dim,
            bounds,
            hidden: vec![100],
            lr: 1e-4,
            gamma: 0.99,
            tau: 5e-3,
            mode,
            alpha_init: 0.2,
            alpha_mode: AlphaMode::Tunable,
            target_entropy_per_dim: -1.0,
            zero_mean_momentum: 1e-3,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy_per_dim * self.action_dim() as f64
    }

    fn validate(&self) -> Result<(), SacError> {
        let err = |m: String| Err(SacError::InvalidConfig(m));
        if self.obs_dim == 0 {
            return err("obs_dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return err(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.lr > 0.0) {
            return err(format!("lr {} must be positive", self.lr));
        }
        if !(self.zero_mean_momentum > 0.0 && self.zero_mean_momentum < 1.0) {
            return err(format!("zero_mean_momentum {} outside (0, 1)", self.zero_mean_momentum));
        }
        Ok(())
    }

    fn layers(&self, input: usize, output: usize) -> Vec<usize> {
        let mut v = vec![input];
        v.extend(&self.hidden);
        v.push(output);
        v
    }
}

/// A sampled replay batch in matrix form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Tensor,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub next_obs: Tensor,
    /// 0 for terminal transitions, 1 otherwise.
    pub bootstrap: Vec<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self, SacError> {
        if ts.is_empty() {
            return Err(SacError::Replay(ReplayError::Empty));
        }
        let obs: Vec<&[f64]> = ts.iter().map(|t| t.obs.as_slice()).collect();
        let actions: Vec<&[f64]> = ts.iter().map(|t| t.action.as_slice()).collect();
        let next: Vec<&[f64]> = ts.iter().map(|t| t.next_obs.as_slice()).collect();
        Ok(Self {
            obs: Tensor::from_rows(&obs)?,
            actions: Tensor::from_rows(&actions)?,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_obs: Tensor::from_rows(&next)?,
            bootstrap: ts.iter().map(|t| t.termination.bootstrap()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn concat_rows(a: &Tensor, b: &Tensor) -> Result<Tensor, SacError> {
    if a.rows() != b.rows() {
        return Err(DiffError::ShapeMismatch { op: "concat", left: a.shape().to_vec(), right: b.shape().to_vec() }.into());
    }
    let mut v = Vec::with_capacity(a.len() + b.len());
    for r in 0..a.rows() {
        v.extend_from_slice(a.row(r));
        v.extend_from_slice(b.row(r));
    }
    Ok(Tensor::matrix(a.rows(), a.cols() + b.cols(), v)?)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Sample,
    Mode,
}

impl FromStr for ActionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sample" => Ok(Self::Sample),
            "mode" => Ok(Self::Mode),
            other => Err(format!("unknown action mode `{other}` (expected sample|mode)")),
        }
    }
}

/// Critic targets and the entropy rewards that went into them.
#[derive(Debug, Clone)]
pub struct TdTargets {
    pub targets: Vec<f64>,
    pub next_entropy: Vec<f64>,
    pub entropy_rewards: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticStats {
    pub loss: f64,
    pub mean_target: f64,
    pub mean_entropy_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    /// Per-state `-log pi(a|s)` of the fresh actions.
    pub entropies: Vec<f64>,
    /// Mean of `min(q1, q2)(s, a ~ pi)` over the batch, before the update.
    pub expected_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub expected_v: f64,
    pub ent_reward_mean: f64,
    pub mean_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    config: SacConfig,
    actor: Mlp,
    actor_opt: Adam,
    critics: CriticPair,
    alpha: AlphaTuner,
    entropy_mean: EntropyRewardMean,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(config: SacConfig, seed: u64) -> Result<Self, SacError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adam = AdamConfig::with_lr(config.lr);
        let actor = Mlp::new(&config.layers(config.obs_dim, 2 * config.action_dim()), &mut rng)?;
        let actor_opt = Adam::new(adam, &actor.params())?;
        let critic_layers = config.layers(config.obs_dim + config.action_dim(), 1);
        let critics = CriticPair::new(&critic_layers, config.tau, adam, &mut rng)?;
        let alpha = AlphaTuner::new(config.alpha_init, config.target_entropy(), config.alpha_mode, adam)?;
        let entropy_mean = EntropyRewardMean::new(config.zero_mean_momentum);
        Ok(Self { config, actor, actor_opt, critics, alpha, entropy_mean, rng })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn mode(&self) -> EntropyRewardMode {
        self.config.mode
    }

    /// Switches the entropy reward mode, leaving every other piece of state alone.
    pub fn set_mode(&mut self, mode: EntropyRewardMode) {
        self.config.mode = mode;
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critics(&self) -> &CriticPair {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut CriticPair {
        &mut self.critics
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.alpha()
    }

    pub fn alpha_tuner(&self) -> &AlphaTuner {
        &self.alpha
    }

    pub fn entropy_mean(&self) -> &EntropyRewardMean {
        &self.entropy_mean
    }

    pub fn entropy_mean_mut(&mut self) -> &mut EntropyRewardMean {
        &mut self.entropy_mean
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Policy distribution at one observation.
    pub fn policy(&self, obs: &[f64]) -> Result<SquashedGaussian, SacError> {
        let head = self.actor.predict(&Tensor::matrix(1, obs.len(), obs.to_vec())?)?;
        Ok(SquashedGaussian::from_head(head.values(), self.config.bounds.clone())?)
    }

    /// Action from an external RNG stream; `Mode` ignores the RNG.
    pub fn act_with<R: Rng + ?Sized>(&self, obs: &[f64], mode: ActionMode, rng: &mut R) -> Result<ActionSample, SacError> {
        let dist = self.policy(obs)?;
        Ok(match mode {
            ActionMode::Sample => dist.sample_with(rng),
            ActionMode::Mode => {
                let pre_squash = dist.mean().to_vec();
                ActionSample { action: dist.mode(), log_prob: dist.log_prob(&pre_squash), pre_squash }
            }
        })
    }

    /// Exploration action drawn from the agent's own RNG stream.
    pub fn act(&mut self, obs: &[f64]) -> Result<ActionSample, SacError> {
        let dist = self.policy(obs)?;
        Ok(dist.sample_with(&mut self.rng))
    }

    /// Samples `a ~ pi(.|s)` row by row for a `[batch, obs_dim]` tensor.
    /// Returns the actions and their entropy estimates.
    pub fn sample_actions<R: Rng + ?Sized>(&self, obs: &Tensor, rng: &mut R) -> Result<(Tensor, Vec<f64>), SacError> {
        let heads = self.actor.predict(obs)?;
        let noise = standard_normal(rng, obs.rows(), self.config.action_dim());
        let (actions, log_probs) = sample_batch(&heads, &noise, &self.config.bounds)?;
        Ok((actions, log_probs.into_iter().map(|lp| -lp).collect()))
    }

    /// Critic targets for `batch` with the current running mean; does not
    /// update any state besides the agent RNG.
    pub fn td_targets(&mut self, batch: &Batch) -> Result<TdTargets, SacError> {
        let mut rng = self.rng.clone();
        let out = self.td_targets_inner(batch, &mut rng, false);
        self.rng = rng;
        out
    }

    fn td_targets_inner(&mut self, batch: &Batch, rng: &mut ChaCha8Rng, update_mean: bool) -> Result<TdTargets, SacError> {
        let (next_actions, next_entropy) = self.sample_actions(&batch.next_obs, rng)?;
        let next_q = self.critics.target_min(&concat_rows(&batch.next_obs, &next_actions)?)?;
        let alpha = self.alpha();
        let mode = self.config.mode;
        if update_mean && mode == EntropyRewardMode::ZeroMean {
            let weighted: Vec<f64> = next_entropy.iter().map(|h| alpha * h).collect();
            self.entropy_mean.update(mean(&weighted));
        }
        let entropy_rewards: Vec<f64> = next_entropy.iter().map(|&h| entropy_reward(mode, alpha, h, &self.entropy_mean)).collect();
        let targets = (0..batch.len())
            .map(|i| td_target(batch.rewards[i], batch.bootstrap[i], self.config.gamma, next_q[i], entropy_rewards[i]))
            .collect();
        Ok(TdTargets { targets, next_entropy, entropy_rewards })
    }

    /// One regression step of both critics toward the TD targets. In
    /// zero-mean mode the running mean is updated from this batch before
    /// the targets are formed.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<CriticStats, SacError> {
        let mut rng = self.rng.clone();
        let td = self.td_targets_inner(batch, &mut rng, true);
        self.rng = rng;
        let td = td?;

        let mut tape = Tape::new();
        let inputs = tape.constant(concat_rows(&batch.obs, &batch.actions)?);
        let y = tape.constant(Tensor::column(td.targets.clone()));
        let v1 = self.critics.q1.forward(&mut tape, inputs, true)?;
        let v2 = self.critics.q2.forward(&mut tape, inputs, true)?;
        let e1 = tape.sub(v1.output, y)?;
        let e2 = tape.sub(v2.output, y)?;
        let s1 = tape.square(e1);
        let s2 = tape.square(e2);
        let m1 = tape.mean(s1);
        let m2 = tape.mean(s2);
        let total = tape.add(m1, m2)?;
        let loss = tape.scale(total, 0.5);
        let loss_value = tape.value(loss).values()[0];
        if !loss_value.is_finite() {
            return Err(SacError::NonFiniteLoss("critic"));
        }
        let mut grads = tape.backward(loss)?;

        let g1: Vec<Tensor> = v1.params.iter().map(|&p| grads.take(p).expect("critic param grad")).collect();
        let g2: Vec<Tensor> = v2.params.iter().map(|&p| grads.take(p).expect("critic param grad")).collect();
        let CriticPair { q1, q2, opt1, opt2, .. } = &mut self.critics;
        opt1.step(&mut q1.params_mut(), &g1.iter().collect::<Vec<_>>())?;
        opt2.step(&mut q2.params_mut(), &g2.iter().collect::<Vec<_>>())?;

        Ok(CriticStats {
            loss: loss_value,
            mean_target: mean(&td.targets),
            mean_entropy_reward: mean(&td.entropy_rewards),
        })
    }

    /// Critic loss and its parameter gradients (q1 params then q2 params)
    /// at fixed targets, without updating anything.
    pub fn critic_loss_and_grads(&self, batch: &Batch, targets: &[f64]) -> Result<(f64, Vec<Tensor>), SacError> {
        let mut tape = Tape::new();
        let inputs = tape.constant(concat_rows(&batch.obs, &batch.actions)?);
        let y = tape.constant(Tensor::column(targets.to_vec()));
        let v1 = self.critics.q1.forward(&mut tape, inputs, true)?;
        let v2 = self.critics.q2.forward(&mut tape, inputs, true)?;
        let e1 = tape.sub(v1.output, y)?;
        let e2 = tape.sub(v2.output, y)?;
        let s1 = tape.square(e1);
        let s2 = tape.square(e2);
        let m1 = tape.mean(s1);
        let m2 = tape.mean(s2);
        let total = tape.add(m1, m2)?;
        let loss = tape.scale(total, 0.5);
        let value = tape.value(loss).values()[0];
        let mut grads = tape.backward(loss)?;
        let g = v1.params.iter().chain(&v2.params).map(|&p| grads.take(p).expect("grad")).collect();
        Ok((value, g))
    }

    /// Actor loss `mean(alpha * log pi(a|s) - min Q(s, a))` for the given
    /// noise, its gradients in [`Mlp::params`] order, the entropies and the
    /// expected V.
    pub fn actor_loss_and_grads(&self, obs: &Tensor, noise: &Tensor) -> Result<(f64, Vec<Tensor>, Vec<f64>, f64), SacError> {
        let alpha = self.alpha();
        let mut tape = Tape::new();
        let s = tape.constant(obs.clone());
        let head = self.actor.forward(&mut tape, s, true)?;
        let sample = sample_on_tape(&mut tape, head.output, noise, &self.config.bounds)?;
        let q_in = tape.concat_cols(s, sample.action)?;
        let q1 = self.critics.q1.forward(&mut tape, q_in, false)?;
        let q2 = self.critics.q2.forward(&mut tape, q_in, false)?;
        let min_q = tape.min(q1.output, q2.output)?;
        let weighted = tape.scale(sample.log_prob, alpha);
        let per_state = tape.sub(weighted, min_q)?;
        let loss = tape.mean(per_state);

        let loss_value = tape.value(loss).values()[0];
        if !loss_value.is_finite() {
            return Err(SacError::NonFiniteLoss("actor"));
        }
        let entropies: Vec<f64> = tape.value(sample.log_prob).values().iter().map(|lp| -lp).collect();
        let expected_v = mean(tape.value(min_q).values());
        let mut grads = tape.backward(loss)?;
        let g = head.params.iter().map(|&p| grads.take(p).expect("actor param grad")).collect();
        Ok((loss_value, g, entropies, expected_v))
    }

    /// One reparameterized policy-improvement step; critics are frozen.
    /// Identical for every entropy reward mode.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<ActorStats, SacError> {
        let noise = standard_normal(&mut self.rng, batch.len(), self.config.action_dim());
        let (loss, grads, entropies, expected_v) = self.actor_loss_and_grads(&batch.obs, &noise)?;
        self.actor_opt.step(&mut self.actor.params_mut(), &grads.iter().collect::<Vec<_>>())?;
        Ok(ActorStats { loss, entropies, expected_v })
    }

    pub fn alpha_update(&mut self, entropies: &[f64]) -> Result<f64, SacError> {
        self.alpha.update(entropies)
    }

    pub fn soft_update(&mut self) {
        self.critics.soft_update();
    }

    /// Critic, actor, temperature and target updates on one replay batch.
    pub fn train_iteration<R: Rng + ?Sized>(&mut self, replay: &ReplayBuffer, batch_size: usize, rng: &mut R) -> Result<TrainMetrics, SacError> {
        let batch = Batch::from_transitions(&replay.sample(batch_size, rng)?)?;
        let critic = self.critic_update(&batch)?;
        let actor = self.actor_update(&batch)?;
        let alpha = self.alpha_update(&actor.entropies)?;
        self.soft_update();
        Ok(TrainMetrics {
            critic_loss: critic.loss,
            actor_loss: actor.loss,
            alpha,
            entropy: mean(&actor.entropies),
            expected_v: actor.expected_v,
            ent_reward_mean: self.entropy_mean.value(),
            mean_target: critic.mean_target,
        })
    }

    /// Expected V and mean entropy estimate at `obs` using an external RNG.
    pub fn diagnostics<R: Rng + ?Sized>(&self, obs: &Tensor, rng: &mut R) -> Result<(f64, f64), SacError> {
        let (actions, entropies) = self.sample_actions(obs, rng)?;
        let q = self.critics.online_min(&concat_rows(obs, &actions)?)?;
        Ok((mean(&q), mean(&entropies)))
    }

    pub fn save(&self, path: &Path) -> Result<(), SacError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{CHECKPOINT_HEADER}")?;
        serde_json::to_writer(&mut f, self).map_err(|e| SacError::Checkpoint(e.to_string()))?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SacError> {
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        if header.trim_end() != CHECKPOINT_HEADER {
            return Err(SacError::Checkpoint(format!("unexpected header `{}`", header.trim_end())));
        }
        serde_json::from_reader(reader).map_err(|e| SacError::Checkpoint(e.to_string()))
    }
}
