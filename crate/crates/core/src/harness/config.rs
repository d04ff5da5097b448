//! Experiment configuration.
//!
//! Files are flat `key = value` lines with dotted keys, for example
//!
//! ```text
//! env.kind = "chain"
//! env.chain.episodic = false
//! agent.mode = "zeromean"
//! agent.alpha.tunable = false
//! train.seeds = [0, 1, 2]
//! ```
//!
//! Every key is optional; missing keys take the chain-task defaults.
//! Overrides given as `key=value` strings are applied on top of the file.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::envs::{ChainConfig, EnvSpec, NavConfig};
use crate::sac::{ActionMode, AlphaMode, EntropyRewardMode, SacConfig};

/// Per-dimension entropy target used for nav when none is configured.
pub const NAV_TARGET_ENTROPY_PER_DIM: f64 = -1.609;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Chain,
    Nav,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub kind: EnvKind,
    pub chain: ChainConfig,
    pub nav: NavConfig,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { kind: EnvKind::Chain, chain: ChainConfig::default(), nav: NavConfig::default() }
    }
}

impl EnvSection {
    pub fn spec(&self) -> EnvSpec {
        match self.kind {
            EnvKind::Chain => EnvSpec::Chain(self.chain.clone()),
            EnvKind::Nav => EnvSpec::Nav(self.nav.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaSection {
    pub init: f64,
    pub tunable: bool,
}

impl Default for AlphaSection {
    fn default() -> Self {
        Self { init: 0.2, tunable: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub mode: EntropyRewardMode,
    pub alpha: AlphaSection,
    /// Defaults to -1 for the chain and -1.609 for nav.
    pub target_entropy_per_dim: Option<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub zero_mean_momentum: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            mode: EntropyRewardMode::Full,
            alpha: AlphaSection::default(),
            target_entropy_per_dim: None,
            gamma: 0.99,
            tau: 5e-3,
            hidden: vec![100],
            lr: 1e-4,
            batch_size: 256,
            zero_mean_momentum: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub total_steps: u64,
    /// Environment steps collected before the first update.
    pub initial_collect: u64,
    pub buffer_capacity: usize,
    pub seeds: Vec<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { total_steps: 50_000, initial_collect: 5_000, buffer_capacity: 50_000, seeds: (0..9).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub interval: u64,
    pub episodes: usize,
    pub action_mode: ActionMode,
    /// Also compute the adversarial-reward gap at every eval point.
    pub adversarial_gap: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { interval: 1_000, episodes: 20, action_mode: ActionMode::Sample, adversarial_gap: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardNormSection {
    pub enabled: bool,
    pub clip: f64,
    pub epsilon: f64,
}

impl Default for RewardNormSection {
    fn default() -> Self {
        Self { enabled: false, clip: 5.0, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub agent: AgentSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub reward_norm: RewardNormSection,
}

impl ExperimentConfig {
    /// Chain-task defaults for `mode`.
    pub fn chain(mode: EntropyRewardMode) -> Self {
        let mut cfg = Self::default();
        cfg.agent.mode = mode;
        cfg
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &[])
    }

    pub fn from_file_with_overrides(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    /// Parses config text, then applies `key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` override to an already parsed config.
    pub fn with_override(&self, assignment: &str) -> Result<Self, HarnessError> {
        let mut table = toml::Table::try_from(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        apply_override(&mut table, assignment)?;
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        self.env.spec().build()?;
        let a = &self.agent;
        if !(a.alpha.init > 0.0) {
            return err(format!("agent.alpha.init {} must be positive", a.alpha.init));
        }
        if !(0.0..=1.0).contains(&a.gamma) {
            return err(format!("agent.gamma {} outside [0, 1]", a.gamma));
        }
        if !(0.0..=1.0).contains(&a.tau) {
            return err(format!("agent.tau {} outside [0, 1]", a.tau));
        }
        if a.hidden.contains(&0) {
            return err("agent.hidden sizes must be positive".into());
        }
        if !(a.lr > 0.0) {
            return err(format!("agent.lr {} must be positive", a.lr));
        }
        if a.batch_size == 0 {
            return err("agent.batch_size must be positive".into());
        }
        if !(a.zero_mean_momentum > 0.0 && a.zero_mean_momentum < 1.0) {
            return err(format!("agent.zero_mean_momentum {} outside (0, 1)", a.zero_mean_momentum));
        }
        let t = &self.train;
        if t.total_steps == 0 || t.buffer_capacity == 0 {
            return err("train.total_steps and train.buffer_capacity must be positive".into());
        }
        if t.seeds.is_empty() {
            return err("train.seeds must not be empty".into());
        }
        if t.seeds.iter().collect::<BTreeSet<_>>().len() != t.seeds.len() {
            return err("train.seeds must be distinct".into());
        }
        if self.eval.interval == 0 {
            return err("eval.interval must be positive".into());
        }
        let r = &self.reward_norm;
        if !(r.clip > 0.0 && r.epsilon > 0.0) {
            return err("reward_norm.clip and reward_norm.epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn target_entropy_per_dim(&self) -> f64 {
        self.agent.target_entropy_per_dim.unwrap_or(match self.env.kind {
            EnvKind::Chain => -1.0,
            EnvKind::Nav => NAV_TARGET_ENTROPY_PER_DIM,
        })
    }

    /// Agent settings for this experiment's environment.
    pub fn sac_config(&self) -> Result<SacConfig, HarnessError> {
        let spec = self.env.spec();
        let env = spec.build()?;
        use crate::envs::Environment;
        let mut c = SacConfig::new(env.obs_dim(), env.action_bounds().clone(), self.agent.mode);
        c.hidden = self.agent.hidden.clone();
        c.lr = self.agent.lr;
        c.gamma = self.agent.gamma;
        c.tau = self.agent.tau;
        c.alpha_init = self.agent.alpha.init;
        c.alpha_mode = if self.agent.alpha.tunable { AlphaMode::Tunable } else { AlphaMode::Fixed };
        c.target_entropy_per_dim = self.target_entropy_per_dim();
        c.zero_mean_momentum = self.agent.zero_mean_momentum;
        Ok(c)
    }
}

/// Sets `a.b.c = value` in `table`, creating intermediate tables. The value
/// is read as a TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), HarnessError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() || key.split('.').any(|p| p.trim().is_empty()) {
        return Err(HarnessError::Config(format!("bad override key `{key}`")));
    }
    let value = parse_value(raw);
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    let (last, path) = parts.split_last().expect("nonempty");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(HarnessError::Config(format!("override `{key}`: `{p}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
