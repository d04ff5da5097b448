//! Experiment runner: configs, training loop, evaluations and aggregation.

mod aggregate;
mod config;
mod eval;
mod metrics;
mod normalize;
mod run;

pub use aggregate::{aggregate_ci, aggregate_header, aggregate_runs, t_interval, t_quantile, write_aggregate, AggregateRow, Interval};
pub use config::{
    apply_override, AgentSection, AlphaSection, EnvKind, EnvSection, EvalSection, ExperimentConfig, RewardNormSection, TrainSection,
    NAV_TARGET_ENTROPY_PER_DIM,
};
pub use eval::{eval_adversarial_gap, eval_agent, eval_dynamics_robustness, eval_policy, AgentPolicy, EpisodeLog, EvalSummary, GapReport, Policy, Scripted};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, CSV_HEADER};
pub use normalize::RewardNormalizer;
pub use run::{checkpoint_path, csv_path, run_experiment, run_experiment_to_dir, EvalPoint, RunResult, TrainEpisode};

use thiserror::Error;

use crate::envs::EnvError;
use crate::replay::ReplayError;
use crate::sac::SacError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("metrics schema: {0}")]
    Schema(String),
    #[error("aggregate: {0}")]
    Aggregate(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error("training diverged at env step {env_steps}: {source}")]
    Diverged {
        env_steps: u64,
        #[source]
        source: SacError,
    },
}
