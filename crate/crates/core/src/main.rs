use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use entsac::envs::{ChainConfig, EnvSpec, NavConfig};
use entsac::harness::{self, ExperimentConfig};
use entsac::oracle;
use entsac::sac::{ActionMode, Agent, EntropyRewardMode};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "entsac", version, about = "Entropy-reward ablations of soft actor-critic on toy tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Zeromean,
    None,
}

impl From<ModeArg> for EntropyRewardMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => EntropyRewardMode::Full,
            ModeArg::Zeromean => EntropyRewardMode::ZeroMean,
            ModeArg::None => EntropyRewardMode::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Chain,
    ChainInfinite,
    Nav,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActionModeArg {
    Sample,
    Mode,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed; writes seed_<N>.csv and seed_<N>.ckpt into --out.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
        /// Extra `key=value` config overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint and print a JSON summary.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        env: EnvArg,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, value_enum, default_value = "sample")]
        action_mode: ActionModeArg,
        /// Enable the nav obstacle.
        #[arg(long)]
        obstacle: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-step Student-t intervals over metric CSVs.
    Aggregate {
        #[arg(long)]
        glob: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Solve the episodic chain with a constant entropy bonus.
    Oracle {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        entropy: f64,
        #[arg(long, default_value_t = 0.05)]
        penalty: f64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        /// Also print the value table.
        #[arg(long)]
        table: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Train { config, seed, mode, out, overrides } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::from_file_with_overrides(path, &overrides)?,
                None => ExperimentConfig::parse("", &overrides)?,
            };
            if let Some(m) = mode {
                cfg.agent.mode = m.into();
            }
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
            log::info!("training {} seed {seed} for {} steps", cfg.agent.mode.variant_name(), cfg.train.total_steps);
            let result = harness::run_experiment_to_dir(&cfg, seed, &out)?;
            if let Some(last) = result.rows.last() {
                log::info!("final: return {:.3}, success {:.2}, alpha {:.4}", last.episodic_return, last.success, last.alpha);
            }
            println!("{}", harness::csv_path(&out, seed).display());
        }
        Command::Eval { checkpoint, env, episodes, action_mode, obstacle, seed } => {
            let agent = Agent::load(&checkpoint)?;
            let spec = match env {
                EnvArg::Chain => EnvSpec::Chain(ChainConfig::default()),
                EnvArg::ChainInfinite => EnvSpec::Chain(ChainConfig::infinite()),
                EnvArg::Nav => EnvSpec::Nav(NavConfig { obstacle_enabled: obstacle, ..NavConfig::default() }),
            };
            let mode = match action_mode {
                ActionModeArg::Sample => ActionMode::Sample,
                ActionModeArg::Mode => ActionMode::Mode,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let summary = harness::eval_agent(&agent, &spec, episodes, mode, &mut rng)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Aggregate { glob, out, confidence } => {
            let mut paths = glob::glob(&glob)?.collect::<Result<Vec<_>, _>>()?;
            paths.sort();
            let rows = harness::aggregate_ci(&paths, confidence)?;
            harness::write_aggregate(&rows, BufWriter::new(File::create(&out)?))?;
            log::info!("aggregated {} files into {}", paths.len(), out.display());
        }
        Command::Oracle { alpha, entropy, penalty, gamma, horizon, table } => {
            let report = oracle::report(alpha, entropy, penalty, gamma, horizon)?;
            println!("bonus c = alpha*gamma*h = {:.6}", report.bonus);
            println!("survive_preferred = {}", report.survive_preferred);
            println!("threshold (alpha*h > penalty) = {}", report.threshold_survive_preferred);
            println!("V[0][node0] = {:.6} (c = 0: {:.6})", report.v0, report.baseline_v0);
            print_rollout("greedy", &report.rollout);
            print_rollout("greedy, c = 0", &report.baseline_rollout);
            if table {
                let config = ChainConfig { step_penalty: -penalty.abs(), time_limit: horizon, ..ChainConfig::default() };
                let sol = oracle::finite_horizon_dp(&oracle::ChainMdp::from_config(&config, gamma, report.bonus))?;
                println!("t\tV(node0..)\tpolicy");
                for t in 0..horizon {
                    let vs: Vec<String> = sol.values[t].iter().map(|v| format!("{v:.4}")).collect();
                    let ps: String = sol.policy[t].iter().map(|a| a.to_string()).collect();
                    println!("{t}\t{}\t{ps}", vs.join(" "));
                }
            }
        }
    }
    Ok(())
}

fn print_rollout(name: &str, r: &oracle::Rollout) {
    let actions: String = r.actions.iter().map(|a| a.to_string()).collect();
    let outcome = if r.terminated { format!("terminates after {} steps", r.actions.len()) } else { "never terminates".to_string() };
    println!("{name}: {outcome}; actions {actions}");
}
