//! C ABI over the `entsac` library.
//!
//! Every fallible function returns an [`EntsacStatus`]; on failure the
//! message is available from [`entsac_last_error_message`] on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use entsac::harness::{self, ExperimentConfig, HarnessError};
use entsac::oracle::{self, ChainMdp, OracleError};
use entsac::envs::ChainConfig;
use entsac::sac::{ActionMode, Agent, SacError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntsacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Diverged = 5,
    Checkpoint = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

/// Parsed experiment configuration.
pub struct EntsacConfig {
    inner: ExperimentConfig,
}

/// Trained agent plus the RNG used for sampled actions.
pub struct EntsacAgent {
    agent: Agent,
    rng: ChaCha8Rng,
}

/// Output of [`entsac_oracle_report`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EntsacOracleReport {
    /// Constant per-step bonus `alpha * gamma * entropy`.
    pub bonus: f64,
    /// Exact dynamic-programming verdict.
    pub survive_preferred: bool,
    /// `alpha * entropy > penalty`.
    pub threshold_survive_preferred: bool,
    pub v0: f64,
    pub baseline_v0: f64,
    /// Greedy rollout length from node 0, and whether it terminated.
    pub rollout_steps: usize,
    pub rollout_terminated: bool,
    pub baseline_rollout_steps: usize,
    pub baseline_rollout_terminated: bool,
}

/// Output of [`entsac_run_experiment`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EntsacRunSummary {
    pub eval_points: usize,
    pub final_return: f64,
    pub final_success: f64,
    pub final_alpha: f64,
    pub final_expected_v: f64,
    pub max_train_expected_v: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(EntsacStatus, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Config(_) | HarnessError::Env(_) | HarnessError::Schema(_) | HarnessError::Aggregate(_) => EntsacStatus::Config,
            HarnessError::Io(_) | HarnessError::Csv(_) => EntsacStatus::Io,
            HarnessError::Diverged { .. } => EntsacStatus::Diverged,
            HarnessError::Sac(SacError::Io(_)) => EntsacStatus::Io,
            HarnessError::Sac(SacError::Checkpoint(_)) => EntsacStatus::Checkpoint,
            _ => EntsacStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<SacError> for Failure {
    fn from(e: SacError) -> Self {
        let status = match &e {
            SacError::Io(_) => EntsacStatus::Io,
            SacError::Checkpoint(_) => EntsacStatus::Checkpoint,
            SacError::InvalidConfig(_) => EntsacStatus::Config,
            _ => EntsacStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure(EntsacStatus::InvalidArgument, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EntsacStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(EntsacStatus::NullPointer, format!("`{name}` is null"))
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EntsacStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EntsacStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            EntsacStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn entsac_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn entsac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `alpha * entropy > penalty`.
#[no_mangle]
pub extern "C" fn entsac_inflation_threshold(alpha: f64, entropy: f64, penalty: f64) -> bool {
    oracle::inflation_threshold(alpha, entropy, penalty)
}

/// Solves the episodic chain with and without the bonus `alpha * gamma * entropy`.
///
/// # Safety
/// `out` must be null or point to writable memory for one report.
#[no_mangle]
pub unsafe extern "C" fn entsac_oracle_report(
    alpha: f64,
    entropy: f64,
    penalty: f64,
    gamma: f64,
    horizon: usize,
    out: *mut EntsacOracleReport,
) -> EntsacStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = oracle::report(alpha, entropy, penalty, gamma, horizon)?;
        *out = EntsacOracleReport {
            bonus: r.bonus,
            survive_preferred: r.survive_preferred,
            threshold_survive_preferred: r.threshold_survive_preferred,
            v0: r.v0,
            baseline_v0: r.baseline_v0,
            rollout_steps: r.rollout.actions.len(),
            rollout_terminated: r.rollout.terminated,
            baseline_rollout_steps: r.baseline_rollout.actions.len(),
            baseline_rollout_terminated: r.baseline_rollout.terminated,
        };
        Ok(())
    })
}

/// Value-iteration values of the infinite-horizon chain with a constant
/// per-step bonus. Writes `len` values; `len` must equal the chain length (5).
///
/// # Safety
/// `values` must be null or point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn entsac_infinite_chain_values(
    gamma: f64,
    bonus: f64,
    tolerance: f64,
    values: *mut f64,
    len: usize,
) -> EntsacStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let mdp = ChainMdp::from_config(&ChainConfig::infinite(), gamma, bonus);
        if len < mdp.length {
            return Err(Failure(EntsacStatus::BufferTooSmall, format!("need {} values, got {len}", mdp.length)));
        }
        let sol = oracle::infinite_horizon_vi(&mdp, tolerance)?;
        std::slice::from_raw_parts_mut(values, mdp.length).copy_from_slice(&sol.values);
        Ok(())
    })
}

/// Parses config text (dotted `key = value` lines). An empty string gives
/// the chain defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entsac_config_parse(text: *const c_char, out: *mut *mut EntsacConfig) -> EntsacStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let inner = ExperimentConfig::parse(text, &[])?;
        *out = Box::into_raw(Box::new(EntsacConfig { inner }));
        Ok(())
    })
}

/// Applies one `key=value` override.
///
/// # Safety
/// `config` must come from [`entsac_config_parse`]; `assignment` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn entsac_config_set(config: *mut EntsacConfig, assignment: *const c_char) -> EntsacStatus {
    guard(|| {
        let config = config.as_mut().ok_or_else(|| null("config"))?;
        let assignment = str_arg(assignment, "assignment")?;
        config.inner = config.inner.with_override(assignment)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or come from [`entsac_config_parse`], and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn entsac_config_free(config: *mut EntsacConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Trains one seed, writing `seed_<N>.csv` and `seed_<N>.ckpt` into `out_dir`.
///
/// # Safety
/// `config` must come from [`entsac_config_parse`]; `out_dir` must be a
/// NUL-terminated path; `summary` may be null.
#[no_mangle]
pub unsafe extern "C" fn entsac_run_experiment(
    config: *const EntsacConfig,
    seed: u64,
    out_dir: *const c_char,
    summary: *mut EntsacRunSummary,
) -> EntsacStatus {
    guard(|| {
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        let dir = str_arg(out_dir, "out_dir")?;
        let result = harness::run_experiment_to_dir(&config.inner, seed, Path::new(dir))?;
        if let Some(s) = summary.as_mut() {
            let last = result.rows.last();
            *s = EntsacRunSummary {
                eval_points: result.rows.len(),
                final_return: last.map_or(f64::NAN, |r| r.episodic_return),
                final_success: last.map_or(f64::NAN, |r| r.success),
                final_alpha: result.agent.alpha(),
                final_expected_v: last.map_or(f64::NAN, |r| r.expected_v),
                max_train_expected_v: result.max_train_expected_v,
            };
        }
        Ok(())
    })
}

/// Loads a checkpoint. `seed` seeds the RNG used for sampled actions.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entsac_agent_load(path: *const c_char, seed: u64, out: *mut *mut EntsacAgent) -> EntsacStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let agent = Agent::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(EntsacAgent { agent, rng: ChaCha8Rng::seed_from_u64(seed) }));
        Ok(())
    })
}

/// Observation size expected by [`entsac_agent_act`]; 0 for a null handle.
///
/// # Safety
/// `agent` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn entsac_agent_obs_dim(agent: *const EntsacAgent) -> usize {
    agent.as_ref().map_or(0, |a| a.agent.config().obs_dim)
}

/// Action size written by [`entsac_agent_act`]; 0 for a null handle.
///
/// # Safety
/// `agent` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn entsac_agent_action_dim(agent: *const EntsacAgent) -> usize {
    agent.as_ref().map_or(0, |a| a.agent.config().action_dim())
}

/// Current temperature; NaN for a null handle.
///
/// # Safety
/// `agent` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn entsac_agent_alpha(agent: *const EntsacAgent) -> f64 {
    agent.as_ref().map_or(f64::NAN, |a| a.agent.alpha())
}

/// Chooses an action: the squashed mean if `deterministic`, otherwise a
/// sample. Optionally reports `log pi(a|s)`.
///
/// # Safety
/// `obs` must point to `obs_len` doubles, `action` to `action_len` writable
/// doubles; `log_prob` may be null.
#[no_mangle]
pub unsafe extern "C" fn entsac_agent_act(
    agent: *mut EntsacAgent,
    obs: *const f64,
    obs_len: usize,
    deterministic: bool,
    action: *mut f64,
    action_len: usize,
    log_prob: *mut f64,
) -> EntsacStatus {
    guard(|| {
        let handle = agent.as_mut().ok_or_else(|| null("agent"))?;
        if obs.is_null() {
            return Err(null("obs"));
        }
        if action.is_null() {
            return Err(null("action"));
        }
        let cfg = handle.agent.config();
        if obs_len != cfg.obs_dim {
            return Err(invalid(format!("observation has {obs_len} values, expected {}", cfg.obs_dim)));
        }
        if action_len < cfg.action_dim() {
            return Err(Failure(EntsacStatus::BufferTooSmall, format!("action buffer holds {action_len}, need {}", cfg.action_dim())));
        }
        let obs = std::slice::from_raw_parts(obs, obs_len);
        let mode = if deterministic { ActionMode::Mode } else { ActionMode::Sample };
        let sample = handle.agent.act_with(obs, mode, &mut handle.rng)?;
        std::slice::from_raw_parts_mut(action, sample.action.len()).copy_from_slice(&sample.action);
        if let Some(lp) = log_prob.as_mut() {
            *lp = sample.log_prob;
        }
        Ok(())
    })
}

/// # Safety
/// `agent` must be null or come from [`entsac_agent_load`], and must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn entsac_agent_free(agent: *mut EntsacAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}
