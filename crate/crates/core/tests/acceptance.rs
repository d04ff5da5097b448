//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Trains the full experiment grid, so a complete run takes a while on a
//! single core. `ENTSAC_ACCEPTANCE=1,5,8` restricts the run to the listed
//! criteria. Per-seed CSVs and aggregates land under the cargo target
//! temp dir for inspection.

mod support;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use entsac::diffnn::Tensor;
use entsac::envs::ChainConfig;
use entsac::harness::{
    aggregate_runs, eval_adversarial_gap, eval_dynamics_robustness, run_experiment, t_interval, write_aggregate, EnvKind,
    ExperimentConfig, RunResult,
};
use entsac::oracle::{self, ChainAction, ChainMdp, DEFAULT_VI_TOLERANCE};
use entsac::sac::{ActionMode, EntropyRewardMode};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const LN_2: f64 = std::f64::consts::LN_2;
/// Eval points after this fraction of training count as "final".
const FINAL_FRACTION: f64 = 0.9;
const NAV_SEEDS: u64 = 3;
const GAP_SEEDS: u64 = 3;

const MODES: [EntropyRewardMode; 3] = [EntropyRewardMode::Full, EntropyRewardMode::ZeroMean, EntropyRewardMode::None];

type Criterion = fn(&mut Report);

struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn record(&mut self, id: &str, name: &str, passed: bool, detail: String) {
        let tag = if passed { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {detail}");
        self.lines.push((format!("[{id}] {name}"), passed, detail));
    }

    fn info(&self, id: &str, name: &str, detail: String) {
        println!("INFO [{id}] {name}: {detail}");
    }
}

fn out_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

/// Trains every `(label, config, seed)` job, using all available cores.
fn train_all(group: &str, jobs: Vec<(String, ExperimentConfig, u64)>) -> Vec<(String, RunResult)> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(String, RunResult)>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let start = Instant::now();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((label, cfg, seed)) = jobs.get(i) else { break };
                let dir = out_dir().join(group).join(label);
                std::fs::create_dir_all(&dir).expect("create output dir");
                let sink = BufWriter::new(File::create(dir.join(format!("seed_{seed}.csv"))).expect("create csv"));
                let r = run_experiment(cfg, *seed, sink).unwrap_or_else(|e| panic!("{group}/{label} seed {seed}: {e}"));
                eprintln!("  {group}/{label} seed {seed} done ({:.0} s elapsed)", start.elapsed().as_secs_f64());
                results.lock().unwrap()[i] = Some((label.clone(), r));
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("job finished")).collect()
}

fn runs_for<'a>(all: &'a [(String, RunResult)], label: &str) -> Vec<&'a RunResult> {
    all.iter().filter(|(l, _)| l == label).map(|(_, r)| r).collect()
}

fn write_group_aggregate(group: &str, label: &str, runs: &[&RunResult]) {
    let rows: Vec<_> = runs.iter().map(|r| r.rows.clone()).collect();
    if let Ok(agg) = aggregate_runs(&rows, 0.95) {
        let path = out_dir().join(group).join(label).join("aggregate.csv");
        if let Ok(f) = File::create(path) {
            let _ = write_aggregate(&agg, BufWriter::new(f));
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean of `metric` over eval points in the final tenth of training.
fn final_mean(r: &RunResult, total: u64, metric: impl Fn(usize) -> f64) -> f64 {
    let from = (total as f64 * FINAL_FRACTION) as u64;
    let xs: Vec<f64> = (0..r.rows.len()).filter(|&i| r.rows[i].env_steps > from).map(metric).collect();
    mean(&xs)
}

fn final_success(r: &RunResult, total: u64) -> f64 {
    final_mean(r, total, |i| r.rows[i].success)
}

/// Mean with its 95% t interval, formatted.
fn summarize(values: &[f64]) -> String {
    match t_interval(values, 0.95) {
        Ok(i) => format!("{:.3} [{:.3}, {:.3}] over {} seeds", i.mean, i.lower, i.upper, values.len()),
        Err(_) => format!("{:.3} over {} seeds", mean(values), values.len()),
    }
}

/// Per-step mean over seeds of one metric.
fn mean_curve(runs: &[&RunResult], metric: impl Fn(&RunResult, usize) -> f64) -> Vec<(u64, f64)> {
    let n = runs[0].rows.len();
    (0..n).map(|i| (runs[0].rows[i].env_steps, mean(&runs.iter().map(|r| metric(r, i)).collect::<Vec<_>>()))).collect()
}

fn chain_jobs(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig, u64)> {
    let mut jobs = Vec::new();
    for mode in MODES {
        let mut cfg = base.clone();
        cfg.agent.mode = mode;
        for &seed in &base.train.seeds {
            jobs.push((mode.variant_name().to_string(), cfg.clone(), seed));
        }
    }
    jobs
}

fn criterion_1(report: &mut Report) {
    let start = Instant::now();
    let r = oracle::report(0.2, LN_2, 0.05, 0.99, 50).expect("oracle");
    let elapsed = start.elapsed().as_secs_f64();
    let never_terminates = !r.rollout.terminated && r.rollout.actions.len() == 50;
    let baseline_rrrr = r.baseline_rollout.terminated && r.baseline_rollout.actions == vec![ChainAction::Right; 4];
    report.record(
        "1",
        "reward-inflation oracle flip",
        r.survive_preferred && never_terminates && baseline_rrrr && elapsed < 1.0,
        format!(
            "survive_preferred={}, greedy never terminates={never_terminates}, c=0 always-Right in 4={baseline_rrrr}, V0={:.4} vs c=0 {:.4}, {:.1} ms",
            r.survive_preferred,
            r.v0,
            r.baseline_v0,
            elapsed * 1e3
        ),
    );
}

fn criterion_2(report: &mut Report) {
    let mut base = ExperimentConfig::default();
    base.agent.alpha.tunable = false;
    base.agent.alpha.init = 0.2;
    let total = base.train.total_steps;
    let all = train_all("c2_fixed_alpha", chain_jobs(&base));
    let baseline_v0 = oracle::report(0.2, LN_2, 0.05, base.agent.gamma, 50).expect("oracle").baseline_v0;

    for mode in MODES {
        let runs = runs_for(&all, mode.variant_name());
        write_group_aggregate("c2_fixed_alpha", mode.variant_name(), &runs);
        let finals: Vec<f64> = runs.iter().map(|r| final_success(r, total)).collect();
        let m = mean(&finals);
        let (passed, bound) = match mode {
            EntropyRewardMode::Full => (m <= 0.2, "<= 0.2"),
            _ => (m >= 0.9, ">= 0.9"),
        };
        report.record(
            "2",
            &format!("fixed alpha 0.2, {} final success {bound}", mode.variant_name()),
            passed,
            summarize(&finals),
        );
    }

    let sac = runs_for(&all, EntropyRewardMode::Full.variant_name());
    let curve = mean_curve(&sac, |r, i| r.rows[i].expected_v);
    let (peak_step, peak) = curve.iter().copied().fold((0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
    report.record(
        "2",
        "SAC expected_v exceeds c=0 oracle V(node0) by >= 0.5",
        peak >= baseline_v0 + 0.5,
        format!("peak seed-mean expected_v {peak:.3} at step {peak_step}; oracle V(node0) {baseline_v0:.4}"),
    );
}

/// First eval step at which the seed-mean success reaches 0.5.
fn crossing_step(runs: &[&RunResult]) -> Option<u64> {
    mean_curve(runs, |r, i| r.rows[i].success).into_iter().find(|&(_, s)| s >= 0.5).map(|(step, _)| step)
}

fn criterion_3(report: &mut Report) {
    let base = ExperimentConfig::default();
    let total = base.train.total_steps;
    let all = train_all("c3_tunable_alpha", chain_jobs(&base));

    let mut crossings = Vec::new();
    for mode in MODES {
        let runs = runs_for(&all, mode.variant_name());
        write_group_aggregate("c3_tunable_alpha", mode.variant_name(), &runs);
        let finals: Vec<f64> = runs.iter().map(|r| final_success(r, total)).collect();
        report.record(
            "3",
            &format!("tunable alpha, {} final success >= 0.9", mode.variant_name()),
            mean(&finals) >= 0.9,
            summarize(&finals),
        );
        crossings.push(crossing_step(&runs));
    }
    let fmt = |c: Option<u64>| c.map_or("never".to_string(), |s| s.to_string());
    let later = |a: Option<u64>, b: Option<u64>| match (a, b) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(a), Some(b)) => a > b,
    };
    let (sac, zero, lite) = (crossings[0], crossings[1], crossings[2]);
    report.record(
        "3",
        "SAC crosses 0.5 mean success strictly later than SACZero and SACLite",
        later(sac, zero) && later(sac, lite),
        format!("first step >= 0.5: SAC {}, SACZero {}, SACLite {}", fmt(sac), fmt(zero), fmt(lite)),
    );

    // Learned critic against the exact c = 0 value of the start state.
    let dp = oracle::report(0.0, 0.0, 0.05, base.agent.gamma, 50).expect("oracle").baseline_v0;
    let obs0 = ChainConfig::default().observe(0);
    let values: Vec<f64> = runs_for(&all, EntropyRewardMode::None.variant_name())
        .iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
            let obs = Tensor::matrix(4096, 1, vec![obs0; 4096]).unwrap();
            r.agent.diagnostics(&obs, &mut rng).expect("diagnostics").0
        })
        .collect();
    report.info(
        "3",
        "SACLite critic V(node0) vs DP value (within 0.05)",
        format!("{} vs {dp:.4}; |diff| {:.4}", summarize(&values), (mean(&values) - dp).abs()),
    );
}

fn criterion_4(report: &mut Report) {
    let mut base = ExperimentConfig::default();
    base.env.chain = ChainConfig::infinite();
    base.eval.action_mode = ActionMode::Mode;
    let total = base.train.total_steps;
    let all = train_all("c4_infinite", chain_jobs(&base));
    for mode in MODES {
        let runs = runs_for(&all, mode.variant_name());
        write_group_aggregate("c4_infinite", mode.variant_name(), &runs);
        let finals: Vec<f64> = runs.iter().map(|r| final_mean(r, total, |i| r.evals[i].mean_steps_at_goal)).collect();
        let m = mean(&finals);
        report.record(
            "4",
            &format!("infinite chain, {} steps at node 4 in 47 +- 1", mode.variant_name()),
            (m - 47.0).abs() <= 1.0,
            format!("{} (mode actions)", summarize(&finals)),
        );
    }
}

fn criterion_5(report: &mut Report) {
    let gamma = 0.99;
    let solve = |c: f64| oracle::infinite_horizon_vi(&ChainMdp::from_config(&ChainConfig::infinite(), gamma, c), DEFAULT_VI_TOLERANCE).expect("vi");
    let base = solve(0.0);
    let mut same_policy = true;
    let mut worst: f64 = 0.0;
    for c in [0.1, 1.0] {
        let s = solve(c);
        same_policy &= s.policy == base.policy;
        for (b, v) in base.values.iter().zip(&s.values) {
            worst = worst.max((v - b - c / (1.0 - gamma)).abs());
        }
    }
    report.record(
        "5",
        "infinite-horizon translation invariance",
        same_policy && worst <= 1e-8,
        format!("identical greedy policy: {same_policy}; max |dV - c/(1-gamma)| = {worst:.2e}"),
    );
}

fn criterion_6(report: &mut Report) {
    let mut base = ExperimentConfig::default();
    base.env.kind = EnvKind::Nav;
    base.env.nav.obstacle_enabled = false;
    let bound = base.env.nav.return_bound();
    let total = base.train.total_steps;
    let mut jobs = Vec::new();
    for mode in [EntropyRewardMode::Full, EntropyRewardMode::None] {
        let mut cfg = base.clone();
        cfg.agent.mode = mode;
        for seed in 0..NAV_SEEDS {
            jobs.push((mode.variant_name().to_string(), cfg.clone(), seed));
        }
    }
    let all = train_all("c6_nav", jobs);
    let mut obstacle = base.env.nav.clone();
    obstacle.obstacle_enabled = true;
    for mode in [EntropyRewardMode::Full, EntropyRewardMode::None] {
        let runs = runs_for(&all, mode.variant_name());
        let from = (total as f64 * FINAL_FRACTION) as u64;
        let train: Vec<f64> = runs.iter().map(|r| r.mean_train_return_after(from).unwrap_or(f64::NAN)).collect();
        report.record(
            "6",
            &format!("nav {} training return >= 0.85 x {bound:.3}", mode.variant_name()),
            mean(&train) >= 0.85 * bound,
            format!("{} (last 10% of training episodes)", summarize(&train)),
        );
        let robust: Vec<f64> = runs
            .iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + r.seed);
                eval_dynamics_robustness(&r.agent, &obstacle, 500, &mut rng).expect("robustness eval")
            })
            .collect();
        report.record(
            "6",
            &format!("nav {} with obstacle, 500 sampled episodes >= 0.80 x {bound:.3}", mode.variant_name()),
            mean(&robust) >= 0.8 * bound,
            summarize(&robust),
        );
    }
}

fn criterion_7(report: &mut Report) {
    let mut base = ExperimentConfig::chain(EntropyRewardMode::None);
    base.agent.alpha.tunable = false;
    base.agent.alpha.init = 0.1;
    base.eval.adversarial_gap = true;
    let jobs = (0..GAP_SEEDS).map(|s| ("SACLite".to_string(), base.clone(), s)).collect();
    let all = train_all("c7_gap", jobs);
    let runs = runs_for(&all, "SACLite");

    // Bookkeeping: recompute log densities from the logged pre-squash values.
    let spec = base.env.spec();
    let mut worst: f64 = 0.0;
    for r in &runs {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + r.seed);
        let g = eval_adversarial_gap(&r.agent, &spec, 50, &mut rng).expect("gap eval");
        let sums: Vec<f64> = g
            .episodes
            .iter()
            .map(|e| {
                e.observations
                    .iter()
                    .zip(&e.pre_squash)
                    .map(|(o, u)| -r.agent.policy(o).expect("policy").log_prob(u))
                    .sum::<f64>()
            })
            .collect();
        let recomputed = r.agent.alpha() * -mean(&sums);
        worst = worst.max((g.gap - recomputed).abs());
    }
    report.record(
        "7",
        "adversarial gap equals alpha x negated entropy-estimate sum",
        worst <= 1e-9,
        format!("max |gap - recomputed| = {worst:.2e}"),
    );

    let curve = mean_curve(&runs, |r, i| r.evals[i].adversarial_gap.expect("gap recorded").abs());
    let q = curve.len() / 4;
    let first: Vec<f64> = curve[..q].iter().map(|p| p.1).collect();
    let last: Vec<f64> = curve[curve.len() - q..].iter().map(|p| p.1).collect();
    let (m_first, m_last) = (mean(&first), mean(&last));
    let sd_last = (last.iter().map(|x| (x - m_last).powi(2)).sum::<f64>() / (last.len() - 1) as f64).sqrt();
    let finite = curve.iter().all(|p| p.1.is_finite());
    let decreases = m_last <= m_first;
    let stable = sd_last <= 0.1 * m_last + 0.05;
    report.record(
        "7",
        "SACLite (fixed alpha 0.1) gap magnitude finite and decreasing or stable",
        finite && (decreases || stable),
        format!("mean |gap| first quarter {m_first:.3}, last quarter {m_last:.3} (sd {sd_last:.3}) over {GAP_SEEDS} seeds"),
    );
}

fn criterion_8(report: &mut Report) {
    let start = Instant::now();
    let checks = support::all_checks();
    let elapsed = start.elapsed().as_secs_f64();
    for c in checks {
        report.record("8", c.name, c.passed, c.detail);
    }
    report.record("8", "property suites finish in under a minute", elapsed < 60.0, format!("{elapsed:.1} s"));
}

fn selected() -> Vec<u32> {
    match std::env::var("ENTSAC_ACCEPTANCE") {
        Ok(list) if !list.trim().is_empty() => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        _ => (1..=8).collect(),
    }
}

fn main() -> ExitCode {
    let mut report = Report { lines: Vec::new() };
    let suite: [(u32, Criterion); 8] = [
        (1, criterion_1),
        (5, criterion_5),
        (8, criterion_8),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (6, criterion_6),
        (7, criterion_7),
    ];
    let wanted = selected();
    let start = Instant::now();
    for (id, run) in suite {
        if wanted.contains(&id) {
            eprintln!("criterion {id} ...");
            run(&mut report);
        }
    }
    let failed = report.lines.iter().filter(|l| !l.1).count();
    println!(
        "\nacceptance: {} passed, {failed} failed, {:.0} s",
        report.lines.len() - failed,
        start.elapsed().as_secs_f64()
    );
    for (name, _, detail) in report.lines.iter().filter(|l| !l.1) {
        println!("  failed {name}: {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
