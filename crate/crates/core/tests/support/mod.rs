//! Property checks shared by `tests/properties.rs` and the acceptance runner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use entsac::diffnn::{Tape, Tensor};
use entsac::envs::Termination;
use entsac::harness::t_interval;
use entsac::policy::{ActionBounds, SquashedGaussian};
use entsac::replay::{ReplayBuffer, Transition};
use entsac::sac::{AlphaMode, Agent, Batch, EntropyRewardMode, SacConfig};

/// Outcome of one property check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

pub fn all_checks() -> Vec<Check> {
    vec![
        tape_gradients(),
        critic_gradients(),
        actor_gradients(),
        density_normalization(),
        entropy_estimator(),
        zero_mean_centering(),
        terminal_timeout_masking(),
        soft_update_extremes(),
        replay_uniformity(),
        interval_coverage(),
    ]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; 0 when both vanish.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` with respect to every entry of `params`.
fn finite_difference(params: &mut [Tensor], f: &mut dyn FnMut(&[Tensor]) -> f64) -> Vec<Vec<f64>> {
    let h = 1e-6;
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Vec::with_capacity(params[p].len());
        for i in 0..params[p].len() {
            let orig = params[p].values()[i];
            params[p].values_mut()[i] = orig + h;
            let up = f(params);
            params[p].values_mut()[i] = orig - h;
            let down = f(params);
            params[p].values_mut()[i] = orig;
            g.push((up - down) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// A scalar built from every differentiable tape operation.
fn composite(tape: &mut Tape, x: entsac::diffnn::Var, w: entsac::diffnn::Var, b: entsac::diffnn::Var) -> entsac::diffnn::Var {
    let h = tape.affine(x, w, Some(b)).unwrap();
    let r = tape.relu(h);
    let t = tape.tanh(h);
    let half = tape.scale(t, 0.5);
    let e = tape.exp(half);
    let nh = tape.neg(h);
    let s = tape.softplus(nh);
    let left = tape.slice_cols(h, 0, 2).unwrap();
    let right = tape.slice_cols(h, 2, 4).unwrap();
    let m = tape.min(left, right).unwrap();
    let e0 = tape.slice_cols(e, 0, 1).unwrap();
    let c = tape.concat_cols(m, e0).unwrap();
    let ca = tape.col_affine(c, &[0.5, 2.0, -1.0], &[0.1, 0.0, 0.3]).unwrap();
    let sq = tape.square(ca);
    let shifted = tape.shift(t, 0.2);
    let cl = tape.clamp(shifted, -0.5, 0.5);
    let rs = tape.mul(r, s).unwrap();
    let a = tape.add(rs, cl).unwrap();
    let a = tape.sub(a, e).unwrap();
    let sa = tape.sum_cols(a);
    let ssq = tape.sum_cols(sq);
    let total = tape.add(sa, ssq).unwrap();
    tape.mean(total)
}

pub fn tape_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = vec![random_tensor(&mut rng, 5, 3), random_tensor(&mut rng, 3, 4), random_tensor(&mut rng, 1, 4)];
    let mut tape = Tape::new();
    let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
    let root = composite(&mut tape, vars[0], vars[1], vars[2]);
    let grads = tape.backward(root).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| grads.get(v).unwrap().values().to_vec()).collect();
    let numeric = finite_difference(&mut params, &mut |ps| {
        let mut t = Tape::new();
        let v: Vec<_> = ps.iter().map(|p| t.param(p.clone())).collect();
        let r = composite(&mut t, v[0], v[1], v[2]);
        t.value(r).values()[0]
    });
    let worst = analytic.iter().zip(&numeric).map(|(a, n)| rel_err(a, n)).fold(0.0, f64::max);
    Check::new("autodiff: tape ops vs finite differences", worst < 1e-4, format!("max rel err {worst:.2e}"))
}

fn small_agent(mode: EntropyRewardMode, seed: u64) -> Agent {
    let mut cfg = SacConfig::new(1, ActionBounds::symmetric(1), mode);
    cfg.hidden = vec![16];
    cfg.alpha_mode = AlphaMode::Fixed;
    Agent::new(cfg, seed).unwrap()
}

fn chain_transition(rng: &mut ChaCha8Rng, termination: Termination) -> Transition {
    let node = rng.gen_range(0..4usize);
    Transition {
        obs: vec![node as f64 / 4.0],
        action: vec![rng.gen_range(-1.0..1.0)],
        reward: -0.05,
        next_obs: vec![(node + 1) as f64 / 4.0],
        termination,
    }
}

fn chain_batch(rng: &mut ChaCha8Rng, n: usize, termination: Termination) -> Batch {
    let ts: Vec<Transition> = (0..n).map(|_| chain_transition(rng, termination)).collect();
    Batch::from_transitions(&ts.iter().collect::<Vec<_>>()).unwrap()
}

pub fn critic_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let agent = small_agent(EntropyRewardMode::Full, 3);
    let batch = chain_batch(&mut rng, 32, Termination::Continue);
    let targets: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, analytic) = agent.critic_loss_and_grads(&batch, &targets).unwrap();

    let mut params: Vec<Tensor> = agent.critics().q1.params().into_iter().chain(agent.critics().q2.params()).cloned().collect();
    let mut probe = agent.clone();
    let numeric = finite_difference(&mut params, &mut |ps| {
        let critics = probe.critics_mut();
        for (dst, src) in critics.q1.params_mut().into_iter().chain(critics.q2.params_mut()).zip(ps) {
            *dst = src.clone();
        }
        probe.critic_loss_and_grads(&batch, &targets).unwrap().0
    });
    let worst = analytic.iter().zip(&numeric).map(|(a, n)| rel_err(a.values(), n)).fold(0.0, f64::max);
    Check::new("autodiff: critic loss vs finite differences", worst < 1e-4, format!("max rel err {worst:.2e}"))
}

pub fn actor_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut agent = small_agent(EntropyRewardMode::Full, 4);
    // Zero biases with a zero observation would sit every unit on the ReLU kink.
    for p in agent.actor_mut().params_mut() {
        if p.rows() == 1 {
            p.values_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
    }
    let obs = Tensor::matrix(32, 1, (0..32).map(|_| rng.gen_range(0.05..1.0)).collect()).unwrap();
    let noise = entsac::policy::standard_normal(&mut rng, 32, 1);
    let (_, analytic, _, _) = agent.actor_loss_and_grads(&obs, &noise).unwrap();

    let mut params: Vec<Tensor> = agent.actor().params().into_iter().cloned().collect();
    let mut probe = agent.clone();
    let numeric = finite_difference(&mut params, &mut |ps| {
        for (dst, src) in probe.actor_mut().params_mut().into_iter().zip(ps) {
            *dst = src.clone();
        }
        probe.actor_loss_and_grads(&obs, &noise).unwrap().0
    });
    let worst = analytic.iter().zip(&numeric).map(|(a, n)| rel_err(a.values(), n)).fold(0.0, f64::max);
    Check::new("autodiff: actor loss vs finite differences", worst < 1e-4, format!("max rel err {worst:.2e}"))
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

const POLICIES: [(f64, f64); 6] = [(0.0, 0.0), (0.5, -1.0), (-1.5, 0.8), (2.0, 2.0), (0.3, -3.0), (-0.2, 1.2)];

/// Integrates the action-space density over the box. Wide policies are
/// integrated in pre-squash coordinates with `da = r (1 - tanh^2 u) du`;
/// narrow ones additionally directly over the action interval.
pub fn density_normalization() -> Check {
    let mut worst: f64 = 0.0;
    for (low, high) in [(-1.0, 1.0), (-2.0, 4.0)] {
        let bounds = ActionBounds::new(vec![low], vec![high]).unwrap();
        let r = (high - low) / 2.0;
        for (m, ls) in POLICIES {
            let d = SquashedGaussian::new(vec![m], vec![ls], bounds.clone()).unwrap();
            let s = ls.exp();
            let via_u = simpson(|u| d.log_prob(&[u]).exp() * r / u.cosh().powi(2), m - 14.0 * s, m + 14.0 * s, 200_000);
            worst = worst.max((via_u - 1.0).abs());
            if s <= 1.0 {
                let eps = 1e-9;
                let via_a = simpson(
                    |a| {
                        let y = (a - (high + low) / 2.0) / r;
                        d.log_prob(&[y.atanh()]).exp()
                    },
                    low + eps,
                    high - eps,
                    400_000,
                );
                worst = worst.max((via_a - 1.0).abs());
            }
        }
    }
    Check::new("squashed Gaussian density integrates to 1 (quadrature)", worst <= 0.01, format!("max |integral - 1| = {worst:.2e}"))
}

/// Monte-Carlo mean of `-log pi(a)` against `-E[log pi]` by quadrature over
/// the Gaussian pre-squash variable.
pub fn entropy_estimator() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let bounds = ActionBounds::symmetric(1);
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (m, ls) in POLICIES {
        let d = SquashedGaussian::new(vec![m], vec![ls], bounds.clone()).unwrap();
        let s = ls.exp();
        let phi = |u: f64| (-0.5 * ((u - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let exact = simpson(|u| -phi(u) * d.log_prob(&[u]), m - 14.0 * s, m + 14.0 * s, 200_000);
        let n = 100_000;
        let est = (0..n).map(|_| d.entropy_estimate(&d.sample_with(&mut rng))).sum::<f64>() / n as f64;
        worst = worst.max((est - exact).abs());
        detail.push(format!("{exact:.3}"));
    }
    Check::new(
        "entropy estimator vs quadrature",
        worst <= 0.02,
        format!("max |MC - quad| = {worst:.4} (H = {})", detail.join(", ")),
    )
}

/// Frozen actor, repeated critic updates: the entropy reward averages to 0.
pub fn zero_mean_centering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut cfg = SacConfig::new(1, ActionBounds::symmetric(1), EntropyRewardMode::ZeroMean);
    cfg.alpha_mode = AlphaMode::Fixed;
    cfg.hidden = vec![32];
    let alpha = cfg.alpha_init;
    let mut agent = Agent::new(cfg, 5).unwrap();
    let batch = chain_batch(&mut rng, 256, Termination::Continue);
    let (burn_in, measured) = (3000, 3000);
    for _ in 0..burn_in {
        agent.critic_update(&batch).unwrap();
    }
    let (mut reward_sum, mut h_sum) = (0.0, 0.0);
    for _ in 0..measured {
        let td = agent.td_targets(&batch).unwrap();
        reward_sum += td.entropy_rewards.iter().sum::<f64>() / td.entropy_rewards.len() as f64;
        h_sum += td.next_entropy.iter().sum::<f64>() / td.next_entropy.len() as f64;
        agent.critic_update(&batch).unwrap();
    }
    let mean_reward = reward_sum / measured as f64;
    let h = h_sum / measured as f64;
    let tol = 0.02 * alpha * h.abs();
    Check::new(
        "ZeroMean long-run centering",
        mean_reward.abs() <= tol,
        format!("mean entropy reward {mean_reward:.2e}, tolerance {tol:.2e}"),
    )
}

/// Terminal rows regress onto the reward alone; Timeout rows bootstrap
/// exactly like Continue rows.
pub fn terminal_timeout_masking() -> Check {
    let agent = small_agent(EntropyRewardMode::Full, 6);
    let batch_for = |t: Termination| chain_batch(&mut ChaCha8Rng::seed_from_u64(16), 64, t);
    let targets = |t: Termination| agent.clone().td_targets(&batch_for(t)).unwrap().targets;
    let terminal = targets(Termination::Terminal);
    let timeout = targets(Termination::Timeout);
    let cont = targets(Termination::Continue);
    let rewards = batch_for(Termination::Terminal).rewards;
    let terminal_ok = terminal == rewards;
    let timeout_ok = timeout == cont && timeout.iter().zip(&rewards).all(|(y, r)| y != r);
    Check::new(
        "Terminal vs Timeout target masking",
        terminal_ok && timeout_ok,
        format!("terminal == r: {terminal_ok}, timeout == continue and bootstraps: {timeout_ok}"),
    )
}

pub fn soft_update_extremes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut agent = small_agent(EntropyRewardMode::Full, 7);
    for _ in 0..5 {
        let batch = chain_batch(&mut rng, 32, Termination::Continue);
        agent.critic_update(&batch).unwrap();
    }
    let before = agent.critics().clone();
    assert_ne!(before.q1, before.target_q1);
    agent.critics_mut().soft_update_with(0.0);
    let zero_ok = agent.critics().target_q1 == before.target_q1 && agent.critics().target_q2 == before.target_q2;
    agent.critics_mut().soft_update_with(1.0);
    let one_ok = agent.critics().target_q1 == before.q1 && agent.critics().target_q2 == before.q2;
    Check::new("soft_update tau in {0, 1} exact", zero_ok && one_ok, format!("tau=0 unchanged: {zero_ok}, tau=1 copy: {one_ok}"))
}

/// Chi-square goodness of fit of sampled slots after wrap-around.
pub fn replay_uniformity() -> Check {
    let capacity = 64;
    let mut replay = ReplayBuffer::new(capacity).unwrap();
    for i in 0..(capacity + 37) {
        replay.push(Transition {
            obs: vec![0.0],
            action: vec![0.0],
            reward: i as f64,
            next_obs: vec![0.0],
            termination: Termination::Continue,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let draws = 1000 * capacity;
    let mut counts = vec![0usize; capacity];
    let oldest = 37;
    let mut stale = 0;
    for t in replay.sample(draws, &mut rng).unwrap() {
        let id = t.reward as usize;
        if id < oldest {
            stale += 1;
        } else {
            counts[id - oldest] += 1;
        }
    }
    let expected = draws as f64 / capacity as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((capacity - 1) as f64).unwrap().cdf(stat);
    Check::new(
        "replay uniformity chi-square",
        p > 0.01 && stale == 0,
        format!("chi2 = {stat:.1} (dof {}), p = {p:.3}, overwritten samples drawn: {stale}", capacity - 1),
    )
}

/// Fraction of 9-sample 95% intervals that contain the true mean.
pub fn interval_coverage() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let (mu, sigma) = (1.3, 0.7);
    let normal = Normal::new(mu, sigma).unwrap();
    let sims = 1000;
    let covered = (0..sims)
        .filter(|_| {
            let xs: Vec<f64> = (0..9).map(|_| normal.sample(&mut rng)).collect();
            t_interval(&xs, 0.95).unwrap().contains(mu)
        })
        .count();
    let rate = covered as f64 / sims as f64;
    Check::new("aggregate_ci 95% coverage", (rate - 0.95).abs() <= 0.02, format!("coverage {rate:.3} over {sims} simulations"))
}
