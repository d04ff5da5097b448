//! Tanh-squashed diagonal Gaussian over a box action space.
//!
//! A pre-squash sample `u ~ N(mean, std^2)` maps to
//! `a = low + (high - low) * (tanh(u) + 1) / 2`. Densities are reported in
//! action space, so they include the tanh Jacobian and the box scale.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffnn::{DiffError, Tape, Tensor, Var};

pub const MIN_LOG_STD: f64 = -10.0;
pub const MAX_LOG_STD: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid action bounds: low {low:?}, high {high:?}")]
    InvalidBounds { low: Vec<f64>, high: Vec<f64> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl ActionBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self, PolicyError> {
        let ok = !low.is_empty()
            && low.len() == high.len()
            && low.iter().zip(&high).all(|(l, h)| l.is_finite() && h.is_finite() && l < h);
        if !ok {
            return Err(PolicyError::InvalidBounds { low, high });
        }
        Ok(Self { low, high })
    }

    /// `[-1, 1]^dim`.
    pub fn symmetric(dim: usize) -> Self {
        Self { low: vec![-1.0; dim], high: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        action.len() == self.dim()
            && action.iter().zip(self.low.iter().zip(&self.high)).all(|(a, (l, h))| a >= l && a <= h)
    }

    fn half_range(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| (h - l) / 2.0).collect()
    }

    fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| (h + l) / 2.0).collect()
    }

    /// `sum_i ln((high_i - low_i) / 2)`.
    pub fn log_scale(&self) -> f64 {
        self.half_range().iter().map(|r| r.ln()).sum()
    }

    /// Maps pre-squash values into the box. Saturated components are pulled
    /// one ulp inside so actions never touch the bounds.
    pub fn squash(&self, pre_squash: &[f64]) -> Vec<f64> {
        pre_squash
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(&u, (&l, &h))| {
                let a = l + (h - l) * (u.tanh() + 1.0) / 2.0;
                if a >= h {
                    h.next_down()
                } else if a <= l {
                    l.next_up()
                } else {
                    a
                }
            })
            .collect()
    }
}

/// `ln(1 - tanh(u)^2)` in the form `2 (ln 2 - u - softplus(-2u))`.
pub fn log_tanh_jacobian(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    2.0 * (LN_2 - u - softplus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussian {
    mean: Vec<f64>,
    log_std: Vec<f64>,
    bounds: ActionBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub pre_squash: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl SquashedGaussian {
    /// `log_std` is clamped to `[MIN_LOG_STD, MAX_LOG_STD]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>, bounds: ActionBounds) -> Result<Self, PolicyError> {
        for v in [&mean, &log_std] {
            if v.len() != bounds.dim() {
                return Err(PolicyError::Dimension { expected: bounds.dim(), got: v.len() });
            }
        }
        let log_std = log_std.into_iter().map(|s| s.clamp(MIN_LOG_STD, MAX_LOG_STD)).collect();
        Ok(Self { mean, log_std, bounds })
    }

    /// Splits a policy head output laid out as `mean ++ log_std`.
    pub fn from_head(head: &[f64], bounds: ActionBounds) -> Result<Self, PolicyError> {
        let d = bounds.dim();
        if head.len() != 2 * d {
            return Err(PolicyError::Dimension { expected: 2 * d, got: head.len() });
        }
        Self::new(head[..d].to_vec(), head[d..].to_vec(), bounds)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    /// Reparameterized sample `u = mean + std * noise`.
    pub fn sample(&self, noise: &[f64]) -> Result<ActionSample, PolicyError> {
        if noise.len() != self.mean.len() {
            return Err(PolicyError::Dimension { expected: self.mean.len(), got: noise.len() });
        }
        let pre_squash: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((m, s), e)| m + s.exp() * e)
            .collect();
        let action = self.bounds.squash(&pre_squash);
        let log_prob = self.log_prob(&pre_squash);
        Ok(ActionSample { pre_squash, action, log_prob })
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionSample {
        let noise: Vec<f64> = (0..self.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.sample(&noise).expect("noise sized to the distribution")
    }

    /// Action-space log density at the action produced by `pre_squash`.
    pub fn log_prob(&self, pre_squash: &[f64]) -> f64 {
        let gauss: f64 = pre_squash
            .iter()
            .zip(self.mean.iter().zip(&self.log_std))
            .map(|(u, (m, s))| {
                let z = (u - m) / s.exp();
                -0.5 * z * z - s - HALF_LN_2PI
            })
            .sum();
        let jacobian: f64 = pre_squash.iter().map(|&u| log_tanh_jacobian(u)).sum();
        gauss - jacobian - self.bounds.log_scale()
    }

    /// Single-sample entropy estimate `-log pi(a)`.
    pub fn entropy_estimate(&self, sample: &ActionSample) -> f64 {
        -sample.log_prob
    }

    /// Squashed mean.
    pub fn mode(&self) -> Vec<f64> {
        self.bounds.squash(&self.mean)
    }
}

/// Batched policy outputs recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TapedSample {
    pub pre_squash: Var,
    pub action: Var,
    /// `[batch, 1]` log densities.
    pub log_prob: Var,
}

/// Taped `log pi(u)` for `mean`, `log_std` and `pre_squash` of shape
/// `[batch, dim]`; `log_std` is expected to be clamped already.
pub fn log_prob_on_tape(
    tape: &mut Tape,
    mean: Var,
    log_std: Var,
    pre_squash: Var,
    bounds: &ActionBounds,
) -> Result<Var, PolicyError> {
    let diff = tape.sub(pre_squash, mean)?;
    let neg_ls = tape.neg(log_std);
    let inv_std = tape.exp(neg_ls);
    let z = tape.mul(diff, inv_std)?;
    let z2 = tape.square(z);
    let half_z2 = tape.scale(z2, -0.5);
    let gauss = tape.sub(half_z2, log_std)?;
    let gauss = tape.shift(gauss, -HALF_LN_2PI);

    // ln(1 - tanh^2 u) = 2 (ln 2 - u - softplus(-2u))
    let m2u = tape.scale(pre_squash, -2.0);
    let sp = tape.softplus(m2u);
    let u_plus_sp = tape.add(pre_squash, sp)?;
    let jac = tape.scale(u_plus_sp, -2.0);
    let jac = tape.shift(jac, 2.0 * LN_2);

    let per_dim = tape.sub(gauss, jac)?;
    let summed = tape.sum_cols(per_dim);
    Ok(tape.shift(summed, -bounds.log_scale()))
}

/// Reparameterized batch sample from a head output `[batch, 2 * dim]` laid
/// out as `mean ++ log_std`, with `noise` of shape `[batch, dim]`.
pub fn sample_on_tape(tape: &mut Tape, head: Var, noise: &Tensor, bounds: &ActionBounds) -> Result<TapedSample, PolicyError> {
    let d = bounds.dim();
    let cols = tape.value(head).cols();
    if cols != 2 * d {
        return Err(PolicyError::Dimension { expected: 2 * d, got: cols });
    }
    if noise.cols() != d || noise.rows() != tape.value(head).rows() {
        return Err(PolicyError::Dimension { expected: d, got: noise.cols() });
    }
    let mean = tape.slice_cols(head, 0, d)?;
    let raw_ls = tape.slice_cols(head, d, 2 * d)?;
    let log_std = tape.clamp(raw_ls, MIN_LOG_STD, MAX_LOG_STD);
    let std = tape.exp(log_std);
    let eps = tape.constant(noise.clone());
    let scaled = tape.mul(std, eps)?;
    let pre_squash = tape.add(mean, scaled)?;
    let squashed = tape.tanh(pre_squash);
    let action = tape.col_affine(squashed, &bounds.half_range(), &bounds.center())?;
    let log_prob = log_prob_on_tape(tape, mean, log_std, pre_squash, bounds)?;
    Ok(TapedSample { pre_squash, action, log_prob })
}

/// Row-wise reparameterized samples for heads `[batch, 2 * dim]` and noise
/// `[batch, dim]`, without a tape. Returns the squashed actions and their
/// log densities; agrees with [`SquashedGaussian::sample`] row by row.
pub fn sample_batch(heads: &Tensor, noise: &Tensor, bounds: &ActionBounds) -> Result<(Tensor, Vec<f64>), PolicyError> {
    let d = bounds.dim();
    if heads.cols() != 2 * d {
        return Err(PolicyError::Dimension { expected: 2 * d, got: heads.cols() });
    }
    if noise.cols() != d || noise.rows() != heads.rows() {
        return Err(PolicyError::Dimension { expected: d, got: noise.cols() });
    }
    let log_scale = bounds.log_scale();
    let mut actions = Vec::with_capacity(heads.rows() * d);
    let mut log_probs = Vec::with_capacity(heads.rows());
    let mut u = vec![0.0; d];
    for r in 0..heads.rows() {
        let (head, eps) = (heads.row(r), noise.row(r));
        let mut lp = -log_scale;
        for j in 0..d {
            let ls = head[d + j].clamp(MIN_LOG_STD, MAX_LOG_STD);
            u[j] = head[j] + ls.exp() * eps[j];
            let z = (u[j] - head[j]) / ls.exp();
            lp += -0.5 * z * z - ls - HALF_LN_2PI - log_tanh_jacobian(u[j]);
        }
        actions.extend(bounds.squash(&u));
        log_probs.push(lp);
    }
    Ok((Tensor::matrix(heads.rows(), d, actions)?, log_probs))
}

/// `[rows, dim]` standard-normal noise.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, dim: usize) -> Tensor {
    let values = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, dim, values).expect("sized")
}

/// Gaussian log density reference, for tests and diagnostics.
pub fn normal_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln()
}
