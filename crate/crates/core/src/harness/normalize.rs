use serde::{Deserialize, Serialize};

/// Streaming reward standardization with clipping (Welford updates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    count: u64,
    mean: f64,
    m2: f64,
    clip: (f64, f64),
    epsilon: f64,
}

impl RewardNormalizer {
    pub fn new(clip_low: f64, clip_high: f64, epsilon: f64) -> Self {
        assert!(clip_low < clip_high, "clip bounds out of order");
        Self { count: 0, mean: 0.0, m2: 0.0, clip: (clip_low, clip_high), epsilon }
    }

    /// Symmetric bounds `[-clip, clip]`.
    pub fn symmetric(clip: f64, epsilon: f64) -> Self {
        Self::new(-clip, clip, epsilon)
    }

    pub fn update(&mut self, r: f64) {
        self.count += 1;
        let delta = r - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (r - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance of the rewards seen so far.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// `clip((r - mean) / max(std, eps))` with the current statistics.
    pub fn normalize(&self, r: f64) -> f64 {
        ((r - self.mean) / self.std().max(self.epsilon)).clamp(self.clip.0, self.clip.1)
    }

    /// Updates the statistics with `r`, then normalizes it.
    pub fn observe(&mut self, r: f64) -> f64 {
        self.update(r);
        self.normalize(r)
    }
}
