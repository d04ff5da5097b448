use serde::{Deserialize, Serialize};

use super::{check_action, EnvError, Environment, StepResult, Termination};
use crate::policy::ActionBounds;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`, serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(v: [f64; 4]) -> Self {
        Rect { x0: v[0].min(v[2]), y0: v[1].min(v[3]), x1: v[0].max(v[2]), y1: v[1].max(v[3]) }
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Whether the closed segment `a -> b` touches the rectangle (Liang-Barsky clipping).
    pub fn intersects_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let d = [b[0] - a[0], b[1] - a[1]];
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-d[0], a[0] - self.x0),
            (d[0], self.x1 - a[0]),
            (-d[1], a[1] - self.y0),
            (d[1], self.y1 - a[1]),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let t = q / p;
                if p < 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

/// 2-D point navigation in a square arena with distance-shaped reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConfig {
    pub arena_size: f64,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub goal_radius: f64,
    /// Regions costing `region_penalty` for every step that ends inside them.
    pub penalty_regions: Vec<Rect>,
    pub region_penalty: f64,
    /// Blocks movement only when `obstacle_enabled`.
    pub obstacle: Vec<Rect>,
    pub obstacle_enabled: bool,
    pub time_limit: usize,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            arena_size: 8.0,
            start: [1.5, 8.0],
            goal: [8.0, 0.0],
            goal_radius: 0.5,
            penalty_regions: vec![Rect::from([5.5, 4.5, 7.5, 6.5]), Rect::from([1.0, 2.5, 3.0, 4.5])],
            region_penalty: -1.0,
            // L shape with its outer corner facing the start
            obstacle: vec![Rect::from([4.0, 4.2, 5.2, 4.7]), Rect::from([4.0, 2.5, 4.5, 4.7])],
            obstacle_enabled: false,
            time_limit: 50,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let inside = |p: [f64; 2]| (0.0..=self.arena_size).contains(&p[0]) && (0.0..=self.arena_size).contains(&p[1]);
        if !(self.arena_size > 0.0) {
            return Err(EnvError::InvalidConfig("arena_size must be positive".into()));
        }
        if !inside(self.start) || !inside(self.goal) {
            return Err(EnvError::InvalidConfig("start and goal must lie inside the arena".into()));
        }
        if !(self.goal_radius > 0.0) {
            return Err(EnvError::InvalidConfig("goal_radius must be positive".into()));
        }
        if self.obstacle.iter().any(|r| r.contains(self.start) || r.contains(self.goal)) {
            return Err(EnvError::InvalidConfig("obstacle overlaps start or goal".into()));
        }
        if self.time_limit == 0 {
            return Err(EnvError::InvalidConfig("time_limit must be >= 1".into()));
        }
        Ok(())
    }

    pub fn distance_to_goal(&self, p: [f64; 2]) -> f64 {
        ((p[0] - self.goal[0]).powi(2) + (p[1] - self.goal[1]).powi(2)).sqrt()
    }

    /// Position scaled by the arena size.
    pub fn observe(&self, p: [f64; 2]) -> Vec<f64> {
        vec![p[0] / self.arena_size, p[1] / self.arena_size]
    }

    /// Largest shaping return an episode can collect: `|start - goal| - goal_radius`.
    pub fn return_bound(&self) -> f64 {
        self.distance_to_goal(self.start) - self.goal_radius
    }
}

#[derive(Debug, Clone)]
pub struct Nav {
    config: NavConfig,
    bounds: ActionBounds,
    position: [f64; 2],
    done: bool,
}

impl Nav {
    pub fn new(config: NavConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let position = config.start;
        Ok(Self { config, bounds: ActionBounds::symmetric(2), position, done: false })
    }

    pub fn config(&self) -> &NavConfig {
        &self.config
    }

    pub fn position(&self) -> [f64; 2] {
        self.position
    }

    pub fn set_position(&mut self, p: [f64; 2]) {
        self.position = p;
        self.done = false;
    }

    fn clip(&self, p: [f64; 2]) -> [f64; 2] {
        let s = self.config.arena_size;
        [p[0].clamp(0.0, s), p[1].clamp(0.0, s)]
    }

    fn blocked(&self, from: [f64; 2], to: [f64; 2]) -> bool {
        self.config.obstacle_enabled && self.config.obstacle.iter().any(|r| r.intersects_segment(from, to))
    }

    /// Target position after `delta`. A move crossing an obstacle loses the
    /// blocked axis component; if both single-axis moves are free but the
    /// diagonal is not, the larger component is kept.
    fn resolve(&self, delta: [f64; 2]) -> [f64; 2] {
        let p = self.position;
        let full = self.clip([p[0] + delta[0], p[1] + delta[1]]);
        if !self.blocked(p, full) {
            return full;
        }
        let along_x = [full[0], p[1]];
        let along_y = [p[0], full[1]];
        match (!self.blocked(p, along_x), !self.blocked(p, along_y)) {
            (true, true) => {
                if delta[0].abs() >= delta[1].abs() {
                    along_x
                } else {
                    along_y
                }
            }
            (true, false) => along_x,
            (false, true) => along_y,
            (false, false) => p,
        }
    }
}

impl Environment for Nav {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.position = self.config.start;
        self.done = false;
        self.config.observe(self.position)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        check_action(&self.bounds, action)?;
        let before = self.config.distance_to_goal(self.position);
        self.position = self.resolve([action[0], action[1]]);
        let after = self.config.distance_to_goal(self.position);
        let mut reward = before - after;
        if self.config.penalty_regions.iter().any(|r| r.contains(self.position)) {
            reward += self.config.region_penalty;
        }
        let termination = if after <= self.config.goal_radius {
            self.done = true;
            Termination::Terminal
        } else {
            Termination::Continue
        };
        Ok(StepResult { next_obs: self.config.observe(self.position), reward, termination })
    }

    fn at_goal(&self) -> bool {
        self.config.distance_to_goal(self.position) <= self.config.goal_radius
    }
}
