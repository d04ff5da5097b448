use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::metrics::{read_metrics, MetricsRow};
use super::HarnessError;

/// Student-t confidence interval on a mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Two-sided t quantile `t_{(1+confidence)/2, dof}`.
pub fn t_quantile(confidence: f64, dof: usize) -> Result<f64, HarnessError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(HarnessError::Config(format!("confidence {confidence} outside (0, 1)")));
    }
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(t.inverse_cdf((1.0 + confidence) / 2.0))
}

/// Mean with half-width `t * s / sqrt(n)`. The result does not depend on
/// the order of `values`.
pub fn t_interval(values: &[f64], confidence: f64) -> Result<Interval, HarnessError> {
    if values.len() < 2 {
        return Err(HarnessError::Aggregate(format!("need at least 2 seeds for a confidence interval, got {}", values.len())));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    if sorted[0] == sorted[sorted.len() - 1] {
        let v = sorted[0];
        return Ok(Interval { mean: v, lower: v, upper: v });
    }
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let hw = t_quantile(confidence, sorted.len() - 1)? * (var / n).sqrt();
    Ok(Interval { mean, lower: mean - hw, upper: mean + hw })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub env_steps: u64,
    pub seeds: usize,
    /// One interval per entry of [`MetricsRow::METRICS`].
    pub metrics: Vec<Interval>,
}

impl AggregateRow {
    pub fn metric(&self, name: &str) -> Option<&Interval> {
        MetricsRow::METRICS.iter().position(|m| *m == name).map(|i| &self.metrics[i])
    }
}

/// Per-step intervals over several runs that share a step grid.
pub fn aggregate_runs(runs: &[Vec<MetricsRow>], confidence: f64) -> Result<Vec<AggregateRow>, HarnessError> {
    if runs.len() < 2 {
        return Err(HarnessError::Aggregate(format!("need at least 2 seeds, got {}", runs.len())));
    }
    let grid: Vec<u64> = runs[0].iter().map(|r| r.env_steps).collect();
    for run in runs {
        if run.iter().map(|r| r.env_steps).ne(grid.iter().copied()) {
            return Err(HarnessError::Aggregate("step grids are not aligned across seeds".into()));
        }
    }
    let mut out = Vec::with_capacity(grid.len());
    for (i, &env_steps) in grid.iter().enumerate() {
        let metrics = (0..MetricsRow::METRICS.len())
            .map(|m| {
                let values: Vec<f64> = runs.iter().map(|run| run[i].metric_values()[m]).collect();
                t_interval(&values, confidence)
            })
            .collect::<Result<_, _>>()?;
        out.push(AggregateRow { env_steps, seeds: runs.len(), metrics });
    }
    Ok(out)
}

/// Reads metric CSVs and aggregates them per step.
pub fn aggregate_ci(paths: &[PathBuf], confidence: f64) -> Result<Vec<AggregateRow>, HarnessError> {
    let runs = paths.iter().map(|p| read_metrics(p)).collect::<Result<Vec<_>, _>>()?;
    aggregate_runs(&runs, confidence)
}

pub fn aggregate_header() -> String {
    let mut cols = vec!["env_steps".to_string(), "seeds".to_string()];
    for m in MetricsRow::METRICS {
        cols.extend([format!("{m}_mean"), format!("{m}_lower"), format!("{m}_upper")]);
    }
    cols.join(",")
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], sink: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(aggregate_header().split(','))?;
    for row in rows {
        let mut rec = vec![row.env_steps.to_string(), row.seeds.to_string()];
        for i in &row.metrics {
            rec.extend([i.mean.to_string(), i.lower.to_string(), i.upper.to_string()]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_three_values() {
        let i = t_interval(&[1.0, 2.0, 3.0], 0.95).unwrap();
        assert_eq!(i.mean, 2.0);
        let t = 4.302_652_729_911_275;
        assert!((i.half_width() - t / 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn identical_values_zero_width() {
        let i = t_interval(&[0.1; 9], 0.95).unwrap();
        assert_eq!((i.lower, i.mean, i.upper), (0.1, 0.1, 0.1));
    }

    #[test]
    fn single_seed_is_error() {
        assert!(matches!(t_interval(&[1.0], 0.95), Err(HarnessError::Aggregate(_))));
    }

    #[test]
    fn order_does_not_matter() {
        let a = t_interval(&[0.3, 1e16, -7.1, 2.2, 0.1], 0.95).unwrap();
        let b = t_interval(&[2.2, 0.1, -7.1, 1e16, 0.3], 0.95).unwrap();
        assert_eq!(a, b);
    }
}
