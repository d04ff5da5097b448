use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const CSV_HEADER: &str = "env_steps,seed,return,success,episode_len,expected_v,entropy,alpha,ent_reward_mean";

/// One evaluation point of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_steps: u64,
    pub seed: u64,
    #[serde(rename = "return")]
    pub episodic_return: f64,
    /// Fraction of evaluation episodes that ended at the goal.
    pub success: f64,
    pub episode_len: f64,
    pub expected_v: f64,
    pub entropy: f64,
    pub alpha: f64,
    pub ent_reward_mean: f64,
}

impl MetricsRow {
    pub const METRICS: [&'static str; 7] = ["return", "success", "episode_len", "expected_v", "entropy", "alpha", "ent_reward_mean"];

    pub fn metric_values(&self) -> [f64; 7] {
        [
            self.episodic_return,
            self.success,
            self.episode_len,
            self.expected_v,
            self.entropy,
            self.alpha,
            self.ent_reward_mean,
        ]
    }
}

/// Streams rows to a CSV sink, flushing after every row so partial runs
/// leave a readable file.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(sink: W) -> Result<Self, HarnessError> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        inner.write_record(CSV_HEADER.split(','))?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<(), HarnessError> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, HarnessError> {
        self.inner.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(HarnessError::Schema(format!("{}: unexpected header `{}`", path.display(), header.join(","))));
    }
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_roundtrip() {
        let row = MetricsRow {
            env_steps: 1000,
            seed: 3,
            episodic_return: -0.15,
            success: 0.95,
            episode_len: 4.5,
            expected_v: 0.25,
            entropy: -1.0,
            alpha: 0.2,
            ent_reward_mean: 0.0,
        };
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        w.write(&row).unwrap();
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, &text).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), vec![row]);
    }
}
