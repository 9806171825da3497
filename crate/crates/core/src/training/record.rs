use std::io::Write;

use serde::Serialize;

use super::loss::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub loss: f64,
    pub l2re: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FactorStats {
    pub nnz_a: usize,
    /// `nnz(L̂) + nnz(Û)`, unit diagonal of `L̂` not stored.
    pub nnz_factors: usize,
    pub factor_ms: f64,
}

/// Output of one training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRecord {
    /// Logged iterations in increasing order.
    pub history: Vec<LogEntry>,
    pub final_metrics: Metrics,
    pub final_loss: f64,
    /// Optimizer steps actually taken.
    pub iterations: usize,
    pub factor: FactorStats,
    #[serde(skip)]
    pub predictions: Vec<f64>,
}

#[derive(Serialize)]
struct SeriesRow {
    iteration: usize,
    loss: f64,
    l2re: f64,
}

#[derive(Serialize)]
struct TimingRow {
    iteration: usize,
    wall_ms: f64,
}

impl TrainRecord {
    /// `iteration,loss,l2re`; identical across reruns with the same seed.
    pub fn write_history_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.history {
            w.serialize(SeriesRow {
                iteration: e.iteration,
                loss: e.loss,
                l2re: e.l2re,
            })?;
        }
        if self.history.is_empty() {
            w.write_record(["iteration", "loss", "l2re"])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `iteration,wall_ms`; milliseconds since the loop started.
    pub fn write_timing_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.history {
            w.serialize(TimingRow {
                iteration: e.iteration,
                wall_ms: e.wall_ms,
            })?;
        }
        if self.history.is_empty() {
            w.write_record(["iteration", "wall_ms"])?;
        }
        w.flush()?;
        Ok(())
    }
}
