use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::sim::RoundMetrics;
use crate::analysis::format_sig9;
use crate::{Error, Result};

pub const METRICS_HEADER: [&str; 10] = [
    "round",
    "train_loss",
    "test_loss",
    "accuracy",
    "comm_bits_per_client",
    "epsilon_per_bit",
    "clamp_count",
    "cdpa_vs_mean_l2",
    "wall_ms",
    "kg_co2",
];

/// Writes one CSV row per round.
pub fn write_metrics_csv<W: std::io::Write>(metrics: &[RoundMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let enc = |e: csv::Error| Error::Encode(format!("csv: {e}"));
    w.write_record(METRICS_HEADER).map_err(enc)?;
    for m in metrics {
        w.write_record([
            m.round.to_string(),
            format_sig9(m.train_loss),
            format_sig9(m.test_loss),
            format_sig9(m.accuracy),
            m.comm_bits_per_client.to_string(),
            format_sig9(m.epsilon_per_bit),
            m.clamp_count.to_string(),
            format_sig9(m.cdpa_vs_mean_l2),
            format_sig9(m.wall_ms),
            format_sig9(m.kg_co2),
        ])
        .map_err(enc)?;
    }
    w.flush().map_err(|e| Error::Encode(format!("csv: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rounds: usize,
    pub final_accuracy: f64,
    pub final_test_loss: f64,
    /// Bits sent by all clients over all rounds.
    pub total_bits: u64,
    pub total_kg_co2: f64,
    pub epsilon_per_bit: f64,
}

impl Summary {
    pub fn new(metrics: &[RoundMetrics], clients: usize) -> Self {
        let last = metrics.last();
        Self {
            rounds: metrics.len(),
            final_accuracy: last.map_or(f64::NAN, |m| m.accuracy),
            final_test_loss: last.map_or(f64::NAN, |m| m.test_loss),
            total_bits: metrics.iter().map(|m| m.comm_bits_per_client * clients as u64).sum(),
            total_kg_co2: metrics.iter().map(|m| m.kg_co2).sum(),
            epsilon_per_bit: last.map_or(f64::NAN, |m| m.epsilon_per_bit),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rounds: {}", self.rounds);
        let _ = writeln!(s, "final_accuracy: {}", format_sig9(self.final_accuracy));
        let _ = writeln!(s, "final_test_loss: {}", format_sig9(self.final_test_loss));
        let _ = writeln!(s, "total_bits: {}", self.total_bits);
        let _ = writeln!(s, "total_kg_co2: {}", format_sig9(self.total_kg_co2));
        let _ = writeln!(s, "epsilon_per_bit: {}", format_sig9(self.epsilon_per_bit));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub metrics: PathBuf,
    pub config: PathBuf,
    pub summary: PathBuf,
}

/// Writes `metrics.csv`, `config.json` and `summary.txt` into `dir`,
/// creating it if needed.
pub fn emit_report(metrics: &[RoundMetrics], config: &ExperimentConfig, dir: &Path) -> Result<ReportPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ReportPaths {
        metrics: dir.join("metrics.csv"),
        config: dir.join("config.json"),
        summary: dir.join("summary.txt"),
    };
    let file = std::fs::File::create(&paths.metrics).map_err(|e| Error::io(&paths.metrics, e))?;
    write_metrics_csv(metrics, file).map_err(|e| e.context(paths.metrics.display().to_string()))?;
    std::fs::write(&paths.config, config.to_json() + "\n").map_err(|e| Error::io(&paths.config, e))?;
    let summary = Summary::new(metrics, config.clients).render();
    std::fs::write(&paths.summary, summary).map_err(|e| Error::io(&paths.summary, e))?;
    Ok(paths)
}
