//! Append-only metrics CSV with a pinned header.
//!
//! Every training round appends one row and flushes it, so a crashed run
//! keeps everything written so far. Absent values are encoded as empty
//! fields, never as zero, so a reader can tell "not measured" from "measured
//! zero".

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// The exact column set, in order.
pub const METRICS_HEADER: &str =
    "round,critic_loss,actor_loss,alpha,supervised_mse,rmse_rollout,mean_rollout_reward,total_env_reward,wall_ms";

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("metrics io: {0}")]
    Io(#[from] std::io::Error),
    #[error("metrics row {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// One row of training metrics. `None` means the quantity was not measured
/// this round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRecord {
    pub round: usize,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha: Option<f64>,
    pub supervised_mse: Option<f64>,
    pub rmse_rollout: Option<f64>,
    pub mean_rollout_reward: Option<f64>,
    pub total_env_reward: Option<f64>,
    pub wall_ms: Option<f64>,
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_field(s: &str, line: usize) -> Result<Option<f64>, MetricsError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|e| MetricsError::Malformed {
        line,
        msg: format!("bad number {s:?}: {e}"),
    })
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.round,
            field(self.critic_loss),
            field(self.actor_loss),
            field(self.alpha),
            field(self.supervised_mse),
            field(self.rmse_rollout),
            field(self.mean_rollout_reward),
            field(self.total_env_reward),
            field(self.wall_ms),
        )
    }
}

/// Writer that appends one flushed row per record.
#[derive(Debug)]
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    /// Creates the file and writes the header. Truncates any previous file.
    pub fn create(path: &Path) -> Result<Self, MetricsError> {
        let mut file = File::create(path)?;
        writeln!(file, "{METRICS_HEADER}")?;
        file.flush()?;
        Ok(Self { file })
    }

    /// Reopens an existing file for appending (resume after a crash).
    pub fn append(path: &Path) -> Result<Self, MetricsError> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<(), MetricsError> {
        writeln!(self.file, "{}", record.to_csv_row())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Reads a whole metrics CSV back, validating the header and every row.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, MetricsError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line != METRICS_HEADER {
                return Err(MetricsError::Malformed {
                    line: lineno,
                    msg: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(MetricsError::Malformed {
                line: lineno,
                msg: format!("expected 9 fields, found {}", parts.len()),
            });
        }
        let round = parts[0].parse::<usize>().map_err(|e| MetricsError::Malformed {
            line: lineno,
            msg: format!("bad round {:?}: {e}", parts[0]),
        })?;
        rows.push(MetricsRecord {
            round,
            critic_loss: parse_field(parts[1], lineno)?,
            actor_loss: parse_field(parts[2], lineno)?,
            alpha: parse_field(parts[3], lineno)?,
            supervised_mse: parse_field(parts[4], lineno)?,
            rmse_rollout: parse_field(parts[5], lineno)?,
            mean_rollout_reward: parse_field(parts[6], lineno)?,
            total_env_reward: parse_field(parts[7], lineno)?,
            wall_ms: parse_field(parts[8], lineno)?,
        });
    }
    Ok(rows)
}
