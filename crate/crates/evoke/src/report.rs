//! Run report files.
//!
//! `report.jsonl` is an append-only log: one `config` record, then one
//! `step` record per completed step. Resumed runs append to the same file
//! after verifying the config record matches, so an interrupted-and-resumed
//! run produces a byte-identical log to an uninterrupted one. Aggregates go
//! to a separate summary JSON, recomputed from the full step history at the
//! end of every run.

use evoke_core::config::SamplingPolicy;
use evoke_core::engine::{RunReport, StepReport};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Malformed {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("report {path} belongs to a different run configuration")]
    ConfigMismatch { path: PathBuf },
    #[error("report {path} already holds {present} steps at or past step {step}")]
    StepCollision {
        path: PathBuf,
        step: u64,
        present: usize,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Echo of the effective run configuration, written as the first record so
/// every report is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub config_hash: String,
    pub policy: SamplingPolicy,
    pub seed: u64,
    pub dataset_hash: String,
    pub dataset_size: usize,
    pub provider_fingerprint: String,
    pub effective_config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ReportRecord {
    Config(ConfigRecord),
    Step(StepReport),
}

#[derive(Deserialize)]
struct RecordTag {
    #[serde(rename = "type")]
    record_type: String,
}

/// Append-only step log writer.
pub struct ReportWriter {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl ReportWriter {
    /// Start a fresh log (refuses to clobber an existing one).
    pub fn create(path: &Path, config: &ConfigRecord) -> Result<Self, ReportError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(io_err(path))?;
            }
        }
        let file = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(io_err(path))?;
        let mut writer = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        writer.write_record(&ReportRecord::Config(config.clone()))?;
        Ok(writer)
    }

    /// Reopen an existing log for appending after a resume. The stored
    /// config record must match and no step at or past `next_step` may
    /// already be present.
    pub fn reopen(
        path: &Path,
        config: &ConfigRecord,
        next_step: u64,
    ) -> Result<Self, ReportError> {
        let (existing, steps) = read_report(path)?;
        if existing.config_hash != config.config_hash {
            return Err(ReportError::ConfigMismatch {
                path: path.to_path_buf(),
            });
        }
        let collisions = steps.iter().filter(|s| s.step >= next_step).count();
        if collisions > 0 {
            return Err(ReportError::StepCollision {
                path: path.to_path_buf(),
                step: next_step,
                present: collisions,
            });
        }
        let file = fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append_step(&mut self, report: &StepReport) -> Result<(), ReportError> {
        self.write_record(&ReportRecord::Step(report.clone()))
    }

    fn write_record(&mut self, record: &ReportRecord) -> Result<(), ReportError> {
        let line = serde_json::to_string(record).expect("serializable record");
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush())
            .map_err(io_err(&self.path))
    }
}

/// Read a report log back: the config record plus step records in step
/// order.
pub fn read_report(path: &Path) -> Result<(ConfigRecord, Vec<StepReport>), ReportError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let mut config = None;
    let mut steps = Vec::new();
    for (index, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        // two-pass parse: probe the tag, then deserialize the concrete
        // type straight from the line (direct deserialization is what lets
        // integer-keyed maps round-trip)
        let malformed = |detail: String| ReportError::Malformed {
            path: path.to_path_buf(),
            line: index + 1,
            detail,
        };
        let tag: RecordTag =
            serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        match tag.record_type.as_str() {
            "config" => {
                let c: ConfigRecord =
                    serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
                if config.is_some() {
                    return Err(malformed("duplicate config record".into()));
                }
                config = Some(c);
            }
            "step" => {
                let s: StepReport =
                    serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
                steps.push(s);
            }
            other => return Err(malformed(format!("unknown record type `{other}`"))),
        }
    }
    let config = config.ok_or_else(|| ReportError::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: "missing config record".into(),
    })?;
    steps.sort_by_key(|s| s.step);
    Ok((config, steps))
}

/// Aggregate summary for one run, derived from the full step history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub total_steps_recorded: usize,
    pub report: RunReport,
}

/// Write the summary atomically next to the step log.
pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), ReportError> {
    let tmp = path.with_extension("tmp");
    let mut bytes = serde_json::to_vec_pretty(summary).expect("serializable summary");
    bytes.push(b'\n');
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<RunSummary, ReportError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&raw).map_err(|e| ReportError::Malformed {
        path: path.to_path_buf(),
        line: 1,
        detail: e.to_string(),
    })
}
