//! Experiment outputs.
//!
//! Layout of an output directory:
//!
//! ```text
//! results/{task}_{algorithm}_{seed}.json      per-sample series of one group
//! transcripts/{task}_{algorithm}_{seed}/{sample}.json
//! summary.csv  summary.md  curves.csv  timings.csv  run.json
//! ```
//!
//! Summary and curves are pure functions of the `results/` files, so
//! [`regenerate`] reproduces them bit for bit.

mod table;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{PlanEntry, TaskDefinition};
use crate::metrics::{median_curve, summarize, ConvergenceTarget, MetricSeries, SummaryRow};
use crate::simulator::{audit_transcript, InteractionTranscript, Termination};

pub use table::{
    best_markers, emit_curves, emit_summary, render_summary_markdown, summary_lines, SummaryLine, CURVES_HEADER,
    SUMMARY_COLUMNS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub sample_id: String,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub dice: Vec<f64>,
    pub nsd: Vec<f64>,
}

/// All samples of one (task, algorithm) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    /// Position of the plan entry; fixes the row order of tables.
    pub order: usize,
    pub task: String,
    pub algorithm: String,
    pub master_seed: u64,
    pub budget: u32,
    pub target: ConvergenceTarget,
    pub samples: Vec<SampleSeries>,
}

impl GroupResult {
    pub fn from_transcripts(entry: &PlanEntry, task: &TaskDefinition, transcripts: &[InteractionTranscript]) -> Result<Self> {
        Ok(GroupResult {
            order: 0,
            task: task.id.clone(),
            algorithm: entry.algorithm.clone(),
            master_seed: entry.master_seed,
            budget: entry.budget,
            target: task.convergence()?,
            samples: transcripts
                .iter()
                .map(|t| SampleSeries {
                    sample_id: t.sample_id.clone(),
                    termination: t.termination,
                    error: t.error.clone(),
                    dice: t.dice.clone(),
                    nsd: t.nsd.clone(),
                })
                .collect(),
        })
    }

    pub fn file_stem(&self) -> String {
        group_stem(&self.task, &self.algorithm, self.master_seed)
    }

    /// Series of samples that finished without an application error.
    pub fn valid_series(&self) -> Result<Vec<MetricSeries>> {
        self.samples
            .iter()
            .filter(|s| s.termination != Termination::ApplicationError)
            .map(|s| MetricSeries::new(s.dice.clone(), s.nsd.clone()))
            .collect()
    }

    pub fn errored(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.termination == Termination::ApplicationError)
            .count()
    }

    /// `None` when no sample finished.
    pub fn summary(&self) -> Result<Option<SummaryRow>> {
        let series = self.valid_series()?;
        if series.is_empty() {
            return Ok(None);
        }
        summarize(&series, &self.target, self.budget as usize).map(Some)
    }

    pub fn median_curve(&self) -> Result<Option<MetricSeries>> {
        let series = self.valid_series()?;
        if series.is_empty() {
            return Ok(None);
        }
        median_curve(&series).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub algorithm: String,
    pub task: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub task: String,
    pub algorithm: String,
    pub sample: String,
    pub iteration: u32,
    pub inference_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Environment {
    pub fn now(workers: usize) -> Self {
        let t = unix_now();
        Environment {
            version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            workers,
            started_unix: t,
            finished_unix: t,
        }
    }

    pub fn finish(&mut self) {
        self.finished_unix = unix_now();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub master_seed: u64,
    pub entries: Vec<PlanEntry>,
    pub groups: Vec<GroupResult>,
    pub skipped: Vec<SkipRecord>,
    /// Samples the harness could not complete (I/O or reference errors).
    pub failed_samples: Vec<String>,
    /// Non-fatal issues such as an unreachable spare endpoint.
    pub warnings: Vec<String>,
    pub timings: Vec<TimingRecord>,
    pub environment: Environment,
}

impl ExperimentResult {
    /// Any skipped entry or errored sample.
    pub fn has_failures(&self) -> bool {
        !self.skipped.is_empty() || !self.failed_samples.is_empty() || self.groups.iter().any(|g| g.errored() > 0)
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    master_seed: u64,
    environment: &'a Environment,
    entries: &'a [PlanEntry],
    groups: Vec<String>,
    skipped: &'a [SkipRecord],
    failed_samples: &'a [String],
    warnings: &'a [String],
}

/// Replace characters that are unsafe in file names.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn group_stem(task: &str, algorithm: &str, seed: u64) -> String {
    format!("{}_{}_{seed}", sanitize(task), sanitize(algorithm))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Write one transcript; returns its path.
pub fn write_transcript(out_dir: &Path, t: &InteractionTranscript) -> Result<PathBuf> {
    let dir = out_dir
        .join("transcripts")
        .join(group_stem(&t.task, &t.algorithm, t.master_seed));
    create_dir(&dir)?;
    let path = dir.join(format!("{}.json", sanitize(&t.sample_id)));
    write_json(&path, t)?;
    Ok(path)
}

/// Every transcript below `dir`, in path order.
pub fn read_transcripts(dir: &Path) -> Result<Vec<InteractionTranscript>> {
    let mut out = Vec::new();
    let mut subdirs = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            subdirs.push(path);
        }
    }
    subdirs.sort();
    for sub in std::iter::once(dir.to_path_buf()).chain(subdirs) {
        for file in json_files(&sub)? {
            out.push(read_json(&file)?);
        }
    }
    Ok(out)
}

pub fn write_group(out_dir: &Path, g: &GroupResult) -> Result<PathBuf> {
    let dir = out_dir.join("results");
    create_dir(&dir)?;
    let path = dir.join(format!("{}.json", g.file_stem()));
    write_json(&path, g)?;
    Ok(path)
}

/// Group results of an output directory in plan order.
pub fn load_groups(out_dir: &Path) -> Result<Vec<GroupResult>> {
    let mut groups: Vec<GroupResult> = json_files(&out_dir.join("results"))?
        .iter()
        .map(|p| read_json(p))
        .collect::<Result<_>>()?;
    groups.sort_by(|a, b| (a.order, &a.task, &a.algorithm).cmp(&(b.order, &b.task, &b.algorithm)));
    Ok(groups)
}

fn emit_timings(timings: &[TimingRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| table::csv_err(path, e))?;
    for t in timings {
        w.serialize(t).map_err(|e| table::csv_err(path, e))?;
    }
    if timings.is_empty() {
        w.write_record(["task", "algorithm", "sample", "iteration", "inference_ms"])
            .map_err(|e| table::csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write summary table, curves, timings and the run record.
pub fn emit_all(result: &ExperimentResult, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_tables(&result.groups, out_dir)?;
    emit_timings(&result.timings, &out_dir.join("timings.csv"))?;
    let record = RunRecord {
        master_seed: result.master_seed,
        environment: &result.environment,
        entries: &result.entries,
        groups: result.groups.iter().map(GroupResult::file_stem).collect(),
        skipped: &result.skipped,
        failed_samples: &result.failed_samples,
        warnings: &result.warnings,
    };
    write_json(&out_dir.join("run.json"), &record)
}

fn write_tables(groups: &[GroupResult], out_dir: &Path) -> Result<()> {
    let lines = summary_lines(groups)?;
    if lines.is_empty() {
        log::warn!("no finished samples; summary and curves not written");
        return Ok(());
    }
    emit_summary(&lines, &out_dir.join("summary.csv"))?;
    let md = out_dir.join("summary.md");
    std::fs::write(&md, render_summary_markdown(&lines)).map_err(|e| Error::io(&md, e))?;
    emit_curves(groups, &out_dir.join("curves.csv"))
}

/// Rebuild summary and curves from the persisted group results.
pub fn regenerate(out_dir: &Path) -> Result<()> {
    let groups = load_groups(out_dir)?;
    if groups.is_empty() {
        return Err(Error::EmptyInput("no group results to report"));
    }
    write_tables(&groups, out_dir)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub transcripts: usize,
    pub points: usize,
    pub violations: Vec<String>,
}

/// Check every placed point of every transcript below `dir` against the
/// error region it was drawn from.
pub fn audit(dir: &Path) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    for t in read_transcripts(dir)? {
        let (points, violations) = audit_transcript(&t)?;
        report.transcripts += 1;
        report.points += points;
        report.violations.extend(violations);
    }
    Ok(report)
}
