use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{run_sample, Sample, SampleOutcome, SimulationConfig};
use crate::error::{Error, Result};
use crate::fingerprint::{ExperimentPlan, PlanEntry, TaskDefinition};
use crate::protocol::ClientSession;
use crate::report::{self, Environment, ExperimentResult, GroupResult, SkipRecord, TimingRecord};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

/// Algorithm id → application addresses. Each address serves one session
/// at a time, so an algorithm runs at most one worker per address.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Endpoints(pub BTreeMap<String, Vec<String>>);

impl Endpoints {
    /// Parse `algorithm = "host:port"` or `algorithm = ["host:port", ...]`.
    pub fn parse(doc: &str) -> Result<Self> {
        let raw: BTreeMap<String, OneOrMany> =
            toml::from_str(doc).map_err(|e| Error::config("<endpoints>", e.message()))?;
        let map = raw
            .into_iter()
            .map(|(k, v)| match v {
                OneOrMany::One(a) => (k, vec![a]),
                OneOrMany::Many(a) => (k, a),
            })
            .collect();
        Ok(Endpoints(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&doc)
    }

    pub fn get(&self, algorithm: &str) -> &[String] {
        self.0.get(algorithm).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub timeout: Duration,
}

fn strip_nifti_ext(name: &str) -> Option<&str> {
    name.strip_suffix(".nii.gz").or_else(|| name.strip_suffix(".nii"))
}

/// Samples under `<root>/<dataset_path>`: every `images/<id>.nii[.gz]` with
/// a label file of the same name in `labels/`, sorted by id.
pub fn discover_samples(root: &Path, task: &TaskDefinition) -> Result<Vec<Sample>> {
    let base = root.join(&task.dataset_path);
    let images = base.join("images");
    let entries = std::fs::read_dir(&images).map_err(|e| Error::io(&images, e))?;
    let mut samples = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&images, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(id) = strip_nifti_ext(name) else {
            continue;
        };
        let label_path = base.join("labels").join(name);
        if !label_path.is_file() {
            return Err(Error::io(
                &label_path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "label file missing for image"),
            ));
        }
        samples.push(Sample {
            id: id.to_string(),
            image_paths: vec![path.clone()],
            label_path,
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("dataset has no images"));
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(samples)
}

fn connect_all(addrs: &[String], limit: usize, timeout: Duration, warnings: &mut Vec<String>) -> Vec<ClientSession> {
    let mut sessions = Vec::new();
    for addr in addrs.iter().take(limit.max(1)) {
        match ClientSession::connect(addr, timeout) {
            Ok(s) => sessions.push(s),
            Err(e) => {
                log::warn!("{e}");
                warnings.push(e.to_string());
            }
        }
    }
    sessions
}

/// Simulate every sample of one plan entry with a pool of sessions.
fn run_entry(
    entry: &PlanEntry,
    task: &TaskDefinition,
    samples: &[Sample],
    sessions: Vec<ClientSession>,
    cfg: &RunConfig,
) -> Vec<Result<SampleOutcome>> {
    let sim = SimulationConfig::for_entry(entry, cfg.timeout);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SampleOutcome>>>> = Mutex::new((0..samples.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for mut session in sessions {
            let (next, results, sim) = (&next, &results, &sim);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(sample) = samples.get(i) else {
                    break;
                };
                let outcome = run_sample(&mut session, sample, entry, task, sim).and_then(|o| {
                    report::write_transcript(&cfg.out_dir, &o.transcript)?;
                    Ok(o)
                });
                match &outcome {
                    Ok(o) => log::info!(
                        "{} {} {}: {:?}",
                        task.id,
                        entry.algorithm,
                        sample.id,
                        o.transcript.termination
                    ),
                    Err(e) => log::warn!("{} {} {}: {e}", task.id, entry.algorithm, sample.id),
                }
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::Protocol("sample never scheduled".into()))))
        .collect()
}

/// Run every plan entry. Transcripts and per-group results are written as
/// soon as they complete; summary, curves and run record at the end.
pub fn run_experiment(plan: &ExperimentPlan, endpoints: &Endpoints, cfg: &RunConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult {
        master_seed: plan.master_seed,
        entries: plan.entries.clone(),
        groups: Vec::new(),
        skipped: Vec::new(),
        failed_samples: Vec::new(),
        warnings: Vec::new(),
        timings: Vec::new(),
        environment: Environment::now(cfg.workers),
    };
    for (order, entry) in plan.entries.iter().enumerate() {
        let skip = |reason: String| SkipRecord {
            algorithm: entry.algorithm.clone(),
            task: entry.task.clone(),
            reason,
        };
        let Some(task) = plan.task(&entry.task) else {
            result.skipped.push(skip("task definition missing from plan".into()));
            continue;
        };
        let samples = match discover_samples(&cfg.data_root, task) {
            Ok(s) => s,
            Err(e) => {
                result.skipped.push(skip(e.to_string()));
                continue;
            }
        };
        let addrs = endpoints.get(&entry.algorithm);
        if addrs.is_empty() {
            result.skipped.push(skip("no endpoint configured".into()));
            continue;
        }
        let sessions = connect_all(addrs, cfg.workers, cfg.timeout, &mut result.warnings);
        if sessions.is_empty() {
            result.skipped.push(skip(format!("no reachable endpoint among {addrs:?}")));
            continue;
        }
        let outcomes = run_entry(entry, task, &samples, sessions, cfg);
        let mut transcripts = Vec::new();
        for (sample, outcome) in samples.iter().zip(outcomes) {
            match outcome {
                Ok(o) => {
                    result.timings.extend(o.inference_ms.iter().enumerate().map(|(it, &ms)| TimingRecord {
                        task: task.id.clone(),
                        algorithm: entry.algorithm.clone(),
                        sample: sample.id.clone(),
                        iteration: it as u32,
                        inference_ms: ms,
                    }));
                    transcripts.push(o.transcript);
                }
                Err(e) => result.failed_samples.push(format!("{} {} {}: {e}", task.id, entry.algorithm, sample.id)),
            }
        }
        let mut group = GroupResult::from_transcripts(entry, task, &transcripts)?;
        group.order = order;
        report::write_group(&cfg.out_dir, &group)?;
        result.groups.push(group);
    }
    result.environment.finish();
    report::emit_all(&result, &cfg.out_dir)?;
    Ok(result)
}
