//! Seeded prompt simulation and the interactive refinement loop.

mod experiment;

use std::path::PathBuf;
use std::time::Duration;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{EditingMode, PlanEntry, PromptKind, TaskDefinition};
use crate::metrics::{dice, nsd};
use crate::protocol::{editing_payload, ClientSession, Prompt, PromptClass, SegmentationRequest};
use crate::volume::{largest_component, read_label_mask, Connectivity, LabelMask};

pub use experiment::{discover_samples, run_experiment, Endpoints, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Editing iterations after initialisation.
    pub budget: u32,
    pub master_seed: u64,
    pub points_per_class: u32,
    pub early_stop_on_perfect: bool,
    /// Per-request response timeout.
    pub timeout: Duration,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            budget: 100,
            master_seed: 0,
            points_per_class: 1,
            early_stop_on_perfect: true,
            timeout: Duration::from_secs(300),
        }
    }
}

impl SimulationConfig {
    pub fn for_entry(entry: &PlanEntry, timeout: Duration) -> Self {
        SimulationConfig {
            budget: entry.budget,
            master_seed: entry.master_seed,
            points_per_class: entry.prompt.points_per_class,
            early_stop_on_perfect: true,
            timeout,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(Error::InvalidArgument("budget must be >= 1".into()));
        }
        if self.points_per_class < 1 {
            return Err(Error::InvalidArgument("points_per_class must be >= 1".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of the RNG stream for one (sample, iteration).
pub fn derive_seed(master: u64, sample_id: &str, iteration: u32) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ fnv1a64(sample_id)) ^ iteration as u64)
}

/// Up to `k` foreground points drawn uniformly without replacement from the
/// false negatives and up to `k` background points from the false positives.
/// An empty result means the prediction equals the reference.
pub fn sample_error_points(pred: &LabelMask, reference: &LabelMask, rng: &mut impl Rng, k: usize) -> Result<Vec<Prompt>> {
    if pred.dims() != reference.dims() {
        return Err(Error::ShapeMismatch {
            left: pred.shape(),
            right: reference.shape(),
        });
    }
    let (mut fn_idx, mut fp_idx) = (Vec::new(), Vec::new());
    for (i, (&p, &r)) in pred.voxels().iter().zip(reference.voxels()).enumerate() {
        match (p != 0, r != 0) {
            (false, true) => fn_idx.push(i),
            (true, false) => fp_idx.push(i),
            _ => {}
        }
    }
    let dims = pred.dims();
    let mut out = Vec::new();
    for (region, class) in [(&fn_idx, PromptClass::FOREGROUND), (&fp_idx, PromptClass::BACKGROUND)] {
        if region.is_empty() {
            continue;
        }
        for pick in index::sample(rng, region.len(), k.min(region.len())) {
            out.push(Prompt::point(class, dims.coord(region[pick])));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    Perfect,
    ApplicationError,
}

/// How the binary evaluation target is derived from a label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub label_path: PathBuf,
    pub target_labels: Vec<u32>,
    pub largest_component: bool,
    pub connectivity: Connectivity,
}

impl ReferenceSpec {
    pub fn for_task(label_path: PathBuf, task: &TaskDefinition) -> Self {
        ReferenceSpec {
            label_path,
            target_labels: task.target_labels.clone(),
            largest_component: task.largest_component,
            connectivity: task.connectivity,
        }
    }

    pub fn load(&self) -> Result<LabelMask> {
        let target = read_label_mask(&self.label_path)?.select(&self.target_labels);
        Ok(if self.largest_component {
            largest_component(&target, self.connectivity)
        } else {
            target
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub seed: u64,
    /// Prompts placed at this iteration (not the replayed history).
    pub prompts: Vec<Prompt>,
    pub label_path: PathBuf,
    pub dice: f64,
    pub nsd: f64,
}

/// Everything needed to audit and replay one sample session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTranscript {
    pub sample_id: String,
    pub task: String,
    pub algorithm: String,
    pub session_id: String,
    pub master_seed: u64,
    pub budget: u32,
    pub editing: EditingMode,
    pub points_per_class: u32,
    pub nsd_tolerance_mm: f64,
    pub image_paths: Vec<PathBuf>,
    pub reference: ReferenceSpec,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Per-iteration series, carried forward after a perfect stop. Shorter
    /// than `budget + 1` only after an application error.
    pub dice: Vec<f64>,
    pub nsd: Vec<f64>,
}

/// One dataset sample: image files (one per channel) and its label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image_paths: Vec<PathBuf>,
    pub label_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub transcript: InteractionTranscript,
    /// Reported inference time per completed request.
    pub inference_ms: Vec<f64>,
}

pub fn session_id(task: &str, algorithm: &str, sample: &str) -> String {
    format!("{task}:{algorithm}:{sample}")
}

/// Simulate one sample against an application.
///
/// Iteration 0 starts from an empty prediction, so it only receives
/// foreground points. Application failures end the transcript with
/// [`Termination::ApplicationError`]; harness-side failures (unreadable
/// reference, unsupported prompt type) are returned as errors.
pub fn run_sample(
    session: &mut ClientSession,
    sample: &Sample,
    entry: &PlanEntry,
    task: &TaskDefinition,
    cfg: &SimulationConfig,
) -> Result<SampleOutcome> {
    cfg.validate()?;
    if !entry.prompt.types.contains(&PromptKind::Point) {
        return Err(Error::InvalidArgument(format!(
            "no simulation policy for prompt types {:?}",
            entry.prompt.types
        )));
    }
    let reference_spec = ReferenceSpec::for_task(sample.label_path.clone(), task);
    let reference = reference_spec.load()?;
    let spacing = reference.spacing();
    let k = cfg.points_per_class.min(entry.prompt.points_per_class.max(1)) as usize;
    let sid = session_id(&task.id, &entry.algorithm, &sample.id);

    let mut transcript = InteractionTranscript {
        sample_id: sample.id.clone(),
        task: task.id.clone(),
        algorithm: entry.algorithm.clone(),
        session_id: sid.clone(),
        master_seed: cfg.master_seed,
        budget: cfg.budget,
        editing: entry.editing,
        points_per_class: k as u32,
        nsd_tolerance_mm: task.nsd_tolerance_mm,
        image_paths: sample.image_paths.clone(),
        reference: reference_spec,
        records: Vec::new(),
        termination: Termination::BudgetExhausted,
        error: None,
        dice: Vec::new(),
        nsd: Vec::new(),
    };
    let mut inference_ms = Vec::new();
    let mut pred = reference.empty_like();
    let mut history: Vec<Prompt> = Vec::new();

    for iteration in 0..=cfg.budget {
        let seed = derive_seed(cfg.master_seed, &sample.id, iteration);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prompts = sample_error_points(&pred, &reference, &mut rng, k)?;
        if prompts.is_empty() && cfg.early_stop_on_perfect {
            if iteration == 0 {
                // Empty target: nothing to prompt, the empty start is exact.
                transcript.dice.push(dice(&pred, &reference)?);
                transcript.nsd.push(nsd(&pred, &reference, spacing, task.nsd_tolerance_mm)?);
            }
            transcript.termination = Termination::Perfect;
            break;
        }
        let (current, memory) = editing_payload(entry.editing, &history, &prompts);
        let req = SegmentationRequest {
            session_id: sid.clone(),
            iteration,
            image_paths: sample.image_paths.clone(),
            prompts: current,
            prompt_memory: memory,
            task_text: task.description().to_string(),
        };
        let (resp, mask) = match session.request_segmentation(&req, cfg.timeout) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{sid} iteration {iteration}: {e}");
                transcript.termination = Termination::ApplicationError;
                transcript.error = Some(e.to_string());
                break;
            }
        };
        pred = mask.nonzero();
        let d = dice(&pred, &reference)?;
        let s = nsd(&pred, &reference, spacing, task.nsd_tolerance_mm)?;
        transcript.dice.push(d);
        transcript.nsd.push(s);
        inference_ms.push(resp.inference_ms);
        transcript.records.push(IterationRecord {
            iteration,
            seed,
            prompts: prompts.clone(),
            label_path: resp.label_path,
            dice: d,
            nsd: s,
        });
        history.extend(prompts);
    }
    if transcript.termination == Termination::Perfect {
        let n = cfg.budget as usize + 1;
        let (d, s) = (*transcript.dice.last().unwrap(), *transcript.nsd.last().unwrap());
        transcript.dice.resize(n, d);
        transcript.nsd.resize(n, s);
    }
    if let Err(e) = session.end_session() {
        log::warn!("{sid}: {e}");
    }
    Ok(SampleOutcome {
        transcript,
        inference_ms,
    })
}

/// Re-send the prompts of `transcript` and recompute its metrics. A
/// deterministic application yields the recorded values.
pub fn replay(session: &mut ClientSession, transcript: &InteractionTranscript, timeout: Duration) -> Result<Vec<(f64, f64)>> {
    let reference = transcript.reference.load()?;
    let spacing = reference.spacing();
    let mut history: Vec<Prompt> = Vec::new();
    let mut out = Vec::with_capacity(transcript.records.len());
    for rec in &transcript.records {
        let (prompts, prompt_memory) = editing_payload(transcript.editing, &history, &rec.prompts);
        let req = SegmentationRequest {
            session_id: format!("{}:replay", transcript.session_id),
            iteration: rec.iteration,
            image_paths: transcript.image_paths.clone(),
            prompts,
            prompt_memory,
            task_text: transcript.task.clone(),
        };
        let (_, mask) = session.request_segmentation(&req, timeout)?;
        let pred = mask.nonzero();
        out.push((
            dice(&pred, &reference)?,
            nsd(&pred, &reference, spacing, transcript.nsd_tolerance_mm)?,
        ));
        history.extend(rec.prompts.iter().cloned());
    }
    session.end_session()?;
    Ok(out)
}

/// Check that every placed point lies in the error region of the prediction
/// preceding it. Returns the number of points checked and the violations.
pub fn audit_transcript(t: &InteractionTranscript) -> Result<(usize, Vec<String>)> {
    let reference = t.reference.load()?;
    let mut prior = reference.empty_like();
    let mut checked = 0;
    let mut violations = Vec::new();
    for rec in &t.records {
        for p in &rec.prompts {
            for &c in &p.coords {
                checked += 1;
                let (in_pred, in_ref) = (prior.is_foreground(c), reference.is_foreground(c));
                let ok = if p.class.is_background() {
                    in_pred && !in_ref
                } else {
                    !in_pred && in_ref
                };
                if !ok {
                    violations.push(format!(
                        "{} iteration {}: {:?} point at {:?} outside its error region",
                        t.session_id,
                        rec.iteration,
                        p.class,
                        c.to_array()
                    ));
                }
            }
        }
        prior = read_label_mask(&rec.label_path)?.nonzero();
    }
    Ok((checked, violations))
}
