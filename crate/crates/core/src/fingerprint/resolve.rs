use serde::{Deserialize, Serialize};

use super::{AlgorithmFingerprint, EditingMode, PromptKind, Support, TaskDefinition};
use crate::error::{Error, Result};

/// Prompt configuration shared by every algorithm evaluated on a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub types: Vec<PromptKind>,
    /// Prompts per class per iteration after applying every constraint.
    pub points_per_class: u32,
    /// Constraint texts of the partial supports involved, deduplicated.
    pub constraints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub algorithm: String,
    pub task: String,
    pub prompt: PromptConfig,
    pub editing: EditingMode,
    pub budget: u32,
    pub master_seed: u64,
    pub notes: Vec<String>,
    /// The task modality is not among the algorithm's trained modalities.
    pub out_of_distribution: bool,
}

/// Runnable experiments plus the task definitions they reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub master_seed: u64,
    pub tasks: Vec<TaskDefinition>,
    pub entries: Vec<PlanEntry>,
}

impl ExperimentPlan {
    pub fn task(&self, id: &str) -> Option<&TaskDefinition> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        Ok(serde_json::from_str(doc)?)
    }
}

/// Why `fp` cannot run `task`, or `None` when compatible.
fn incompatibility(fp: &AlgorithmFingerprint, task: &TaskDefinition) -> Option<String> {
    if !fp.seg_subtypes.contains(&task.seg_subtype) {
        return Some(format!("segmentation subtype {:?} not supported", task.seg_subtype));
    }
    if let Some(kind) = task
        .prompt_spec
        .types
        .iter()
        .find(|&&k| !fp.prompt_support.get(k).is_supported())
    {
        return Some(format!("prompt type `{}` not supported", kind.name()));
    }
    let channels = fp.native_patch.channels;
    if channels < task.patch_config.channels && !fp.native_patch.adaptable {
        return Some(format!(
            "task needs {} channels, algorithm takes {channels}",
            task.patch_config.channels
        ));
    }
    None
}

fn pair_notes(fp: &AlgorithmFingerprint, task: &TaskDefinition) -> (Vec<String>, bool) {
    let mut notes = Vec::new();
    for &kind in &task.prompt_spec.types {
        if let Support::Partial { constraint, .. } = fp.prompt_support.get(kind) {
            notes.push(format!("{}: partial support ({constraint})", kind.name()));
        }
    }
    if fp.native_patch.channels < task.patch_config.channels {
        notes.push(format!(
            "channel count adapted from {} to {}",
            task.patch_config.channels, fp.native_patch.channels
        ));
    }
    let modality = &task.patch_config.modality;
    let ood = !fp.trained_modalities.is_empty()
        && !fp.trained_modalities.iter().any(|m| m.eq_ignore_ascii_case(modality));
    if ood {
        notes.push(format!("out-of-distribution modality {modality}"));
    }
    (notes, ood)
}

/// Prompt types of `task` supported by every fingerprint, with the strongest
/// per-class cap among them.
pub fn common_prompt_config(fps: &[&AlgorithmFingerprint], task: &TaskDefinition) -> Result<PromptConfig> {
    if fps.is_empty() {
        return Err(Error::InvalidArgument("no fingerprints to intersect".into()));
    }
    let types: Vec<PromptKind> = task
        .prompt_spec
        .types
        .iter()
        .copied()
        .filter(|&k| fps.iter().all(|fp| fp.prompt_support.get(k).is_supported()))
        .collect();
    if types.is_empty() {
        return Err(Error::NoCommonPrompt { task: task.id.clone() });
    }
    let mut points_per_class = task.prompt_spec.per_class;
    let mut constraints: Vec<String> = Vec::new();
    for fp in fps {
        for &kind in &types {
            let support = fp.prompt_support.get(kind);
            if let Some(cap) = support.max_per_class() {
                points_per_class = points_per_class.min(cap);
            }
            if let Support::Partial { constraint, .. } = support {
                if !constraints.contains(constraint) {
                    constraints.push(constraint.clone());
                }
            }
        }
    }
    Ok(PromptConfig {
        types,
        points_per_class,
        constraints,
    })
}

/// Compatible (algorithm, task) pairs, each with its own prompt config.
pub fn resolve_compatibility(fps: &[AlgorithmFingerprint], tasks: &[TaskDefinition]) -> ExperimentPlan {
    let mut entries = Vec::new();
    for task in tasks {
        for fp in fps {
            if let Some(reason) = incompatibility(fp, task) {
                log::debug!("{} excluded from {}: {reason}", fp.id, task.id);
                continue;
            }
            let prompt = common_prompt_config(&[fp], task).expect("compatible pair shares its own prompt types");
            let (notes, out_of_distribution) = pair_notes(fp, task);
            entries.push(PlanEntry {
                algorithm: fp.id.clone(),
                task: task.id.clone(),
                prompt,
                editing: fp.editing,
                budget: task.prompt_spec.budget,
                master_seed: 0,
                notes,
                out_of_distribution,
            });
        }
    }
    ExperimentPlan {
        master_seed: 0,
        tasks: tasks.to_vec(),
        entries,
    }
}

/// Resolve compatibility, then give every algorithm on a task the prompt
/// config common to all of that task's compatible algorithms.
pub fn plan_experiments(
    fps: &[AlgorithmFingerprint],
    tasks: &[TaskDefinition],
    master_seed: u64,
    budget: Option<u32>,
) -> Result<ExperimentPlan> {
    if budget == Some(0) {
        return Err(Error::InvalidArgument("budget must be >= 1".into()));
    }
    let mut plan = resolve_compatibility(fps, tasks);
    plan.master_seed = master_seed;
    for task in tasks {
        let members: Vec<&AlgorithmFingerprint> = plan
            .entries
            .iter()
            .filter(|e| e.task == task.id)
            .filter_map(|e| fps.iter().find(|f| f.id == e.algorithm))
            .collect();
        if members.is_empty() {
            log::warn!("no compatible algorithm for task {}", task.id);
            continue;
        }
        let shared = common_prompt_config(&members, task)?;
        for e in plan.entries.iter_mut().filter(|e| e.task == task.id) {
            e.prompt = shared.clone();
        }
    }
    for e in &mut plan.entries {
        e.master_seed = master_seed;
        if let Some(n) = budget {
            e.budget = n;
        }
    }
    Ok(plan)
}
