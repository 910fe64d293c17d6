//! Declarative algorithm fingerprints, task definitions and the
//! compatibility resolver that turns them into experiment plans.
//!
//! Both documents are TOML. Unknown keys are rejected and every error
//! carries the dotted path of the offending field. See `docs/config.md` for
//! the schema.

mod resolve;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ConvergenceTarget;
use crate::volume::Connectivity;

pub use resolve::{common_prompt_config, plan_experiments, resolve_compatibility, ExperimentPlan, PlanEntry, PromptConfig};

/// Prompt types an application can accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Point,
    Scribble,
    Box,
    Lasso,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [PromptKind::Point, PromptKind::Scribble, PromptKind::Box, PromptKind::Lasso];

    pub fn name(self) -> &'static str {
        match self {
            PromptKind::Point => "point",
            PromptKind::Scribble => "scribble",
            PromptKind::Box => "box",
            PromptKind::Lasso => "lasso",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportLevel {
    Full,
    Partial,
    #[default]
    None,
}

/// Support for one prompt type. Partial support carries the constraint that
/// limits its use.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "SupportRepr", into = "SupportRepr")]
pub enum Support {
    Full,
    Partial {
        constraint: String,
        max_per_class: Option<u32>,
    },
    #[default]
    None,
}

impl Support {
    pub fn level(&self) -> SupportLevel {
        match self {
            Support::Full => SupportLevel::Full,
            Support::Partial { .. } => SupportLevel::Partial,
            Support::None => SupportLevel::None,
        }
    }

    pub fn is_supported(&self) -> bool {
        !matches!(self, Support::None)
    }

    /// Cap on prompts of this type per class and iteration, if any.
    pub fn max_per_class(&self) -> Option<u32> {
        match self {
            Support::Partial {
                max_per_class: Some(n), ..
            } => Some(*n),
            Support::Partial { constraint, .. } if constraint == ONE_PER_CLASS => Some(1),
            _ => None,
        }
    }
}

/// Well-known constraint text; implies `max_per_class = 1`.
pub const ONE_PER_CLASS: &str = "one-point-per-class";

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SupportRepr {
    Level(SupportLevel),
    Detailed(DetailedSupport),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetailedSupport {
    support: SupportLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constraint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_per_class: Option<u32>,
}

impl TryFrom<SupportRepr> for Support {
    type Error = String;

    fn try_from(r: SupportRepr) -> std::result::Result<Self, String> {
        match r {
            SupportRepr::Level(SupportLevel::Full) => Ok(Support::Full),
            SupportRepr::Level(SupportLevel::None) => Ok(Support::None),
            SupportRepr::Level(SupportLevel::Partial) => {
                Err("partial support needs a table with a `constraint` description".into())
            }
            SupportRepr::Detailed(d) => match (d.support, d.constraint, d.max_per_class) {
                (SupportLevel::Partial, Some(constraint), max) => {
                    if max == Some(0) {
                        return Err("max_per_class must be >= 1".into());
                    }
                    Ok(Support::Partial {
                        constraint,
                        max_per_class: max,
                    })
                }
                (SupportLevel::Partial, None, _) => Err("partial support needs a `constraint`".into()),
                (level, None, None) => Ok(if level == SupportLevel::Full { Support::Full } else { Support::None }),
                (_, _, _) => Err("`constraint` and `max_per_class` only apply to partial support".into()),
            },
        }
    }
}

impl From<Support> for SupportRepr {
    fn from(s: Support) -> Self {
        match s {
            Support::Full => SupportRepr::Level(SupportLevel::Full),
            Support::None => SupportRepr::Level(SupportLevel::None),
            Support::Partial {
                constraint,
                max_per_class,
            } => SupportRepr::Detailed(DetailedSupport {
                support: SupportLevel::Partial,
                constraint: Some(constraint),
                max_per_class,
            }),
        }
    }
}

/// Per-prompt-type support; every type is present, missing keys are `none`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptSupport {
    pub point: Support,
    pub scribble: Support,
    #[serde(rename = "box")]
    pub bbox: Support,
    pub lasso: Support,
}

impl PromptSupport {
    pub fn get(&self, kind: PromptKind) -> &Support {
        match kind {
            PromptKind::Point => &self.point,
            PromptKind::Scribble => &self.scribble,
            PromptKind::Box => &self.bbox,
            PromptKind::Lasso => &self.lasso,
        }
    }

    pub fn get_mut(&mut self, kind: PromptKind) -> &mut Support {
        match kind {
            PromptKind::Point => &mut self.point,
            PromptKind::Scribble => &mut self.scribble,
            PromptKind::Box => &mut self.bbox,
            PromptKind::Lasso => &mut self.lasso,
        }
    }
}

/// Initialisation strategies.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitModes {
    pub point: SupportLevel,
    #[serde(rename = "box")]
    pub bbox: SupportLevel,
    pub text: SupportLevel,
    pub scribble: SupportLevel,
    pub lasso: SupportLevel,
    pub automatic: SupportLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adaptation {
    #[default]
    Static,
    Adaptive,
}

/// How an application consumes prompts across editing iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditingMode {
    /// The application keeps prompt memory; it receives current prompts plus
    /// the full history.
    Implicit,
    /// Only the current prompts are used.
    Explicit,
    /// Inference is redone from scratch with the full accumulated prompt set.
    Atomic,
    /// Initialisation only.
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegSubtype {
    Binary,
    Multiclass,
    Semantic,
    Instance,
    Panoptic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    #[default]
    General,
    TargetSpecific,
}

/// Native patch voxel counts, or `"adaptive"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "PatchVoxelsRepr", into = "PatchVoxelsRepr")]
pub enum PatchVoxels {
    Fixed([u32; 3]),
    #[default]
    Adaptive,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PatchVoxelsRepr {
    Fixed([u32; 3]),
    Keyword(String),
}

impl TryFrom<PatchVoxelsRepr> for PatchVoxels {
    type Error = String;

    fn try_from(r: PatchVoxelsRepr) -> std::result::Result<Self, String> {
        match r {
            PatchVoxelsRepr::Fixed(v) if v.iter().all(|&n| n > 0) => Ok(PatchVoxels::Fixed(v)),
            PatchVoxelsRepr::Fixed(v) => Err(format!("voxel counts {v:?} must be positive")),
            PatchVoxelsRepr::Keyword(k) if k == "adaptive" => Ok(PatchVoxels::Adaptive),
            PatchVoxelsRepr::Keyword(k) => Err(format!("expected three voxel counts or \"adaptive\", got {k:?}")),
        }
    }
}

impl From<PatchVoxels> for PatchVoxelsRepr {
    fn from(p: PatchVoxels) -> Self {
        match p {
            PatchVoxels::Fixed(v) => PatchVoxelsRepr::Fixed(v),
            PatchVoxels::Adaptive => PatchVoxelsRepr::Keyword("adaptive".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NativePatch {
    #[serde(default)]
    pub voxels: PatchVoxels,
    #[serde(default = "one")]
    pub channels: u32,
    /// Whether the algorithm copes with inputs that deviate from its native
    /// patch configuration.
    #[serde(default)]
    pub adaptable: bool,
}

impl Default for NativePatch {
    fn default() -> Self {
        NativePatch {
            voxels: PatchVoxels::Adaptive,
            channels: 1,
            adaptable: false,
        }
    }
}

fn one() -> u32 {
    1
}

fn default_budget() -> u32 {
    100
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmFingerprint {
    pub id: String,
    #[serde(default)]
    pub adaptation: Adaptation,
    #[serde(default)]
    pub init_modes: InitModes,
    #[serde(default)]
    pub editing: EditingMode,
    pub seg_subtypes: BTreeSet<SegSubtype>,
    #[serde(default)]
    pub scope: Scope,
    #[serde(default)]
    pub prompt_support: PromptSupport,
    #[serde(default)]
    pub native_patch: NativePatch,
    #[serde(default)]
    pub trained_modalities: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxels: Option<[u32; 3]>,
    #[serde(default = "one")]
    pub channels: u32,
    pub modality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub types: Vec<PromptKind>,
    /// Prompts per class per iteration.
    #[serde(default = "one")]
    pub per_class: u32,
    /// Interaction budget N (editing iterations after initialisation).
    #[serde(default = "default_budget")]
    pub budget: u32,
}

/// Either a fixed target Dice or the per-sample Dice scores of an automated
/// baseline, whose lower quartile becomes the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_dice: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_dice: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDefinition {
    pub id: String,
    pub dataset_path: PathBuf,
    pub seg_subtype: SegSubtype,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_text: Option<String>,
    pub target_labels: Vec<u32>,
    #[serde(default)]
    pub largest_component: bool,
    #[serde(default)]
    pub connectivity: Connectivity,
    pub patch_config: PatchConfig,
    pub prompt_spec: PromptSpec,
    pub nsd_tolerance_mm: f64,
    pub convergence_target: ConvergenceSpec,
}

impl TaskDefinition {
    pub fn description(&self) -> &str {
        self.task_text.as_deref().unwrap_or(&self.id)
    }

    pub fn convergence(&self) -> Result<ConvergenceTarget> {
        match (&self.convergence_target.target_dice, &self.convergence_target.baseline_dice) {
            (Some(t), None) => ConvergenceTarget::configured(&self.id, *t),
            (None, Some(b)) => ConvergenceTarget::from_baseline(&self.id, b),
            _ => Err(Error::config(
                "convergence_target",
                "set exactly one of `target_dice` or `baseline_dice`",
            )),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::config("id", "must not be empty"));
        }
        if self.target_labels.is_empty() {
            return Err(Error::config("target_labels", "at least one label is required"));
        }
        if self.target_labels.contains(&0) {
            return Err(Error::config("target_labels", "label 0 is background"));
        }
        if self.prompt_spec.types.is_empty() {
            return Err(Error::config("prompt_spec.types", "at least one prompt type is required"));
        }
        if self.prompt_spec.budget < 1 {
            return Err(Error::config("prompt_spec.budget", "must be >= 1"));
        }
        if self.prompt_spec.per_class < 1 {
            return Err(Error::config("prompt_spec.per_class", "must be >= 1"));
        }
        if self.patch_config.channels < 1 {
            return Err(Error::config("patch_config.channels", "must be >= 1"));
        }
        if !(self.nsd_tolerance_mm.is_finite() && self.nsd_tolerance_mm >= 0.0) {
            return Err(Error::config("nsd_tolerance_mm", "must be a finite value >= 0"));
        }
        self.convergence()
            .map_err(|e| match e {
                Error::Config { .. } => e,
                other => Error::config("convergence_target", other.to_string()),
            })
            .map(|_| ())
    }
}

impl AlgorithmFingerprint {
    fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::config("id", "must not be empty"));
        }
        if self.seg_subtypes.is_empty() {
            return Err(Error::config("seg_subtypes", "at least one subtype is required"));
        }
        if self.native_patch.channels < 1 {
            return Err(Error::config("native_patch.channels", "must be >= 1"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fingerprint serializes")
    }
}

impl TaskDefinition {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("task serializes")
    }
}

fn parse_toml<T: DeserializeOwned>(doc: &str) -> Result<T> {
    let de = toml::Deserializer::parse(doc).map_err(|e| Error::config("<document>", e.message()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<document>".into() } else { path }, e.into_inner().message())
    })
}

pub fn parse_fingerprint(doc: &str) -> Result<AlgorithmFingerprint> {
    let fp: AlgorithmFingerprint = parse_toml(doc)?;
    fp.validate()?;
    Ok(fp)
}

pub fn parse_task(doc: &str) -> Result<TaskDefinition> {
    let task: TaskDefinition = parse_toml(doc)?;
    task.validate()?;
    Ok(task)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn prefix_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Config { path: field, message } => Error::Config {
            path: format!("{}: {field}", path.display()),
            message,
        },
        other => other,
    }
}

pub fn load_fingerprint(path: impl AsRef<Path>) -> Result<AlgorithmFingerprint> {
    let path = path.as_ref();
    parse_fingerprint(&read(path)?).map_err(|e| prefix_path(path, e))
}

pub fn load_task(path: impl AsRef<Path>) -> Result<TaskDefinition> {
    let path = path.as_ref();
    parse_task(&read(path)?).map_err(|e| prefix_path(path, e))
}

/// `*.toml` files in `dir`, sorted by name.
pub fn config_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "toml") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_fingerprints(dir: impl AsRef<Path>) -> Result<Vec<AlgorithmFingerprint>> {
    config_files(dir)?.iter().map(load_fingerprint).collect()
}

pub fn load_tasks(dir: impl AsRef<Path>) -> Result<Vec<TaskDefinition>> {
    config_files(dir)?.iter().map(load_task).collect()
}
