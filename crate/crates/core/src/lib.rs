//! Evaluation harness for interactive volumetric segmentation.
//!
//! Algorithms are described by declarative fingerprints and run as external
//! applications behind a line-based session protocol. The harness plans
//! compatible experiments, simulates prompts from error regions, and scores
//! every iteration in the native image space.

pub mod error;
pub mod fingerprint;
pub mod metrics;
pub mod mocksegmenter;
pub mod protocol;
pub mod report;
pub mod simulator;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use fingerprint::{AlgorithmFingerprint, EditingMode, ExperimentPlan, PlanEntry, PromptKind, TaskDefinition};
pub use metrics::{ConvergenceTarget, MetricSeries, SummaryRow};
pub use protocol::{ClientSession, Prompt, PromptClass, SegmentationRequest, SegmentationResponse};
pub use simulator::{InteractionTranscript, SimulationConfig, Termination};
pub use volume::{Dims, LabelMask, Volume, VoxelCoord};
