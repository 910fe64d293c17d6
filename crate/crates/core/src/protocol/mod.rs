//! Wire protocol between the harness and segmentation applications.
//!
//! Messages are JSON objects, one per line, over a TCP stream. Every object
//! has a `type` field naming the message. Volumes never travel over the wire:
//! requests name image files and responses name the written label file, both
//! on a filesystem shared by harness and application.
//!
//! | direction | `type` | fields |
//! |---|---|---|
//! | harness → app | `hello` | `version` |
//! | app → harness | `hello_ack` | `version`, `fingerprint` |
//! | harness → app | `start_session` | `session_id`, `task_text`, `image_paths` |
//! | harness → app | `segment` | `session_id`, `iteration`, `prompts`, `prompt_memory` |
//! | app → harness | `segmented` | `session_id`, `iteration`, `label_path`, `inference_ms` |
//! | app → harness | `error` | `code`, `message` |
//! | harness → app | `end_session` | `session_id` |
//! | harness → app | `shutdown` | |
//!
//! `start_session`, `end_session` and `shutdown` have no reply. A problem with
//! a started session is reported as an `error` in reply to its next
//! `segment`.

mod client;
mod conformance;

use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{AlgorithmFingerprint, EditingMode, PromptKind};
use crate::volume::{Dims, VoxelCoord};

pub use client::ClientSession;
pub use conformance::conformance;

pub const PROTOCOL_VERSION: u32 = 1;

/// Class intent of a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PromptClass {
    Named(NamedClass),
    Label(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedClass {
    Foreground,
    Background,
}

impl PromptClass {
    pub const FOREGROUND: PromptClass = PromptClass::Named(NamedClass::Foreground);
    pub const BACKGROUND: PromptClass = PromptClass::Named(NamedClass::Background);

    /// Background intent; labelled classes count as foreground.
    pub fn is_background(self) -> bool {
        self == Self::BACKGROUND
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub class: PromptClass,
    pub coords: Vec<VoxelCoord>,
}

impl Prompt {
    pub fn point(class: PromptClass, at: VoxelCoord) -> Self {
        Prompt {
            kind: PromptKind::Point,
            class,
            coords: vec![at],
        }
    }

    /// Check the coordinate count for the prompt kind.
    pub fn validate(&self) -> Result<()> {
        let n = self.coords.len();
        let ok = match self.kind {
            PromptKind::Point => n == 1,
            PromptKind::Box => n == 2,
            PromptKind::Scribble => n >= 2,
            PromptKind::Lasso => n >= 3,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRequest(format!("{} prompt with {n} coordinates", self.kind.name())))
        }
    }

    pub fn within(&self, dims: Dims) -> bool {
        self.coords.iter().all(|&c| dims.contains(c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        version: u32,
    },
    HelloAck {
        version: u32,
        fingerprint: Box<AlgorithmFingerprint>,
    },
    StartSession {
        session_id: String,
        task_text: String,
        image_paths: Vec<PathBuf>,
    },
    Segment {
        session_id: String,
        iteration: u32,
        prompts: Vec<Prompt>,
        prompt_memory: Vec<Prompt>,
    },
    Segmented {
        session_id: String,
        iteration: u32,
        label_path: PathBuf,
        inference_ms: f64,
    },
    Error {
        code: String,
        message: String,
    },
    EndSession {
        session_id: String,
    },
    Shutdown,
}

impl Message {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Message::Error {
            code: code.into(),
            message: message.into(),
        }
    }
}

/// Write one message followed by a newline and flush.
pub fn write_message(w: &mut impl Write, msg: &Message) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(msg).map_err(std::io::Error::other)?;
    line.push(b'\n');
    w.write_all(&line)?;
    w.flush()
}

/// Raw next line, or `None` at end of stream.
pub fn read_line(r: &mut impl BufRead) -> std::io::Result<Option<String>> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        if !line.trim().is_empty() {
            return Ok(Some(line));
        }
    }
}

pub fn decode(line: &str) -> Result<Message> {
    Ok(serde_json::from_str(line.trim_end())?)
}

/// One segmentation call of an interactive session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationRequest {
    pub session_id: String,
    pub iteration: u32,
    /// One file per channel or sequence.
    pub image_paths: Vec<PathBuf>,
    pub prompts: Vec<Prompt>,
    pub prompt_memory: Vec<Prompt>,
    pub task_text: String,
}

impl SegmentationRequest {
    /// Structural checks that need no image. Coordinate range is checked by
    /// the client against the image header.
    pub fn validate(&self) -> Result<()> {
        if self.image_paths.is_empty() {
            return Err(Error::InvalidRequest("no image paths".into()));
        }
        if self.iteration == 0 && !self.prompt_memory.is_empty() {
            return Err(Error::InvalidRequest("prompt memory must be empty at iteration 0".into()));
        }
        self.prompts.iter().chain(&self.prompt_memory).try_for_each(Prompt::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResponse {
    pub session_id: String,
    pub iteration: u32,
    pub label_path: PathBuf,
    pub inference_ms: f64,
}

/// Split prompts into what is sent as current prompts and as memory.
///
/// Implicit: current prompts plus full history as memory. Explicit (and
/// `none`): current prompts only. Atomic: history and current together as
/// the complete prompt set, no memory.
pub fn editing_payload(mode: EditingMode, history: &[Prompt], current: &[Prompt]) -> (Vec<Prompt>, Vec<Prompt>) {
    match mode {
        EditingMode::Implicit => (current.to_vec(), history.to_vec()),
        EditingMode::Explicit | EditingMode::None => (current.to_vec(), Vec::new()),
        EditingMode::Atomic => (history.iter().chain(current).cloned().collect(), Vec::new()),
    }
}
