//! Reference applications with analytically known behaviour.
//!
//! Mocks read the reference annotation of each image from a "cheat" label
//! directory (same file name as the image). They exist to verify the harness
//! and must never be reported as real algorithms.

use std::collections::BTreeSet;
use std::io::BufReader;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{AlgorithmFingerprint, EditingMode, PatchVoxels, PromptKind, SegSubtype, Support};
use crate::protocol::{decode, read_line, write_message, Message, Prompt, PROTOCOL_VERSION};
use crate::simulator::derive_seed;
use crate::volume::{read_header, read_label_mask, Affine, Dims, LabelMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MockBehavior {
    /// Adds `ball ∩ ref` around foreground prompts and removes `ball \ ref`
    /// around background prompts.
    OracleBall { radius: u32 },
    /// Reference dilated `k` times with face neighbours.
    DilatedTruth { k: u32 },
    ConstantEmpty,
    /// Empty before iteration `j`, exact reference from then on.
    PerfectAfter { j: u32 },
    /// Oracle ball output with every voxel flipped with probability
    /// `flip_prob`.
    NoisyOracle { radius: u32, flip_prob: f64 },
}

impl MockBehavior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MockBehavior::NoisyOracle { flip_prob, .. } if !(0.0..=1.0).contains(&flip_prob) => Err(
                Error::InvalidArgument(format!("flip probability {flip_prob} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MockBehavior::OracleBall { .. } => "oracle_ball",
            MockBehavior::DilatedTruth { .. } => "dilated_truth",
            MockBehavior::ConstantEmpty => "constant_empty",
            MockBehavior::PerfectAfter { .. } => "perfect_after",
            MockBehavior::NoisyOracle { .. } => "noisy_oracle",
        }
    }

    fn needs_reference(&self) -> bool {
        !matches!(self, MockBehavior::ConstantEmpty)
    }
}

/// Fingerprint advertised by a mock: binary, point and scribble prompts,
/// any channel count.
pub fn mock_fingerprint(behavior: &MockBehavior, editing: EditingMode) -> AlgorithmFingerprint {
    let mut fp = crate::fingerprint::parse_fingerprint("id = \"mock\"\nseg_subtypes = [\"binary\"]\n")
        .expect("static fingerprint parses");
    fp.id = format!("mock-{}", behavior.name().replace('_', "-"));
    fp.editing = editing;
    fp.seg_subtypes = BTreeSet::from([SegSubtype::Binary]);
    *fp.prompt_support.get_mut(PromptKind::Point) = Support::Full;
    *fp.prompt_support.get_mut(PromptKind::Scribble) = Support::Full;
    fp.native_patch.voxels = PatchVoxels::Adaptive;
    fp.native_patch.adaptable = true;
    fp
}

#[derive(Debug, Clone)]
pub struct MockOptions {
    /// Directory receiving the returned label files.
    pub workdir: PathBuf,
    /// Directory of reference labels named like the images.
    pub cheat_labels: Option<PathBuf>,
    pub fingerprint: AlgorithmFingerprint,
    /// Answer with masks of this shape instead of the image shape.
    pub output_shape: Option<Dims>,
    /// Sleep before every reply.
    pub delay: Duration,
    pub protocol_version: u32,
}

impl MockOptions {
    pub fn new(behavior: &MockBehavior, workdir: impl Into<PathBuf>, cheat_labels: Option<PathBuf>) -> Self {
        MockOptions {
            workdir: workdir.into(),
            cheat_labels,
            fingerprint: mock_fingerprint(behavior, EditingMode::Implicit),
            output_shape: None,
            delay: Duration::ZERO,
            protocol_version: PROTOCOL_VERSION,
        }
    }
}

struct Session {
    id: String,
    dims: Dims,
    spacing: [f64; 3],
    affine: Affine,
    reference: std::result::Result<Option<Vec<bool>>, String>,
    /// Noise-free oracle prediction.
    state: Vec<bool>,
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn ball_offsets(radius: u32) -> Vec<[isize; 3]> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dk in -r..=r {
        for dj in -r..=r {
            for di in -r..=r {
                if di * di + dj * dj + dk * dk <= r * r {
                    out.push([di, dj, dk]);
                }
            }
        }
    }
    out
}

fn dilate(mask: &[bool], dims: Dims, times: u32) -> Vec<bool> {
    const FACES: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];
    let mut cur = mask.to_vec();
    for _ in 0..times {
        let mut next = cur.clone();
        for (idx, &on) in cur.iter().enumerate() {
            if on {
                let c = dims.coord(idx);
                for d in FACES {
                    if let Some(n) = dims.offset(c, d) {
                        next[dims.index(n)] = true;
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

struct Mock {
    behavior: MockBehavior,
    options: MockOptions,
    ball: Vec<[isize; 3]>,
    session: Option<Session>,
}

impl Mock {
    fn new(behavior: MockBehavior, options: MockOptions) -> Self {
        let ball = match behavior {
            MockBehavior::OracleBall { radius } | MockBehavior::NoisyOracle { radius, .. } => ball_offsets(radius),
            _ => Vec::new(),
        };
        Mock {
            behavior,
            options,
            ball,
            session: None,
        }
    }

    fn load_reference(&self, image: &Path, dims: Dims) -> std::result::Result<Option<Vec<bool>>, String> {
        if !self.behavior.needs_reference() {
            return Ok(None);
        }
        let dir = self.options.cheat_labels.as_ref().ok_or("mock needs --cheat-labels")?;
        let name = image.file_name().ok_or("image path has no file name")?;
        let m = read_label_mask(dir.join(name)).map_err(|e| e.to_string())?;
        if m.dims() != dims {
            return Err(format!("reference shape {:?} differs from image {:?}", m.shape(), dims.0));
        }
        Ok(Some(m.voxels().iter().map(|&v| v != 0).collect()))
    }

    fn start(&mut self, session_id: String, image_paths: Vec<PathBuf>) {
        let (dims, spacing, affine, reference) = match image_paths.first().map(read_header) {
            Some(Ok(h)) => {
                let r = self.load_reference(&image_paths[0], h.dims);
                (h.dims, h.spacing(), h.affine, r)
            }
            Some(Err(e)) => (Dims::new(0, 0, 0), [1.0; 3], [[0.0; 4]; 3], Err(e.to_string())),
            None => (Dims::new(0, 0, 0), [1.0; 3], [[0.0; 4]; 3], Err("no image paths".into())),
        };
        self.session = Some(Session {
            id: session_id,
            dims,
            spacing,
            affine,
            reference,
            state: vec![false; dims.len()],
        });
    }

    fn apply_ball(&self, state: &mut [bool], reference: &[bool], dims: Dims, prompt: &Prompt) {
        let fg = !prompt.class.is_background();
        for &c in &prompt.coords {
            for &d in &self.ball {
                if let Some(n) = dims.offset(c, d) {
                    let idx = dims.index(n);
                    if fg && reference[idx] {
                        state[idx] = true;
                    } else if !fg && !reference[idx] {
                        state[idx] = false;
                    }
                }
            }
        }
    }

    fn segment(&mut self, session_id: &str, iteration: u32, prompts: &[Prompt]) -> Message {
        let started = Instant::now();
        if self.session.as_ref().is_none_or(|s| s.id != session_id) {
            return Message::error("unknown_session", format!("no open session `{session_id}`"));
        }
        let mut session = self.session.take().unwrap();
        let reply = self.predict(&mut session, iteration, prompts);
        self.session = Some(session);
        let prediction = match reply {
            Ok(p) => p,
            Err(message) => return Message::error("session_failed", message),
        };
        let session = self.session.as_ref().unwrap();
        let (dims, voxels) = match self.options.output_shape {
            Some(d) => (d, vec![0; d.len()]),
            None => (session.dims, prediction.iter().map(|&b| b as u32).collect()),
        };
        let path = self.options.workdir.join(format!("{}_{iteration}.nii", sanitize(session_id)));
        let written = LabelMask::with_affine(dims, session.spacing, session.affine, voxels)
            .and_then(|m| crate::volume::write_label_mask(&m, &path));
        if let Err(e) = written {
            return Message::error("write_failed", e.to_string());
        }
        std::thread::sleep(self.options.delay);
        Message::Segmented {
            session_id: session_id.to_string(),
            iteration,
            label_path: path,
            inference_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }

    fn predict(&self, s: &mut Session, iteration: u32, prompts: &[Prompt]) -> std::result::Result<Vec<bool>, String> {
        let reference: &[bool] = match &s.reference {
            Ok(Some(r)) => r,
            Ok(None) => &[],
            Err(e) => return Err(e.clone()),
        };
        if let Some(p) = prompts.iter().find(|p| !p.within(s.dims)) {
            return Err(format!("prompt {:?} outside image shape {:?}", p.coords, s.dims.0));
        }
        if iteration == 0 || self.options.fingerprint.editing == EditingMode::Atomic {
            s.state.iter_mut().for_each(|v| *v = false);
        }
        Ok(match self.behavior {
            MockBehavior::ConstantEmpty => vec![false; s.dims.len()],
            MockBehavior::DilatedTruth { k } => dilate(reference, s.dims, k),
            MockBehavior::PerfectAfter { j } => {
                if iteration < j {
                    vec![false; s.dims.len()]
                } else {
                    reference.to_vec()
                }
            }
            MockBehavior::OracleBall { .. } => {
                let mut state = std::mem::take(&mut s.state);
                prompts.iter().for_each(|p| self.apply_ball(&mut state, reference, s.dims, p));
                s.state = state;
                s.state.clone()
            }
            MockBehavior::NoisyOracle { flip_prob, .. } => {
                let mut state = std::mem::take(&mut s.state);
                prompts.iter().for_each(|p| self.apply_ball(&mut state, reference, s.dims, p));
                s.state = state;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0x6d6f636b, &s.id, iteration));
                s.state.iter().map(|&v| v ^ rng.random_bool(flip_prob)).collect()
            }
        })
    }

    fn handle(&mut self, msg: Message) -> Option<Message> {
        match msg {
            Message::Hello { .. } => Some(Message::HelloAck {
                version: self.options.protocol_version,
                fingerprint: Box::new(self.options.fingerprint.clone()),
            }),
            Message::StartSession {
                session_id,
                image_paths,
                ..
            } => {
                self.start(session_id, image_paths);
                None
            }
            Message::Segment {
                session_id,
                iteration,
                prompts,
                ..
            } => Some(self.segment(&session_id, iteration, &prompts)),
            Message::EndSession { session_id } => {
                if self.session.as_ref().is_some_and(|s| s.id == session_id) {
                    self.session = None;
                }
                None
            }
            Message::Shutdown => None,
            other => Some(Message::error("unexpected_message", format!("{other:?}"))),
        }
    }

    /// Serve one connection; `Ok(true)` after a shutdown request.
    fn connection(&mut self, stream: TcpStream) -> std::io::Result<bool> {
        let mut writer = stream.try_clone()?;
        let mut reader = BufReader::new(stream);
        while let Some(line) = read_line(&mut reader)? {
            let msg = match decode(&line) {
                Ok(m) => m,
                Err(e) => {
                    write_message(&mut writer, &Message::error("bad_message", e.to_string()))?;
                    continue;
                }
            };
            if msg == Message::Shutdown {
                return Ok(true);
            }
            if let Some(reply) = self.handle(msg) {
                write_message(&mut writer, &reply)?;
            }
        }
        self.session = None;
        Ok(false)
    }
}

/// Serve connections one at a time until a `shutdown` message arrives.
pub fn serve(behavior: MockBehavior, options: MockOptions, listener: TcpListener) -> Result<()> {
    behavior.validate()?;
    std::fs::create_dir_all(&options.workdir).map_err(|e| Error::io(&options.workdir, e))?;
    let mut mock = Mock::new(behavior, options);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        match mock.connection(stream) {
            Ok(true) => return Ok(()),
            Ok(false) => {}
            Err(e) => log::warn!("connection dropped: {e}"),
        }
    }
    Ok(())
}

/// A mock serving on a background thread.
pub struct MockHandle {
    addr: SocketAddr,
    thread: Option<JoinHandle<Result<()>>>,
}

impl MockHandle {
    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    /// Send `shutdown` and wait for the server thread.
    pub fn shutdown(mut self) -> Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> Result<()> {
        let Some(thread) = self.thread.take() else {
            return Ok(());
        };
        if let Ok(mut s) = TcpStream::connect(self.addr) {
            let _ = write_message(&mut s, &Message::Shutdown);
        }
        thread.join().map_err(|_| Error::Protocol("mock thread panicked".into()))?
    }
}

impl Drop for MockHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Start a mock on an ephemeral localhost port.
pub fn spawn(behavior: MockBehavior, options: MockOptions) -> Result<MockHandle> {
    behavior.validate()?;
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| Error::io("127.0.0.1:0", e))?;
    let addr = listener.local_addr().map_err(|e| Error::io("127.0.0.1:0", e))?;
    let thread = std::thread::spawn(move || serve(behavior, options, listener));
    Ok(MockHandle {
        addr,
        thread: Some(thread),
    })
}
