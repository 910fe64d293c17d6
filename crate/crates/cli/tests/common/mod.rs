#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use iseval_core::mocksegmenter::{mock_fingerprint, MockBehavior};
use iseval_core::protocol::{write_message, Message};
use iseval_core::EditingMode;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iseval"))
}

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn iseval");
    if std::env::var_os("ISEVAL_TEST_VERBOSE").is_some() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A `serve-mock` child process; shut down over the protocol on drop.
pub struct MockProcess {
    child: Child,
    pub addr: String,
}

impl MockProcess {
    pub fn start(args: &[&str]) -> Self {
        let mut child = bin()
            .arg("serve-mock")
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn serve-mock");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        MockProcess { child, addr }
    }
}

impl Drop for MockProcess {
    fn drop(&mut self) {
        if let Ok(mut s) = TcpStream::connect(&self.addr) {
            let _ = write_message(&mut s, &Message::Shutdown);
        }
        for _ in 0..50 {
            if matches!(self.child.try_wait(), Ok(Some(_))) {
                return;
            }
            std::thread::sleep(std::time::Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub const SPHERE_TASK: &str = r#"id = "spheres"
dataset_path = "spheres"
seg_subtype = "binary"
target_labels = [1]
nsd_tolerance_mm = 1.0

[patch_config]
modality = "synthetic"

[prompt_spec]
types = ["point"]
budget = 100

[convergence_target]
target_dice = 0.9
"#;

/// Config directories with the sphere task and the fingerprints of `mocks`.
pub fn write_configs(dir: &Path, mocks: &[MockBehavior]) -> (PathBuf, PathBuf) {
    let (fps, tasks) = (dir.join("fingerprints"), dir.join("tasks"));
    std::fs::create_dir_all(&fps).unwrap();
    std::fs::create_dir_all(&tasks).unwrap();
    for m in mocks {
        let fp = mock_fingerprint(m, EditingMode::Implicit);
        std::fs::write(fps.join(format!("{}.toml", fp.id)), fp.to_toml()).unwrap();
    }
    std::fs::write(tasks.join("spheres.toml"), SPHERE_TASK).unwrap();
    (fps, tasks)
}

pub fn write_endpoints(path: &Path, pairs: &[(&str, &str)]) {
    let text: String = pairs.iter().map(|(k, v)| format!("\"{k}\" = \"{v}\"\n")).collect();
    std::fs::write(path, text).unwrap();
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
