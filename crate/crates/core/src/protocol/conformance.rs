use std::path::Path;
use std::time::Duration;

use super::{ClientSession, Message, Prompt, PromptClass, SegmentationRequest};
use crate::error::{Error, Result};
use crate::volume::{read_header, VoxelCoord};

/// Exercise an application with the checks every conforming implementation
/// must pass, using `image` as the session input. Returns the names of the
/// passed checks; the first failure is returned as an error.
///
/// Checks: handshake, echoed ids and native shape on iterations 0 and 1,
/// `error` replies to an unknown session and to a malformed line, and a
/// working connection afterwards.
pub fn conformance(endpoint: &str, image: &Path, timeout: Duration) -> Result<Vec<&'static str>> {
    let mut passed = Vec::new();
    let mut client = ClientSession::connect(endpoint, timeout)?;
    passed.push("handshake");

    let dims = read_header(image)?.dims;
    let [nx, ny, nz] = dims.0;
    let centre = VoxelCoord::new(nx / 2, ny / 2, nz / 2);
    let point = Prompt::point(PromptClass::FOREGROUND, centre);
    let mut req = SegmentationRequest {
        session_id: "conformance".into(),
        iteration: 0,
        image_paths: vec![image.to_path_buf()],
        prompts: vec![point.clone()],
        prompt_memory: vec![],
        task_text: "conformance check".into(),
    };
    client.request_segmentation(&req, timeout)?;
    passed.push("initial segmentation in native space");

    req.iteration = 1;
    req.prompt_memory = vec![point];
    req.prompts = vec![Prompt::point(PromptClass::BACKGROUND, VoxelCoord::new(0, 0, 0))];
    client.request_segmentation(&req, timeout)?;
    passed.push("editing segmentation in native space");

    let unknown = serde_json::to_string(&Message::Segment {
        session_id: "conformance-unknown-session".into(),
        iteration: 0,
        prompts: vec![],
        prompt_memory: vec![],
    })?;
    expect_error(client.exchange_raw(&unknown, timeout)?, "segment for unknown session")?;
    passed.push("error reply for unknown session");

    expect_error(client.exchange_raw("{not json", timeout)?, "malformed line")?;
    passed.push("error reply for malformed message");

    req.iteration = 2;
    client.request_segmentation(&req, timeout)?;
    passed.push("session survives errors");
    client.end_session()?;
    Ok(passed)
}

fn expect_error(reply: Message, what: &str) -> Result<()> {
    match reply {
        Message::Error { .. } => Ok(()),
        other => Err(Error::Protocol(format!("{what}: expected an error reply, got {other:?}"))),
    }
}
