use std::io::{BufReader, ErrorKind};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::time::Duration;

use super::{decode, read_line, write_message, Message, SegmentationRequest, SegmentationResponse, PROTOCOL_VERSION};
use crate::error::{Error, Result};
use crate::fingerprint::AlgorithmFingerprint;
use crate::volume::{read_header, read_label_mask, Dims, LabelMask};

struct OpenSession {
    id: String,
    native: Dims,
    image_paths: Vec<PathBuf>,
}

/// Connection to one segmentation application.
///
/// Requests alternate strictly with responses. A session is started
/// implicitly by the first request carrying a new `session_id`; switching to
/// another id ends the previous session.
pub struct ClientSession {
    endpoint: String,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    fingerprint: AlgorithmFingerprint,
    open: Option<OpenSession>,
    poisoned: bool,
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

impl ClientSession {
    /// Connect and exchange the version handshake.
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self> {
        let connect_err = |source| Error::Connect {
            endpoint: endpoint.to_string(),
            source,
        };
        let addrs: Vec<_> = endpoint.to_socket_addrs().map_err(connect_err)?.collect();
        let mut last = std::io::Error::new(ErrorKind::AddrNotAvailable, "no address resolved");
        let mut stream = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last = e,
            }
        }
        let stream = stream.ok_or_else(|| connect_err(last))?;
        stream.set_nodelay(true).map_err(connect_err)?;
        stream.set_read_timeout(Some(timeout)).map_err(connect_err)?;
        let mut writer = stream.try_clone().map_err(connect_err)?;
        let mut reader = BufReader::new(stream);

        write_message(&mut writer, &Message::Hello {
            version: PROTOCOL_VERSION,
        })
        .map_err(connect_err)?;
        let line = read_line(&mut reader)
            .map_err(connect_err)?
            .ok_or_else(|| connect_err(ErrorKind::UnexpectedEof.into()))?;
        let fingerprint = match decode(&line)? {
            Message::HelloAck { version, fingerprint } if version == PROTOCOL_VERSION => *fingerprint,
            Message::HelloAck { version, .. } => {
                return Err(Error::ProtocolVersion {
                    client: PROTOCOL_VERSION,
                    application: version,
                })
            }
            Message::Error { code, message } => return Err(Error::Application { code, message }),
            other => return Err(Error::Protocol(format!("expected hello_ack, got {other:?}"))),
        };
        log::debug!("connected to {endpoint} ({})", fingerprint.id);
        Ok(ClientSession {
            endpoint: endpoint.to_string(),
            reader,
            writer,
            fingerprint,
            open: None,
            poisoned: false,
        })
    }

    pub fn fingerprint(&self) -> &AlgorithmFingerprint {
        &self.fingerprint
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn send(&mut self, msg: &Message) -> Result<()> {
        write_message(&mut self.writer, msg).map_err(|e| Error::Protocol(format!("send to {}: {e}", self.endpoint)))
    }

    fn begin(&mut self, req: &SegmentationRequest) -> Result<Dims> {
        if let Some(open) = &self.open {
            if open.id == req.session_id {
                if open.image_paths != req.image_paths {
                    return Err(Error::InvalidRequest(format!(
                        "session {} changed its image paths",
                        req.session_id
                    )));
                }
                return Ok(open.native);
            }
            self.end_session()?;
        }
        let header = read_header(&req.image_paths[0])?;
        for extra in &req.image_paths[1..] {
            let h = read_header(extra)?;
            if h.dims != header.dims {
                return Err(Error::ShapeMismatch {
                    left: header.dims.0,
                    right: h.dims.0,
                });
            }
        }
        self.send(&Message::StartSession {
            session_id: req.session_id.clone(),
            task_text: req.task_text.clone(),
            image_paths: req.image_paths.clone(),
        })?;
        self.open = Some(OpenSession {
            id: req.session_id.clone(),
            native: header.dims,
            image_paths: req.image_paths.clone(),
        });
        Ok(header.dims)
    }

    /// Send one segmentation request and load the returned mask, which must
    /// match the native image shape.
    pub fn request_segmentation(
        &mut self,
        req: &SegmentationRequest,
        timeout: Duration,
    ) -> Result<(SegmentationResponse, LabelMask)> {
        if self.poisoned {
            return Err(Error::Protocol(format!(
                "connection to {} abandoned after a timeout",
                self.endpoint
            )));
        }
        req.validate()?;
        let native = self.begin(req)?;
        if let Some(p) = req.prompts.iter().chain(&req.prompt_memory).find(|p| !p.within(native)) {
            return Err(Error::InvalidRequest(format!(
                "prompt {:?} outside image shape {:?}",
                p.coords, native.0
            )));
        }
        self.send(&Message::Segment {
            session_id: req.session_id.clone(),
            iteration: req.iteration,
            prompts: req.prompts.clone(),
            prompt_memory: req.prompt_memory.clone(),
        })?;

        self.reader
            .get_ref()
            .set_read_timeout(Some(timeout))
            .map_err(|e| Error::Protocol(e.to_string()))?;
        let line = match read_line(&mut self.reader) {
            Ok(Some(line)) => line,
            Ok(None) => return Err(Error::Protocol(format!("{} closed the connection", self.endpoint))),
            Err(e) if is_timeout(&e) => {
                // A late reply would desynchronise the stream.
                self.poisoned = true;
                return Err(Error::InferenceTimeout(timeout.as_secs_f64()));
            }
            Err(e) => return Err(Error::Protocol(e.to_string())),
        };
        match decode(&line)? {
            Message::Segmented {
                session_id,
                iteration,
                label_path,
                inference_ms,
            } => {
                if session_id != req.session_id || iteration != req.iteration {
                    return Err(Error::Protocol(format!(
                        "reply for {session_id}#{iteration} to request {}#{}",
                        req.session_id, req.iteration
                    )));
                }
                let mask = read_label_mask(&label_path)?;
                if mask.dims() != native {
                    return Err(Error::NativeSpaceViolation {
                        native: native.0,
                        returned: mask.shape(),
                    });
                }
                let response = SegmentationResponse {
                    session_id,
                    iteration,
                    label_path,
                    inference_ms: inference_ms.max(0.0),
                };
                Ok((response, mask))
            }
            Message::Error { code, message } => Err(Error::Application { code, message }),
            other => Err(Error::Protocol(format!("expected segmented, got {other:?}"))),
        }
    }

    /// Send an arbitrary line and read one reply, bypassing session
    /// bookkeeping.
    pub(crate) fn exchange_raw(&mut self, line: &str, timeout: Duration) -> Result<Message> {
        use std::io::Write;
        let io = |e: std::io::Error| Error::Protocol(e.to_string());
        self.writer.write_all(line.as_bytes()).map_err(io)?;
        self.writer.write_all(b"\n").map_err(io)?;
        self.writer.flush().map_err(io)?;
        self.reader.get_ref().set_read_timeout(Some(timeout)).map_err(io)?;
        match read_line(&mut self.reader) {
            Ok(Some(reply)) => decode(&reply),
            Ok(None) => Err(Error::Protocol(format!("{} closed the connection", self.endpoint))),
            Err(e) if is_timeout(&e) => {
                self.poisoned = true;
                Err(Error::InferenceTimeout(timeout.as_secs_f64()))
            }
            Err(e) => Err(io(e)),
        }
    }

    /// End the open session, if any.
    pub fn end_session(&mut self) -> Result<()> {
        if let Some(open) = self.open.take() {
            if !self.poisoned {
                self.send(&Message::EndSession { session_id: open.id })?;
            }
        }
        Ok(())
    }

    /// Ask the application to stop serving.
    pub fn shutdown(mut self) -> Result<()> {
        self.end_session()?;
        self.send(&Message::Shutdown)
    }
}
