//! Client for an external encoder process speaking line-delimited JSON on stdio.
//!
//! ```text
//! -> {"op":"hello"}                                <- {"op":"hello","name":"<model>","dim":<int>}
//! -> {"op":"encode","id":<int>,"sentences":[...]}  <- {"op":"result","id":<int>,"embeddings":[[...],...]}
//!                                                  <- {"op":"error","id":<int>,"message":"..."}
//! ```
//!
//! Request ids start at 1 and increase by one per request. Requests from
//! several threads are serialized on one pipe.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EncoderKind, SentenceEncoder};
use crate::error::{Error, Result};
use crate::linalg::Vector;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello,
    Encode {
        id: u64,
        sentences: Vec<String>,
    },
    /// Per-token sequences; served only by sidecars that support it.
    EncodeSeq {
        id: u64,
        sentences: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Response {
    Hello {
        name: String,
        dim: usize,
    },
    Result {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        embeddings: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sequences: Option<Vec<Vec<Vec<f64>>>>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

#[derive(Debug, Clone)]
pub struct SidecarOptions {
    /// Applies to the handshake and to every response.
    pub timeout: Duration,
    /// Maximum sentences per encode request.
    pub batch_size: usize,
}

impl Default for SidecarOptions {
    fn default() -> Self {
        SidecarOptions {
            timeout: DEFAULT_TIMEOUT,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

struct Pipe {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl Pipe {
    fn send(&mut self, request: &Request) -> Result<()> {
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::transport("sidecar stdin is closed", None))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::transport(format!("write to sidecar failed: {e}"), None))
    }

    fn recv(&mut self, timeout: Duration) -> Result<(Response, String)> {
        let line = match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                return Err(Error::transport(
                    format!("read from sidecar failed: {e}"),
                    None,
                ))
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::transport(
                    format!("no response from sidecar within {timeout:?}"),
                    None,
                ))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::transport("sidecar closed its output", None))
            }
        };
        let response = serde_json::from_str(&line).map_err(|e| {
            Error::transport(
                format!("malformed sidecar response: {e}"),
                Some(line.clone()),
            )
        })?;
        Ok((response, line))
    }

    fn call(
        &mut self,
        make: impl FnOnce(u64) -> Request,
        timeout: Duration,
    ) -> Result<(Response, String)> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(&make(id))?;
        let (response, raw) = self.recv(timeout)?;
        match &response {
            Response::Result { id: got, .. } if *got == id => Ok((response, raw)),
            Response::Error { message, .. } => Err(Error::transport(
                format!("sidecar error: {message}"),
                Some(raw),
            )),
            _ => Err(Error::transport(
                format!("unexpected response to request {id}"),
                Some(raw),
            )),
        }
    }
}

impl Drop for Pipe {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A sentence encoder served by a child process.
pub struct SidecarEncoder {
    name: String,
    dim: usize,
    options: SidecarOptions,
    pipe: Mutex<Pipe>,
}

impl SidecarEncoder {
    pub fn connect<S: AsRef<str>>(argv: &[S]) -> Result<Self> {
        Self::connect_with(argv, SidecarOptions::default())
    }

    /// Spawns `argv` and performs the hello handshake.
    pub fn connect_with<S: AsRef<str>>(argv: &[S], options: SidecarOptions) -> Result<Self> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::transport("empty sidecar command", None))?;
        if options.batch_size == 0 {
            return Err(Error::invalid("sidecar batch size must be positive"));
        }
        let mut child = Command::new(program.as_ref())
            .args(args.iter().map(AsRef::as_ref))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| {
                Error::transport(
                    format!("cannot spawn sidecar {:?}: {e}", program.as_ref()),
                    None,
                )
            })?;
        let stdin = child.stdin.take();
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::transport("sidecar stdout unavailable", None))?;

        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });

        let mut pipe = Pipe {
            child,
            stdin,
            lines: rx,
            next_id: 1,
        };
        pipe.send(&Request::Hello)?;
        let (name, dim) = match pipe.recv(options.timeout)? {
            (Response::Hello { name, dim }, _) if dim > 0 => (name, dim),
            (_, raw) => return Err(Error::transport("malformed handshake", Some(raw))),
        };
        log::info!("connected to sidecar {name} (dim {dim})");
        Ok(SidecarEncoder {
            name,
            dim,
            options,
            pipe: Mutex::new(pipe),
        })
    }

    fn to_vectors(&self, rows: Vec<Vec<f64>>, raw: &str) -> Result<Vec<Vector>> {
        rows.into_iter()
            .map(|row| {
                if row.len() != self.dim {
                    return Err(Error::transport(
                        format!(
                            "embedding has {} values, handshake said {}",
                            row.len(),
                            self.dim
                        ),
                        Some(raw.to_string()),
                    ));
                }
                Vector::new(row).map_err(|e| Error::transport(e.to_string(), Some(raw.to_string())))
            })
            .collect()
    }

    /// Per-token vectors for each sentence.
    pub fn encode_sequences(&self, sentences: &[String]) -> Result<Vec<Vec<Vector>>> {
        let mut pipe = self.pipe.lock().expect("sidecar lock poisoned");
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(self.options.batch_size) {
            let (response, raw) = pipe.call(
                |id| Request::EncodeSeq {
                    id,
                    sentences: chunk.to_vec(),
                },
                self.options.timeout,
            )?;
            let Response::Result {
                sequences: Some(seqs),
                ..
            } = response
            else {
                return Err(Error::transport("result carries no sequences", Some(raw)));
            };
            if seqs.len() != chunk.len() {
                return Err(Error::transport(
                    format!("{} sequences for {} sentences", seqs.len(), chunk.len()),
                    Some(raw),
                ));
            }
            for seq in seqs {
                out.push(self.to_vectors(seq, &raw)?);
            }
        }
        Ok(out)
    }
}

impl SentenceEncoder for SidecarEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::External
    }

    fn encode(&self, sentences: &[String]) -> Result<Vec<Vector>> {
        let mut pipe = self.pipe.lock().expect("sidecar lock poisoned");
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(self.options.batch_size) {
            let (response, raw) = pipe.call(
                |id| Request::Encode {
                    id,
                    sentences: chunk.to_vec(),
                },
                self.options.timeout,
            )?;
            let Response::Result {
                embeddings: Some(rows),
                ..
            } = response
            else {
                return Err(Error::transport("result carries no embeddings", Some(raw)));
            };
            if rows.len() != chunk.len() {
                return Err(Error::transport(
                    format!("{} embeddings for {} sentences", rows.len(), chunk.len()),
                    Some(raw),
                ));
            }
            out.extend(self.to_vectors(rows, &raw)?);
        }
        Ok(out)
    }
}

impl std::fmt::Debug for SidecarEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarEncoder")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format() {
        assert_eq!(
            serde_json::to_string(&Request::Hello).unwrap(),
            r#"{"op":"hello"}"#
        );
        assert_eq!(
            serde_json::to_string(&Request::Encode {
                id: 3,
                sentences: vec!["a".into()]
            })
            .unwrap(),
            r#"{"op":"encode","id":3,"sentences":["a"]}"#
        );
        let r: Response =
            serde_json::from_str(r#"{"op":"result","id":3,"embeddings":[[0.5,1]]}"#).unwrap();
        assert_eq!(
            r,
            Response::Result {
                id: 3,
                embeddings: Some(vec![vec![0.5, 1.0]]),
                sequences: None
            }
        );
        let e: Response =
            serde_json::from_str(r#"{"op":"error","id":4,"message":"empty batch"}"#).unwrap();
        assert!(matches!(e, Response::Error { id: Some(4), .. }));
        let h: Response =
            serde_json::from_str(r#"{"op":"hello","name":"bert","dim":768}"#).unwrap();
        assert_eq!(
            h,
            Response::Hello {
                name: "bert".into(),
                dim: 768
            }
        );
    }

    #[test]
    fn unspawnable_command_is_a_transport_error() {
        let err = SidecarEncoder::connect(&["/nonexistent/sidecar-binary"]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
