//! Uniform transcription interface over the in-repo toy model, an external
//! command, an HTTP service, or a scripted lookup table.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{encode_wav, write_wav, AudioClip};
use crate::error::Error;
use crate::text::Transcript;
use crate::toy_asr::ToyAsrModel;

pub const DEFAULT_TIMEOUT_SECS: f64 = 30.0;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Placeholder replaced by the WAV path in command templates.
pub const WAV_PLACEHOLDER: &str = "{wav}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AsrBackendSpec {
    Toy {
        model_path: PathBuf,
    },
    Command {
        template: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
    Http {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
    Scripted {
        transcripts: BTreeMap<String, String>,
    },
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TranscribeError {
    #[error("transcription-failed: could not launch backend: {0}")]
    Launch(String),
    #[error("transcription-failed: backend timed out after {0} s")]
    Timeout(f64),
    #[error("transcription-failed: backend exited with status {status:?}: {stderr}")]
    ProcessFailed { status: Option<i32>, stderr: String },
    #[error("transcription-failed: could not reach backend: {0}")]
    Connect(String),
    #[error("transcription-failed: backend answered HTTP {0}")]
    HttpStatus(u16),
    #[error("transcription-failed: malformed backend response: {0}")]
    Malformed(String),
    #[error("transcription-failed: no scripted transcript for clip {0:?}")]
    UnknownId(String),
    #[error("transcription-failed: {0}")]
    Model(Error),
}

impl TranscribeError {
    /// Stable short name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Launch(_) => "launch",
            Self::Timeout(_) => "timeout",
            Self::ProcessFailed { .. } => "process-failed",
            Self::Connect(_) => "connect",
            Self::HttpStatus(_) => "http-status",
            Self::Malformed(_) => "malformed-response",
            Self::UnknownId(_) => "unknown-id",
            Self::Model(_) => "model",
        }
    }
}

/// Counting semaphore bounding in-flight HTTP requests.
#[derive(Debug)]
pub struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

/// A ready-to-use transcription backend `g(·)`.
#[derive(Clone, Debug)]
pub enum AsrBackend {
    Toy(Arc<ToyAsrModel>),
    Command {
        template: String,
        timeout: Duration,
    },
    Http {
        endpoint: String,
        agent: ureq::Agent,
        gate: Arc<Gate>,
    },
    Scripted(Arc<BTreeMap<String, Transcript>>),
}

impl AsrBackend {
    pub fn from_spec(spec: &AsrBackendSpec) -> Result<Self, TranscribeError> {
        Ok(match spec {
            AsrBackendSpec::Toy { model_path } => {
                Self::Toy(Arc::new(ToyAsrModel::load(model_path).map_err(TranscribeError::Model)?))
            }
            AsrBackendSpec::Command {
                template,
                timeout_secs,
            } => Self::Command {
                template: template.clone(),
                timeout: Duration::from_secs_f64(*timeout_secs),
            },
            AsrBackendSpec::Http {
                endpoint,
                timeout_secs,
                max_in_flight,
            } => Self::Http {
                endpoint: endpoint.clone(),
                agent: ureq::AgentBuilder::new()
                    .timeout(Duration::from_secs_f64(*timeout_secs))
                    .build(),
                gate: Arc::new(Gate::new(*max_in_flight)),
            },
            AsrBackendSpec::Scripted { transcripts } => Self::scripted(
                transcripts.iter().map(|(k, v)| (k.clone(), v.as_str())),
            ),
        })
    }

    pub fn toy(model: ToyAsrModel) -> Self {
        Self::Toy(Arc::new(model))
    }

    pub fn scripted<'a>(entries: impl IntoIterator<Item = (String, &'a str)>) -> Self {
        Self::Scripted(Arc::new(
            entries.into_iter().map(|(k, v)| (k, Transcript::new(v))).collect(),
        ))
    }

    /// Normalized transcript of one clip.
    pub fn transcribe(&self, clip: &AudioClip) -> Result<Transcript, TranscribeError> {
        match self {
            Self::Toy(model) => model.transcribe(clip).map_err(TranscribeError::Model),
            Self::Scripted(map) => map
                .get(&clip.id)
                .cloned()
                .ok_or_else(|| TranscribeError::UnknownId(clip.id.clone())),
            Self::Command { template, timeout } => run_command(template, *timeout, clip),
            Self::Http {
                endpoint,
                agent,
                gate,
            } => {
                let _slot = gate.acquire();
                let body = encode_wav(clip);
                match post_once(agent, endpoint, &body) {
                    Err(e) if e.is_transient() => post_once(agent, endpoint, &body).map_err(|e| e.0),
                    other => other.map_err(|e| e.0),
                }
            }
        }
    }

    /// Transcribes every clip, possibly in parallel; results keep input order.
    pub fn transcribe_batch(
        &self,
        clips: &[AudioClip],
    ) -> Vec<(String, Result<Transcript, TranscribeError>)> {
        clips
            .par_iter()
            .map(|c| (c.id.clone(), self.transcribe(c)))
            .collect()
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn run_command(template: &str, timeout: Duration, clip: &AudioClip) -> Result<Transcript, TranscribeError> {
    let file = tempfile::Builder::new()
        .prefix("tempdep-")
        .suffix(".wav")
        .tempfile()
        .map_err(|e| TranscribeError::Launch(e.to_string()))?;
    write_wav(clip, file.path()).map_err(|e| TranscribeError::Launch(e.to_string()))?;
    let quoted = shell_quote(&file.path().to_string_lossy());
    let line = if template.contains(WAV_PLACEHOLDER) {
        template.replace(WAV_PLACEHOLDER, &quoted)
    } else {
        format!("{template} {quoted}")
    };
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&line)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| TranscribeError::Launch(e.to_string()))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });
    let start = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(TranscribeError::Timeout(timeout.as_secs_f64()));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(2)),
            Err(e) => return Err(TranscribeError::Launch(e.to_string())),
        }
    };
    let out = out_reader
        .join()
        .expect("reader thread")
        .map_err(|e| TranscribeError::Malformed(e.to_string()))?;
    let err = err_reader.join().expect("reader thread");
    if !status.success() {
        return Err(TranscribeError::ProcessFailed {
            status: status.code(),
            stderr: String::from_utf8_lossy(&err).trim().to_string(),
        });
    }
    let text = String::from_utf8(out).map_err(|_| TranscribeError::Malformed("stdout is not UTF-8".into()))?;
    let lines: Vec<&str> = text.lines().collect();
    match lines.as_slice() {
        [one] => Ok(Transcript::new(one)),
        [] => Err(TranscribeError::Malformed("no output line".into())),
        _ => Err(TranscribeError::Malformed(format!("expected one line, got {}", lines.len()))),
    }
}

struct HttpFailure(TranscribeError);

impl HttpFailure {
    fn is_transient(&self) -> bool {
        match self.0 {
            TranscribeError::Connect(_) => true,
            TranscribeError::HttpStatus(code) => code >= 500,
            _ => false,
        }
    }
}

#[derive(Deserialize)]
struct HttpReply {
    text: String,
}

fn post_once(agent: &ureq::Agent, endpoint: &str, body: &[u8]) -> Result<Transcript, HttpFailure> {
    let response = agent
        .post(endpoint)
        .set("Content-Type", "audio/wav")
        .send_bytes(body)
        .map_err(|e| match e {
            ureq::Error::Status(code, _) => HttpFailure(TranscribeError::HttpStatus(code)),
            ureq::Error::Transport(t) => HttpFailure(TranscribeError::Connect(t.to_string())),
        })?;
    let text = response
        .into_string()
        .map_err(|e| HttpFailure(TranscribeError::Malformed(e.to_string())))?;
    let reply: HttpReply = serde_json::from_str(&text)
        .map_err(|e| HttpFailure(TranscribeError::Malformed(e.to_string())))?;
    Ok(Transcript::new(&reply.text))
}
