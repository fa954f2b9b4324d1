//! Adapter for scorers running in a separate process.
//!
//! Wire protocol (line-delimited JSON over the child's stdin/stdout):
//!
//! * request: `{"id": <int>, "s": <str>, "v": <str>, "o": <str>}`
//! * response: `{"id": <int>, "logit": <float>}`
//!
//! The parent writes one request per line followed by an empty line that
//! ends the batch. Responses may come back in any order; they are matched
//! by id. A batch either yields every logit or fails as a whole.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::Event;

use super::{ScoreError, Scorer};

pub const TIMEOUT_ENV: &str = "ABX_EXTERNAL_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExternalError {
    #[error("failed to start external scorer `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("protocol violation at response line {line}: {message}")]
    Protocol { line: usize, message: String },
    #[error("external scorer exited before answering the batch ({status})")]
    ChildExited { status: String },
    #[error("external scorer did not answer within {millis} ms")]
    Timeout { millis: u64 },
    #[error("i/o error talking to external scorer: {0}")]
    Io(String),
    #[error("external scorer unusable after an earlier failure")]
    Poisoned,
}

/// Batch wait bound from `ABX_EXTERNAL_TIMEOUT_MS`, defaulting to 60 s.
pub fn timeout_from_env() -> Duration {
    let ms = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_TIMEOUT_MS);
    Duration::from_millis(ms)
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    s: &'a str,
    v: &'a str,
    o: &'a str,
}

#[derive(Deserialize)]
struct Response {
    id: Option<serde_json::Value>,
    logit: Option<f64>,
    error: Option<serde_json::Value>,
}

struct Channel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    line_no: usize,
    next_id: u64,
    child: Option<Child>,
    poisoned: bool,
}

pub struct ExternalScorer {
    name: String,
    timeout: Duration,
    channel: Mutex<Channel>,
}

impl ExternalScorer {
    /// Runs `command` through `sh -c` and talks to it over pipes.
    pub fn spawn(command: &str, timeout: Duration) -> Result<ExternalScorer, ExternalError> {
        let spawn_err = |e: io::Error| ExternalError::Spawn {
            command: command.to_string(),
            message: e.to_string(),
        };
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        // Own process group, so teardown also reaches grandchildren.
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd.spawn().map_err(spawn_err)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut scorer = ExternalScorer::from_streams(format!("external:{command}"), stdin, stdout, timeout);
        scorer.channel.get_mut().expect("fresh mutex").child = Some(child);
        Ok(scorer)
    }

    /// Adapter over arbitrary streams; `writer` receives requests and
    /// `reader` yields responses.
    pub fn from_streams<W, R>(name: impl Into<String>, writer: W, reader: R, timeout: Duration) -> ExternalScorer
    where
        W: Write + Send + 'static,
        R: Read + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        ExternalScorer {
            name: name.into(),
            timeout,
            channel: Mutex::new(Channel {
                writer: Box::new(writer),
                lines: rx,
                line_no: 0,
                next_id: 0,
                child: None,
                poisoned: false,
            }),
        }
    }

    /// Scores a batch, preserving input order.
    pub fn external_logit(&self, batch: &[Event]) -> Result<Vec<f64>, ExternalError> {
        let mut ch = self.channel.lock().unwrap_or_else(|p| p.into_inner());
        if ch.poisoned {
            return Err(ExternalError::Poisoned);
        }
        let result = ch.run_batch(batch, self.timeout);
        if result.is_err() {
            ch.poisoned = true;
        }
        result
    }
}

impl Channel {
    fn run_batch(&mut self, batch: &[Event], timeout: Duration) -> Result<Vec<f64>, ExternalError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let first = self.next_id;
        self.next_id += batch.len() as u64;
        let mut buf = Vec::new();
        for (k, e) in batch.iter().enumerate() {
            let req = Request {
                id: first + k as u64,
                s: &e.subject,
                v: &e.verb,
                o: &e.object,
            };
            serde_json::to_writer(&mut buf, &req).expect("request serialises");
            buf.push(b'\n');
        }
        buf.push(b'\n');
        let io_err = |e: io::Error| ExternalError::Io(e.to_string());
        if let Err(e) = self.writer.write_all(&buf).and_then(|_| self.writer.flush()) {
            return Err(if e.kind() == io::ErrorKind::BrokenPipe {
                self.exited()
            } else {
                io_err(e)
            });
        }

        let mut out: Vec<Option<f64>> = vec![None; batch.len()];
        let mut remaining = batch.len();
        let deadline = Instant::now() + timeout;
        while remaining > 0 {
            let wait = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(wait) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(io_err(e)),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(ExternalError::Timeout {
                        millis: timeout.as_millis() as u64,
                    })
                }
                Err(RecvTimeoutError::Disconnected) => return Err(self.exited()),
            };
            self.line_no += 1;
            let line_no = self.line_no;
            if line.trim().is_empty() {
                continue;
            }
            let violation = |message: String| ExternalError::Protocol { line: line_no, message };
            let resp: Response =
                serde_json::from_str(&line).map_err(|e| violation(format!("invalid JSON ({e}): {line:?}")))?;
            if let Some(err) = resp.error {
                return Err(violation(format!("scorer reported error: {err}")));
            }
            let id = resp
                .id
                .as_ref()
                .and_then(serde_json::Value::as_u64)
                .ok_or_else(|| violation(format!("missing or non-integer id: {line:?}")))?;
            let logit = resp
                .logit
                .ok_or_else(|| violation(format!("missing logit: {line:?}")))?;
            if !logit.is_finite() {
                return Err(violation(format!("non-finite logit for id {id}")));
            }
            let slot = id
                .checked_sub(first)
                .map(|k| k as usize)
                .filter(|&k| k < batch.len())
                .ok_or_else(|| violation(format!("unexpected id {id}")))?;
            if out[slot].replace(logit).is_some() {
                return Err(violation(format!("duplicate response for id {id}")));
            }
            remaining -= 1;
        }
        Ok(out.into_iter().map(|v| v.expect("all ids answered")).collect())
    }

    fn exited(&mut self) -> ExternalError {
        let status = match self.child.as_mut().map(|c| c.wait()) {
            Some(Ok(s)) => s.to_string(),
            Some(Err(e)) => e.to_string(),
            None => "stream closed".to_string(),
        };
        ExternalError::ChildExited { status }
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        let ch = self.channel.get_mut().unwrap_or_else(|p| p.into_inner());
        if let Some(child) = ch.child.as_mut() {
            #[cfg(unix)]
            if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
                // SAFETY: signals only the process group created in `spawn`.
                unsafe {
                    libc::kill(-pgid, libc::SIGKILL);
                }
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Scorer for ExternalScorer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    // Batches are serialised per child process.
    fn is_concurrent_safe(&self) -> bool {
        false
    }

    fn logit(&self, event: &Event) -> Result<f64, ScoreError> {
        Ok(self.external_logit(std::slice::from_ref(event))?[0])
    }

    fn logits(&self, events: &[Event]) -> Result<Vec<f64>, ScoreError> {
        Ok(self.external_logit(events)?)
    }
}

/// Answers requests read from `input` with `rule`, one batch at a time.
/// Responses within a batch are written in reverse order when `reverse` is
/// set. Used as an in-process stand-in for a scorer process in tests.
pub fn serve_lines<R, W, F>(input: R, mut output: W, reverse: bool, rule: F) -> io::Result<()>
where
    R: BufRead,
    W: Write,
    F: Fn(&str, &str, &str) -> Option<f64>,
{
    let mut pending: Vec<String> = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            if reverse {
                pending.reverse();
            }
            for resp in pending.drain(..) {
                writeln!(output, "{resp}")?;
                output.flush()?;
            }
            continue;
        }
        let resp = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(v) => {
                let field = |k: &str| v.get(k).and_then(serde_json::Value::as_str).unwrap_or("");
                match (v.get("id").and_then(serde_json::Value::as_u64), rule(field("s"), field("v"), field("o"))) {
                    (Some(id), Some(logit)) => serde_json::json!({"id": id, "logit": logit}).to_string(),
                    (id, _) => serde_json::json!({"id": id, "error": "cannot score request"}).to_string(),
                }
            }
            Err(e) => serde_json::json!({"id": null, "error": e.to_string()}).to_string(),
        };
        pending.push(resp);
    }
    Ok(())
}
