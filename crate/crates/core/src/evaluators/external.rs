//! Evaluator backed by a child process speaking the JSON Lines protocol.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::{debug, warn};
use wait_timeout::ChildExt;

use super::protocol::{Request, Response, PROTOCOL_VERSION};
use super::{check_scores, EvalError, Evaluator};
use crate::space::{BitConfig, SearchSpace, SpaceFile};

#[derive(Debug, Clone)]
pub struct ExternalOptions {
    /// Deadline for a whole batch, and for the handshake.
    pub timeout: Duration,
    /// Batches are split into requests of at most this many configs, all
    /// sent before any reply is awaited.
    pub configs_per_request: usize,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(600),
            configs_per_request: 16,
        }
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    reader: Option<JoinHandle<()>>,
}

impl Process {
    fn send(&mut self, request: &Request) -> std::io::Result<()> {
        let mut line = serde_json::to_string(request).expect("requests always serialize");
        line.push('\n');
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.flush()
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
        if let Some(reader) = self.reader.take() {
            let _ = reader.join();
        }
    }

    fn exit_description(&mut self) -> String {
        match self.child.wait_timeout(Duration::from_millis(500)) {
            Ok(Some(status)) => describe(status),
            _ => "process stopped responding".into(),
        }
    }
}

fn describe(status: ExitStatus) -> String {
    match status.code() {
        Some(code) => format!("exit status {code}"),
        None => "terminated by signal".into(),
    }
}

/// How a batch attempt failed: a dead process earns one restart, anything
/// else is reported as is.
enum Failure {
    Died(String),
    Fatal(EvalError),
}

pub struct ExternalEvaluator {
    command: Vec<String>,
    space: SpaceFile,
    layers: usize,
    options: ExternalOptions,
    process: Option<Process>,
    next_id: u64,
    restarts: usize,
}

impl ExternalEvaluator {
    /// Spawns `command` and performs the handshake.
    pub fn spawn(
        command: Vec<String>,
        space: &SearchSpace,
        options: ExternalOptions,
    ) -> Result<Self, EvalError> {
        if command.is_empty() {
            return Err(EvalError::Invalid("empty evaluator command".into()));
        }
        if options.configs_per_request == 0 {
            return Err(EvalError::Invalid("configs_per_request must be positive".into()));
        }
        let mut evaluator = Self {
            command,
            space: space.to_file(),
            layers: space.layer_count(),
            options,
            process: None,
            next_id: 0,
            restarts: 0,
        };
        evaluator.start()?;
        Ok(evaluator)
    }

    /// Number of times the process was restarted after dying.
    pub fn restarts(&self) -> usize {
        self.restarts
    }

    fn start(&mut self) -> Result<(), EvalError> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| EvalError::Spawn {
                command: self.command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut process = Process {
            child,
            stdin,
            lines: rx,
            reader: Some(reader),
        };

        let init = Request::Init {
            protocol: PROTOCOL_VERSION,
            space: self.space.clone(),
        };
        if let Err(e) = process.send(&init) {
            let why = process.exit_description();
            process.kill();
            return Err(EvalError::Handshake(format!("could not send init ({e}); {why}")));
        }
        let reply = match process.lines.recv_timeout(self.options.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                process.kill();
                return Err(EvalError::Io(e));
            }
            Err(RecvTimeoutError::Timeout) => {
                process.kill();
                return Err(EvalError::Timeout(self.options.timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let why = process.exit_description();
                process.kill();
                return Err(EvalError::Handshake(format!("evaluator closed stdout ({why})")));
            }
        };
        match serde_json::from_str::<Response>(&reply) {
            Ok(Response::Ready { layers }) if layers == self.layers => {
                debug!("external evaluator ready with {layers} layers");
                self.process = Some(process);
                Ok(())
            }
            Ok(Response::Ready { layers }) => {
                process.kill();
                Err(EvalError::Handshake(format!(
                    "evaluator reports {layers} layers, space has {}",
                    self.layers
                )))
            }
            Ok(Response::Error { message, .. }) => {
                process.kill();
                Err(EvalError::Handshake(message))
            }
            Ok(other) => {
                process.kill();
                Err(EvalError::Handshake(format!("expected ready, got {other:?}")))
            }
            Err(e) => {
                process.kill();
                Err(EvalError::Malformed(format!("{e}: {reply}")))
            }
        }
    }

    fn stop(&mut self) {
        if let Some(process) = self.process.take() {
            process.kill();
        }
    }

    fn attempt(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, Failure> {
        if self.process.is_none() {
            self.start().map_err(Failure::Fatal)?;
        }
        let timeout = self.options.timeout;
        let chunk = self.options.configs_per_request;
        let process = self.process.as_mut().expect("started above");

        // id -> (offset, len)
        let mut pending: HashMap<u64, (usize, usize)> = HashMap::new();
        for (k, part) in configs.chunks(chunk).enumerate() {
            let id = self.next_id;
            self.next_id += 1;
            pending.insert(id, (k * chunk, part.len()));
            let request = Request::Evaluate {
                id,
                configs: part.iter().map(|c| c.bits().to_vec()).collect(),
            };
            if let Err(e) = process.send(&request) {
                let why = process.exit_description();
                return Err(Failure::Died(format!("write failed ({e}); {why}")));
            }
        }

        let mut scores = vec![f64::NAN; configs.len()];
        let deadline = Instant::now() + timeout;
        while !pending.is_empty() {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match process.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(Failure::Died(format!("read failed ({e})"))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Failure::Fatal(EvalError::Timeout(timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Failure::Died(process.exit_description()))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let response: Response = serde_json::from_str(&line).map_err(|e| {
                Failure::Fatal(EvalError::Malformed(format!("{e}: {line}")))
            })?;
            match response {
                Response::Result { id, scores: got } => {
                    let (offset, len) = pending.remove(&id).ok_or_else(|| {
                        Failure::Fatal(EvalError::Protocol(format!(
                            "response for unknown or repeated id {id}"
                        )))
                    })?;
                    if got.len() != len {
                        return Err(Failure::Fatal(EvalError::Malformed(format!(
                            "request {id} had {len} configs but {} scores came back",
                            got.len()
                        ))));
                    }
                    scores[offset..offset + len].copy_from_slice(&got);
                }
                Response::Error { id, message } => {
                    return Err(Failure::Fatal(EvalError::Remote { id, message }))
                }
                Response::Ready { .. } => {
                    return Err(Failure::Fatal(EvalError::Protocol(
                        "unexpected ready message".into(),
                    )))
                }
            }
        }
        check_scores(configs.len(), &scores).map_err(Failure::Fatal)?;
        Ok(scores)
    }

    /// Sends shutdown and waits for a clean exit.
    pub fn shutdown(mut self) -> Result<(), EvalError> {
        let Some(mut process) = self.process.take() else {
            return Ok(());
        };
        let sent = process.send(&Request::Shutdown);
        let status = process.child.wait_timeout(Duration::from_secs(5))?;
        match (sent, status) {
            (Ok(()), Some(status)) if status.success() => {
                process.kill();
                Ok(())
            }
            (_, Some(status)) => {
                process.kill();
                Err(EvalError::Exited(describe(status)))
            }
            (_, None) => {
                process.kill();
                Err(EvalError::Exited("did not exit after shutdown".into()))
            }
        }
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate_batch(&mut self, configs: &[BitConfig]) -> Result<Vec<f64>, EvalError> {
        if configs.is_empty() {
            return Ok(Vec::new());
        }
        match self.attempt(configs) {
            Ok(scores) => Ok(scores),
            Err(Failure::Fatal(e)) => {
                // Stale replies would poison the next batch.
                self.stop();
                Err(e)
            }
            Err(Failure::Died(why)) => {
                warn!("external evaluator died ({why}); restarting and resending batch");
                self.stop();
                self.restarts += 1;
                match self.attempt(configs) {
                    Ok(scores) => Ok(scores),
                    Err(Failure::Died(why)) => {
                        self.stop();
                        Err(EvalError::Exited(why))
                    }
                    Err(Failure::Fatal(e)) => {
                        self.stop();
                        Err(e)
                    }
                }
            }
        }
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if let Some(mut process) = self.process.take() {
            let _ = process.send(&Request::Shutdown);
            let _ = process.child.wait_timeout(Duration::from_secs(2));
            process.kill();
        }
    }
}
