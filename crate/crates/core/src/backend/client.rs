//! Client side of the stdio protocol: spawning, request/reply correlation,
//! timeouts and shutdown.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::protocol::{
    BackendKind, HelloParams, HelloResult, OutgoingRequest, Reply, METHOD_HELLO, METHOD_SHUTDOWN, PROTOCOL_VERSION,
};
use super::BackendError;

#[derive(Debug, Clone)]
pub struct SpawnOptions {
    pub handshake_timeout: Duration,
    pub request_timeout: Duration,
    pub shutdown_grace: Duration,
}

impl Default for SpawnOptions {
    fn default() -> Self {
        SpawnOptions {
            handshake_timeout: Duration::from_secs(30),
            request_timeout: Duration::from_secs(120),
            shutdown_grace: Duration::from_secs(5),
        }
    }
}

type ReplySender = Sender<Result<Reply, BackendError>>;

struct Shared {
    stdin: Mutex<Option<ChildStdin>>,
    pending: Mutex<HashMap<u64, ReplySender>>,
}

impl Shared {
    fn fail_all(&self, make: impl Fn() -> BackendError) {
        for (_, tx) in self.pending.lock().expect("pending lock").drain() {
            let _ = tx.send(Err(make()));
        }
    }

    fn write_line(&self, line: &str) -> Result<(), BackendError> {
        let mut guard = self.stdin.lock().expect("stdin lock");
        let stdin = guard.as_mut().ok_or(BackendError::Closed)?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| BackendError::Io(e.to_string()))
    }
}

/// How a backend process ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShutdownOutcome {
    Exited(Option<i32>),
    Killed,
    AlreadyClosed,
}

/// A running backend process.
pub struct BackendHandle {
    kind: BackendKind,
    command: String,
    capabilities: serde_json::Map<String, Value>,
    protocol_version: u64,
    options: SpawnOptions,
    max_inflight: usize,
    shared: Arc<Shared>,
    child: Mutex<Option<Child>>,
    next_id: AtomicU64,
    inflight: Mutex<usize>,
    slot_free: Condvar,
    closed: AtomicBool,
}

impl std::fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendHandle")
            .field("kind", &self.kind)
            .field("command", &self.command)
            .field("capabilities", &self.capabilities)
            .finish()
    }
}

fn reader_loop(shared: Arc<Shared>, stdout: std::process::ChildStdout) {
    let reader = BufReader::new(stdout);
    for line in reader.lines() {
        let line = match line {
            Ok(l) => l,
            Err(_) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Reply>(&line) {
            Ok(reply) => {
                let tx = shared.pending.lock().expect("pending lock").remove(&reply.id);
                match tx {
                    Some(tx) => {
                        let _ = tx.send(Ok(reply));
                    }
                    None => {
                        let got = reply.id;
                        shared.fail_all(|| BackendError::IdMismatch { got });
                    }
                }
            }
            Err(e) => {
                let msg = format!("{e}: {}", truncate(&line, 200));
                shared.fail_all(|| BackendError::Malformed(msg.clone()));
            }
        }
    }
    // EOF: nobody will answer the remaining requests.
    shared.stdin.lock().expect("stdin lock").take();
    shared.fail_all(|| BackendError::Eof);
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl BackendHandle {
    /// Starts `command_line` (split shell-style) and performs the handshake.
    pub fn spawn(command_line: &str, kind: BackendKind) -> Result<Self, BackendError> {
        Self::spawn_with(command_line, kind, SpawnOptions::default())
    }

    pub fn spawn_with(command_line: &str, kind: BackendKind, options: SpawnOptions) -> Result<Self, BackendError> {
        let argv = shlex::split(command_line).filter(|a| !a.is_empty()).ok_or_else(|| BackendError::Spawn {
            command: command_line.to_string(),
            reason: "cannot parse command line".into(),
        })?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError::Spawn { command: command_line.to_string(), reason: e.to_string() })?;

        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        let shared = Arc::new(Shared { stdin: Mutex::new(Some(stdin)), pending: Mutex::new(HashMap::new()) });

        let reader_shared = Arc::clone(&shared);
        thread::Builder::new()
            .name(format!("{kind}-backend-reader"))
            .spawn(move || reader_loop(reader_shared, stdout))
            .map_err(|e| BackendError::Io(e.to_string()))?;
        thread::Builder::new()
            .name(format!("{kind}-backend-stderr"))
            .spawn(move || {
                for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                    log::info!(target: "backend", "[{kind}] {line}");
                }
            })
            .map_err(|e| BackendError::Io(e.to_string()))?;

        let mut handle = BackendHandle {
            kind,
            command: command_line.to_string(),
            capabilities: serde_json::Map::new(),
            protocol_version: 0,
            options,
            max_inflight: 1,
            shared,
            child: Mutex::new(Some(child)),
            next_id: AtomicU64::new(1),
            inflight: Mutex::new(0),
            slot_free: Condvar::new(),
            closed: AtomicBool::new(false),
        };

        match handle.handshake() {
            Ok(hello) => {
                handle.protocol_version = hello.protocol;
                handle.max_inflight = hello
                    .capabilities
                    .get("max_inflight")
                    .and_then(Value::as_u64)
                    .map(|n| n.max(1) as usize)
                    .unwrap_or(1);
                handle.capabilities = hello.capabilities;
                Ok(handle)
            }
            Err(e) => {
                handle.kill();
                Err(e)
            }
        }
    }

    fn handshake(&self) -> Result<HelloResult, BackendError> {
        let params = HelloParams { protocol: PROTOCOL_VERSION, kind: self.kind };
        let reply = self.round_trip(0, METHOD_HELLO, &params, self.options.handshake_timeout).map_err(|e| match e {
            BackendError::Timeout(d) => BackendError::Handshake(format!("no reply within {d:?}")),
            BackendError::Eof => BackendError::Handshake("backend exited before replying".into()),
            other => BackendError::Handshake(other.to_string()),
        })?;
        let hello: HelloResult = decode_result(METHOD_HELLO, reply)?;
        if hello.protocol != PROTOCOL_VERSION as u64 {
            return Err(BackendError::Version { expected: PROTOCOL_VERSION, found: hello.protocol });
        }
        Ok(hello)
    }

    fn round_trip<P: Serialize>(
        &self,
        id: u64,
        method: &str,
        params: &P,
        timeout: Duration,
    ) -> Result<Reply, BackendError> {
        let line = serde_json::to_string(&OutgoingRequest { id, method, params })
            .map_err(|e| BackendError::Io(format!("cannot encode request: {e}")))?;
        let (tx, rx) = mpsc::channel();
        self.shared.pending.lock().expect("pending lock").insert(id, tx);
        if let Err(e) = self.shared.write_line(&line) {
            self.shared.pending.lock().expect("pending lock").remove(&id);
            return Err(e);
        }
        match rx.recv_timeout(timeout) {
            Ok(result) => result,
            Err(RecvTimeoutError::Timeout) => {
                self.shared.pending.lock().expect("pending lock").remove(&id);
                Err(BackendError::Timeout(timeout))
            }
            Err(RecvTimeoutError::Disconnected) => Err(BackendError::Eof),
        }
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn capabilities(&self) -> &serde_json::Map<String, Value> {
        &self.capabilities
    }

    pub fn protocol_version(&self) -> u64 {
        self.protocol_version
    }

    pub fn max_inflight(&self) -> usize {
        self.max_inflight
    }

    /// Sends one request and waits for its reply. Safe to call from several
    /// threads; at most `max_inflight` requests are outstanding at once.
    pub fn call<P: Serialize, R: DeserializeOwned>(&self, method: &str, params: &P) -> Result<R, BackendError> {
        let reply = self.call_raw(method, params)?;
        decode_result(method, reply)
    }

    pub fn call_raw<P: Serialize>(&self, method: &str, params: &P) -> Result<Reply, BackendError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(BackendError::Closed);
        }
        {
            let mut n = self.inflight.lock().expect("inflight lock");
            while *n >= self.max_inflight {
                n = self.slot_free.wait(n).expect("inflight lock");
            }
            *n += 1;
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let result = self.round_trip(id, method, params, self.options.request_timeout);
        *self.inflight.lock().expect("inflight lock") -= 1;
        self.slot_free.notify_one();
        result
    }

    /// Asks the backend to exit, waiting up to the grace period before
    /// killing it. Calling it again is a no-op.
    pub fn shutdown(&self) -> ShutdownOutcome {
        if self.closed.swap(true, Ordering::SeqCst) {
            return ShutdownOutcome::AlreadyClosed;
        }
        let _ = self.shared.write_line(r#"{"method":"shutdown"}"#);
        debug_assert_eq!(METHOD_SHUTDOWN, "shutdown");
        self.shared.stdin.lock().expect("stdin lock").take();
        let Some(mut child) = self.child.lock().expect("child lock").take() else {
            return ShutdownOutcome::AlreadyClosed;
        };
        let deadline = Instant::now() + self.options.shutdown_grace;
        loop {
            match child.try_wait() {
                Ok(Some(status)) => return ShutdownOutcome::Exited(status.code()),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(20)),
                _ => break,
            }
        }
        log::warn!("backend `{}` did not exit within {:?}; killing it", self.command, self.options.shutdown_grace);
        let _ = child.kill();
        let _ = child.wait();
        ShutdownOutcome::Killed
    }

    fn kill(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.shared.stdin.lock().expect("stdin lock").take();
        if let Some(mut child) = self.child.lock().expect("child lock").take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Drop for BackendHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn decode_result<R: DeserializeOwned>(method: &str, reply: Reply) -> Result<R, BackendError> {
    if let Some(err) = reply.error {
        return Err(BackendError::Remote { code: err.code, message: err.message });
    }
    let value = reply.result.ok_or_else(|| BackendError::Schema {
        method: method.to_string(),
        reason: "reply has neither result nor error".into(),
    })?;
    serde_json::from_value(value)
        .map_err(|e| BackendError::Schema { method: method.to_string(), reason: e.to_string() })
}
