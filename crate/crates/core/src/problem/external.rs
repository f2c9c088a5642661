//! Child-process blackbox.
//!
//! The parent writes one line per evaluation, the `d` coordinates separated by
//! single spaces. The child answers with one line of `m + 1` numbers: the
//! objective followed by the `m` constraints. The objective slot is ignored
//! when the objective is known to the parent.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::{Blackbox, BlackboxOutput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalObjective {
    /// Take the objective from the child's first output slot.
    Blackbox,
    /// Known objective `sum_i x_i`; the child's first slot is ignored.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSpec {
    /// Shell command line launching the child.
    pub command: String,
    pub dim: usize,
    pub m: usize,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub objective: ExternalObjective,
    pub timeout: Duration,
}

impl ExternalSpec {
    pub fn new(command: impl Into<String>, dim: usize, m: usize) -> Self {
        ExternalSpec {
            command: command.into(),
            dim,
            m,
            lower: None,
            upper: None,
            objective: ExternalObjective::Blackbox,
            timeout: Duration::from_secs(60),
        }
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// A running child process. Calls are serialized through a mutex.
pub struct ExternalBlackbox {
    command: String,
    m: usize,
    timeout: Duration,
    session: Mutex<Session>,
}

impl ExternalBlackbox {
    pub fn spawn(command: &str, m: usize, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Protocol {
                message: format!("failed to launch `{command}`: {e}"),
                raw: String::new(),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalBlackbox {
            command: command.to_string(),
            m,
            timeout,
            session: Mutex::new(Session {
                child,
                stdin,
                lines: rx,
            }),
        })
    }

    fn protocol_error(&self, message: String, raw: String) -> Error {
        Error::Protocol {
            message: format!("`{}`: {message}", self.command),
            raw,
        }
    }
}

/// Format a point as one request line (without the newline).
pub fn format_request(x: &[f64]) -> String {
    x.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parse a response line of exactly `m + 1` numbers.
pub fn parse_response(line: &str, m: usize) -> std::result::Result<Vec<f64>, String> {
    let values = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| format!("cannot parse `{tok}` as a number"))
        })
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    if values.len() != m + 1 {
        return Err(format!("expected {} numbers, got {}", m + 1, values.len()));
    }
    Ok(values)
}

impl Blackbox for ExternalBlackbox {
    fn call(&self, x: &[f64]) -> Result<BlackboxOutput> {
        let mut session = self
            .session
            .lock()
            .map_err(|_| self.protocol_error("session lock poisoned".into(), String::new()))?;
        let request = format_request(x);
        writeln!(session.stdin, "{request}")
            .and_then(|_| session.stdin.flush())
            .map_err(|e| self.protocol_error(format!("write failed: {e}"), String::new()))?;
        let line = match session.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                return Err(self.protocol_error(format!("read failed: {e}"), String::new()))
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(self.protocol_error(
                    format!("no reply within {:?}", self.timeout),
                    String::new(),
                ))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = session.child.try_wait().ok().flatten();
                return Err(self.protocol_error(
                    format!("child closed its output (status {status:?})"),
                    String::new(),
                ));
            }
        };
        let values =
            parse_response(&line, self.m).map_err(|msg| self.protocol_error(msg, line.clone()))?;
        Ok(BlackboxOutput {
            objective: Some(values[0]),
            constraints: values[1..].to_vec(),
        })
    }
}

impl Drop for ExternalBlackbox {
    fn drop(&mut self) {
        if let Ok(session) = self.session.get_mut() {
            let _ = session.child.kill();
            let _ = session.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_scientific() {
        assert_eq!(
            parse_response("0.5 -1e-3 2.5E2", 2).unwrap(),
            vec![0.5, -0.001, 250.0]
        );
    }

    #[test]
    fn wrong_count_is_rejected() {
        assert!(parse_response("0.0 1.0", 2).is_err());
        assert!(parse_response("0.0 1.0 2.0 3.0", 2).is_err());
        assert!(parse_response("0,5 1.0", 1).is_err());
    }

    #[test]
    fn request_round_trips_exactly() {
        let x = [0.1 + 0.2, 1.0 / 3.0, 1e-17];
        let line = format_request(&x);
        let back: Vec<f64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
        assert_eq!(back, x.to_vec());
    }
}
