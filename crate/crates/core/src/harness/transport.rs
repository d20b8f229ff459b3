//! Line transports to the ego agent: child process stdio, TCP, or an in-process agent.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::agent::Agent;
use super::protocol::Message;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("could not start agent: {0}")]
    Spawn(std::io::Error),
    #[error("agent did not answer within {0:?}")]
    Timeout(Duration),
    #[error("agent closed the connection")]
    Closed,
    #[error("agent io: {0}")]
    Io(#[from] std::io::Error),
}

/// A bidirectional line channel to an agent.
pub trait Endpoint {
    fn send(&mut self, line: &str) -> Result<(), TransportError>;
    fn recv(&mut self, timeout: Duration) -> Result<String, TransportError>;
    /// Release the connection after the final message.
    fn close(&mut self) {}
}

/// Reads lines on a background thread so that `recv` can time out.
struct LineReader {
    rx: Receiver<std::io::Result<String>>,
}

impl LineReader {
    fn spawn<R: std::io::Read + Send + 'static>(source: R) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(source).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self { rx }
    }

    fn recv(&self, timeout: Duration) -> Result<String, TransportError> {
        match self.rx.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(e.into()),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }
}

/// Agent running as a child process, spoken to over its stdin and stdout.
pub struct SubprocessEndpoint {
    child: Child,
    stdin: Option<ChildStdin>,
    reader: LineReader,
}

impl SubprocessEndpoint {
    /// Run `command` through the platform shell.
    pub fn spawn_shell(command: &str) -> Result<Self, TransportError> {
        let mut cmd = if cfg!(windows) {
            let mut c = Command::new("cmd");
            c.args(["/C", command]);
            c
        } else {
            let mut c = Command::new("sh");
            c.args(["-c", command]);
            c
        };
        Self::spawn(&mut cmd)
    }

    pub fn spawn(cmd: &mut Command) -> Result<Self, TransportError> {
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(TransportError::Spawn)?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        Ok(Self {
            child,
            stdin,
            reader: LineReader::spawn(stdout),
        })
    }
}

impl Endpoint for SubprocessEndpoint {
    fn send(&mut self, line: &str) -> Result<(), TransportError> {
        let stdin = self.stdin.as_mut().ok_or(TransportError::Closed)?;
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::BrokenPipe => TransportError::Closed,
                _ => e.into(),
            })
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, TransportError> {
        self.reader.recv(timeout)
    }

    fn close(&mut self) {
        self.stdin = None;
        for _ in 0..50 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for SubprocessEndpoint {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Agent listening on a TCP socket; the harness connects.
pub struct TcpEndpoint {
    stream: TcpStream,
    reader: LineReader,
}

impl TcpEndpoint {
    pub fn connect(addr: &str) -> Result<Self, TransportError> {
        let stream = TcpStream::connect(addr).map_err(TransportError::Spawn)?;
        stream.set_nodelay(true)?;
        let reader = LineReader::spawn(stream.try_clone()?);
        Ok(Self { stream, reader })
    }
}

impl Endpoint for TcpEndpoint {
    fn send(&mut self, line: &str) -> Result<(), TransportError> {
        writeln!(self.stream, "{line}")?;
        Ok(self.stream.flush()?)
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, TransportError> {
        self.reader.recv(timeout)
    }

    fn close(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

/// Drives an [`Agent`] in the same process, still passing every message through the codec.
pub struct InProcessEndpoint<A> {
    agent: A,
    pending: Option<String>,
}

impl<A: Agent> InProcessEndpoint<A> {
    pub fn new(agent: A) -> Self {
        Self {
            agent,
            pending: None,
        }
    }

    pub fn into_inner(self) -> A {
        self.agent
    }
}

impl<A: Agent> Endpoint for InProcessEndpoint<A> {
    fn send(&mut self, line: &str) -> Result<(), TransportError> {
        let msg = Message::decode(line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        if let Some(reply) = self.agent.handle(&msg) {
            self.pending = Some(reply);
        }
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, TransportError> {
        self.pending.take().ok_or(TransportError::Timeout(timeout))
    }
}
