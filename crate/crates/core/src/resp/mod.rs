//! Minimal RESP2 client over TCP: GET, SET, and INFO with configurable
//! pipelining.
//!
//! A [`Connection`] is single-owner — exactly one worker reads and writes it
//! at a time. Response time is measured from the first byte of a batch
//! written to the last byte of each reply parsed, on the monotonic clock.

mod frame;

use std::collections::HashMap;
use std::io::{BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use frame::{read_reply, read_request, write_command, write_reply, Command, ReplyKind};

/// Upper bound on a single blocking read or write; matches the latency
/// recorder's coverage ceiling.
const IO_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, thiserror::Error)]
pub enum RespError {
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("connect timed out: {0}")]
    ConnectTimeout(String),
    #[error("connection refused: {0}")]
    ConnectionRefused(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("protocol desync: {0}")]
    ProtocolDesync(String),
    #[error("info unavailable: {0}")]
    InfoUnavailable(String),
    #[error("connection marked unusable after an earlier failure")]
    Unusable,
    #[error("command batch must contain at least one command")]
    EmptyBatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where and how to reach a server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
    /// Connect timeout in milliseconds.
    pub connect_timeout_ms: u64,
    pub auth: Option<String>,
}

impl Endpoint {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Self {
            host: host.into(),
            port,
            connect_timeout_ms: 5_000,
            auth: None,
        }
    }

    pub fn validate(&self) -> Result<(), RespError> {
        if self.port == 0 {
            return Err(RespError::InvalidEndpoint("port must be non-zero".into()));
        }
        if self.connect_timeout_ms == 0 {
            return Err(RespError::InvalidEndpoint(
                "connect_timeout_ms must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn address(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

/// An ordered list of commands sent as one pipelined write.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandBatch {
    entries: Vec<Command>,
}

impl CommandBatch {
    pub fn new(entries: Vec<Command>) -> Result<Self, RespError> {
        if entries.is_empty() {
            return Err(RespError::EmptyBatch);
        }
        Ok(Self { entries })
    }

    pub fn single(command: Command) -> Self {
        Self {
            entries: vec![command],
        }
    }

    pub fn entries(&self) -> &[Command] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A reply together with its measured round-trip time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub kind: ReplyKind,
    pub rtt: Duration,
}

/// An authenticated, exclusively-owned TCP connection.
#[derive(Debug)]
pub struct Connection {
    reader: BufReader<TcpStream>,
    usable: bool,
    commands_sent: u64,
    replies_received: u64,
}

impl Connection {
    /// Opens a TCP connection with TCP_NODELAY, authenticating first when the
    /// endpoint carries a password. Timeout, refusal, and failed auth are
    /// distinguishable in the error value.
    pub fn connect(endpoint: &Endpoint) -> Result<Connection, RespError> {
        endpoint.validate()?;
        let timeout = Duration::from_millis(endpoint.connect_timeout_ms);
        let addrs: Vec<_> = endpoint
            .address()
            .to_socket_addrs()
            .map_err(|e| RespError::InvalidEndpoint(format!("{}: {e}", endpoint.address())))?
            .collect();
        if addrs.is_empty() {
            return Err(RespError::InvalidEndpoint(format!(
                "{} resolves to no addresses",
                endpoint.address()
            )));
        }
        let mut last_err: Option<RespError> = None;
        let mut stream = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => {
                    last_err = Some(match e.kind() {
                        ErrorKind::TimedOut | ErrorKind::WouldBlock => {
                            RespError::ConnectTimeout(endpoint.address())
                        }
                        ErrorKind::ConnectionRefused => {
                            RespError::ConnectionRefused(endpoint.address())
                        }
                        _ => RespError::Io(e),
                    });
                }
            }
        }
        let stream = match stream {
            Some(s) => s,
            None => return Err(last_err.expect("at least one address attempted")),
        };
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(IO_TIMEOUT))?;
        stream.set_write_timeout(Some(IO_TIMEOUT))?;
        let mut conn = Connection {
            reader: BufReader::new(stream),
            usable: true,
            commands_sent: 0,
            replies_received: 0,
        };
        if let Some(password) = &endpoint.auth {
            let replies =
                conn.execute_batch(&CommandBatch::single(Command::Auth(password.clone())))?;
            match &replies[0].kind {
                ReplyKind::Simple(_) => {}
                ReplyKind::Error(e) => return Err(RespError::AuthFailed(e.clone())),
                other => {
                    return Err(RespError::ProtocolDesync(format!(
                        "unexpected AUTH reply: {other:?}"
                    )))
                }
            }
        }
        Ok(conn)
    }

    pub fn is_usable(&self) -> bool {
        self.usable
    }

    /// Commands written to the socket so far.
    pub fn commands_sent(&self) -> u64 {
        self.commands_sent
    }

    /// Replies fully parsed so far (error replies included).
    pub fn replies_received(&self) -> u64 {
        self.replies_received
    }

    /// Commands sent but never answered — nonzero only after a failure.
    pub fn in_flight(&self) -> u64 {
        self.commands_sent - self.replies_received
    }

    /// Writes the whole batch, then reads one reply per command, in order.
    /// Server-side errors come back as error-kind replies without aborting
    /// the batch; transport or framing failures abort and mark the
    /// connection unusable.
    pub fn execute_batch(&mut self, batch: &CommandBatch) -> Result<Vec<Reply>, RespError> {
        if !self.usable {
            return Err(RespError::Unusable);
        }
        let mut wire = Vec::with_capacity(64 * batch.len());
        for command in batch.entries() {
            write_command(&mut wire, command);
        }
        let started = Instant::now();
        if let Err(e) = self.write_all(&wire) {
            self.usable = false;
            return Err(e);
        }
        self.commands_sent += batch.len() as u64;
        let mut replies = Vec::with_capacity(batch.len());
        for _ in 0..batch.len() {
            match read_reply(&mut self.reader) {
                Ok(kind) => {
                    self.replies_received += 1;
                    let rtt = started.elapsed().max(Duration::from_nanos(1));
                    replies.push(Reply { kind, rtt });
                }
                Err(e) => {
                    self.usable = false;
                    return Err(e);
                }
            }
        }
        Ok(replies)
    }

    fn write_all(&mut self, bytes: &[u8]) -> Result<(), RespError> {
        let mut stream = self.reader.get_ref();
        stream.write_all(bytes)?;
        stream.flush()?;
        Ok(())
    }

    /// Issues INFO and parses the `field:value` lines of the reply into a
    /// map. Comment lines starting with `#` and anything without a colon
    /// are ignored.
    pub fn fetch_info(&mut self, section: &str) -> Result<HashMap<String, String>, RespError> {
        let command = if section.is_empty() {
            Command::Info(None)
        } else {
            Command::Info(Some(section.to_string()))
        };
        let replies = self.execute_batch(&CommandBatch::single(command))?;
        match &replies[0].kind {
            ReplyKind::Bulk(body) => Ok(parse_info_body(body)),
            ReplyKind::Error(e) => Err(RespError::InfoUnavailable(e.clone())),
            other => Err(RespError::ProtocolDesync(format!(
                "unexpected INFO reply: {other:?}"
            ))),
        }
    }

    pub fn ping(&mut self) -> Result<(), RespError> {
        let replies = self.execute_batch(&CommandBatch::single(Command::Ping))?;
        match &replies[0].kind {
            ReplyKind::Simple(_) => Ok(()),
            other => Err(RespError::ProtocolDesync(format!(
                "unexpected PING reply: {other:?}"
            ))),
        }
    }
}

fn parse_info_body(body: &[u8]) -> HashMap<String, String> {
    let text = String::from_utf8_lossy(body);
    let mut map = HashMap::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((field, value)) = line.split_once(':') {
            map.insert(field.to_string(), value.to_string());
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        assert!(Endpoint::new("localhost", 6379).validate().is_ok());
        assert!(Endpoint::new("localhost", 0).validate().is_err());
        let mut e = Endpoint::new("localhost", 6379);
        e.connect_timeout_ms = 0;
        assert!(e.validate().is_err());
    }

    #[test]
    fn batch_must_be_non_empty() {
        assert!(matches!(
            CommandBatch::new(vec![]),
            Err(RespError::EmptyBatch)
        ));
        assert_eq!(CommandBatch::single(Command::Ping).len(), 1);
    }

    #[test]
    fn info_body_parsing() {
        let body = b"# Memory\r\nused_memory:1048576\r\nused_memory_human:1.00M\r\n\r\n# CPU\r\nused_cpu_sys:1.5\r\nused_cpu_user:0.5\r\nnoise-without-colon\r\n";
        let map = parse_info_body(body);
        assert_eq!(map.get("used_memory").unwrap(), "1048576");
        assert_eq!(map.get("used_cpu_sys").unwrap(), "1.5");
        assert_eq!(map.len(), 4);
        assert!(!map.keys().any(|k| k.starts_with('#')));
    }

    #[test]
    fn empty_info_body_gives_empty_map() {
        assert!(parse_info_body(b"").is_empty());
        assert!(parse_info_body(b"# Server\r\n\r\n").is_empty());
    }
}
