//! RESP2 wire framing: requests are arrays of bulk strings, replies are
//! simple strings, errors, integers, bulk strings, or nil.
//!
//! Encoding is bit-exact: `SET k v` becomes
//! `*3\r\n$3\r\nSET\r\n$<len>\r\n<k>\r\n$<len>\r\n<v>\r\n`.

use std::io::{BufRead, Write};

use super::RespError;

/// A request the client knows how to issue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Get(Vec<u8>),
    Set(Vec<u8>, Vec<u8>),
    Info(Option<String>),
    Auth(String),
    Ping,
}

impl Command {
    pub fn to_args(&self) -> Vec<Vec<u8>> {
        match self {
            Command::Get(key) => vec![b"GET".to_vec(), key.clone()],
            Command::Set(key, value) => vec![b"SET".to_vec(), key.clone(), value.clone()],
            Command::Info(None) => vec![b"INFO".to_vec()],
            Command::Info(Some(section)) => vec![b"INFO".to_vec(), section.clone().into_bytes()],
            Command::Auth(password) => vec![b"AUTH".to_vec(), password.clone().into_bytes()],
            Command::Ping => vec![b"PING".to_vec()],
        }
    }

    /// Inverse of [`Command::to_args`]; the command word is case-insensitive.
    pub fn from_args(args: &[Vec<u8>]) -> Result<Command, String> {
        let name = args
            .first()
            .ok_or_else(|| "empty command array".to_string())?;
        let upper = String::from_utf8_lossy(name).to_ascii_uppercase();
        match (upper.as_str(), args.len()) {
            ("GET", 2) => Ok(Command::Get(args[1].clone())),
            ("SET", 3) => Ok(Command::Set(args[1].clone(), args[2].clone())),
            ("INFO", 1) => Ok(Command::Info(None)),
            ("INFO", 2) => Ok(Command::Info(Some(
                String::from_utf8_lossy(&args[1]).into_owned(),
            ))),
            ("AUTH", 2) => Ok(Command::Auth(String::from_utf8_lossy(&args[1]).into_owned())),
            ("PING", 1) => Ok(Command::Ping),
            (other, n) => Err(format!("unsupported command {other} with {n} arg(s)")),
        }
    }
}

/// Reply payload variants of RESP2 as used by GET/SET/INFO/AUTH/PING.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplyKind {
    Simple(String),
    Bulk(Vec<u8>),
    Error(String),
    Integer(i64),
    Nil,
}

pub fn write_command(buf: &mut Vec<u8>, command: &Command) {
    let args = command.to_args();
    buf.extend_from_slice(format!("*{}\r\n", args.len()).as_bytes());
    for arg in &args {
        buf.extend_from_slice(format!("${}\r\n", arg.len()).as_bytes());
        buf.extend_from_slice(arg);
        buf.extend_from_slice(b"\r\n");
    }
}

pub fn write_reply(w: &mut impl Write, reply: &ReplyKind) -> std::io::Result<()> {
    match reply {
        ReplyKind::Simple(s) => write!(w, "+{s}\r\n"),
        ReplyKind::Error(s) => write!(w, "-{s}\r\n"),
        ReplyKind::Integer(i) => write!(w, ":{i}\r\n"),
        ReplyKind::Nil => write!(w, "$-1\r\n"),
        ReplyKind::Bulk(data) => {
            write!(w, "${}\r\n", data.len())?;
            w.write_all(data)?;
            w.write_all(b"\r\n")
        }
    }
}

fn read_line(r: &mut impl BufRead) -> Result<String, RespError> {
    let mut line = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        match r.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) => return Err(RespError::Io(e)),
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 512 * 1024 {
            return Err(RespError::ProtocolDesync("unterminated line".to_string()));
        }
    }
    if line.last() != Some(&b'\r') {
        return Err(RespError::ProtocolDesync("line missing CR".to_string()));
    }
    line.pop();
    String::from_utf8(line)
        .map_err(|_| RespError::ProtocolDesync("non-UTF8 header line".to_string()))
}

fn read_bulk_body(r: &mut impl BufRead, len: usize) -> Result<Vec<u8>, RespError> {
    let mut data = vec![0u8; len + 2];
    r.read_exact(&mut data).map_err(RespError::Io)?;
    if &data[len..] != b"\r\n" {
        return Err(RespError::ProtocolDesync(
            "bulk payload missing CRLF terminator".to_string(),
        ));
    }
    data.truncate(len);
    Ok(data)
}

/// Reads one reply frame.
pub fn read_reply(r: &mut impl BufRead) -> Result<ReplyKind, RespError> {
    let line = read_line(r)?;
    let (kind, rest) = match line.split_at_checked(1) {
        Some(split) => split,
        None => return Err(RespError::ProtocolDesync("empty frame header".to_string())),
    };
    match kind {
        "+" => Ok(ReplyKind::Simple(rest.to_string())),
        "-" => Ok(ReplyKind::Error(rest.to_string())),
        ":" => rest
            .parse::<i64>()
            .map(ReplyKind::Integer)
            .map_err(|_| RespError::ProtocolDesync(format!("bad integer frame: {rest}"))),
        "$" => {
            let len: i64 = rest
                .parse()
                .map_err(|_| RespError::ProtocolDesync(format!("bad bulk length: {rest}")))?;
            if len < 0 {
                return Ok(ReplyKind::Nil);
            }
            Ok(ReplyKind::Bulk(read_bulk_body(r, len as usize)?))
        }
        other => Err(RespError::ProtocolDesync(format!(
            "unexpected frame type {other:?}"
        ))),
    }
}

/// Reads one request frame (array of bulk strings) as raw arguments.
/// Returns `None` on a clean end-of-stream before any byte of a frame.
pub fn read_request(r: &mut impl BufRead) -> Result<Option<Vec<Vec<u8>>>, RespError> {
    let mut first = [0u8; 1];
    match r.read(&mut first) {
        Ok(0) => return Ok(None),
        Ok(_) => {}
        Err(e) => return Err(RespError::Io(e)),
    }
    if first[0] != b'*' {
        return Err(RespError::ProtocolDesync(format!(
            "request must start with '*', got {:?}",
            first[0] as char
        )));
    }
    let count_line = read_line(r)?;
    let count: usize = count_line
        .parse()
        .map_err(|_| RespError::ProtocolDesync(format!("bad array length: {count_line}")))?;
    let mut args = Vec::with_capacity(count);
    for _ in 0..count {
        let header = read_line(r)?;
        let Some(len_str) = header.strip_prefix('$') else {
            return Err(RespError::ProtocolDesync(format!(
                "array element must be a bulk string, got: {header}"
            )));
        };
        let len: usize = len_str
            .parse()
            .map_err(|_| RespError::ProtocolDesync(format!("bad bulk length: {len_str}")))?;
        args.push(read_bulk_body(r, len)?);
    }
    Ok(Some(args))
}
