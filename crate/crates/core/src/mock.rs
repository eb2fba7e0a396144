//! In-process RESP2 server backed by a hash map, for tests and benches.
//!
//! The mock binds an ephemeral loopback port and speaks just enough of the
//! protocol for the client: GET, SET, INFO, AUTH, PING. Failure modes used
//! by the test suite can be injected: password auth, read-only mode,
//! corrupted reply frames, and a cap on concurrent connections.

use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

use crate::resp::{read_request, write_reply, Command, ReplyKind};

/// Failure-injection and behavior switches.
#[derive(Debug, Clone, Default)]
pub struct MockOptions {
    /// Require AUTH with this password before serving data commands.
    pub password: Option<String>,
    /// Reject every SET with a READONLY error.
    pub read_only: bool,
    /// After this many well-formed replies on a connection, emit one garbage
    /// frame (a guaranteed protocol desync for the client).
    pub corrupt_after: Option<u64>,
    /// Refuse (immediately close) connections beyond this many at once.
    pub max_connections: Option<usize>,
    /// Answer every INFO with an error, as a server without introspection.
    pub info_errors: bool,
}

struct Shared {
    store: Mutex<HashMap<Vec<u8>, Vec<u8>>>,
    options: MockOptions,
    started: Instant,
    active: AtomicUsize,
    shutdown: AtomicBool,
}

/// Handle to a running mock server; shuts down on drop.
pub struct MockServer {
    shared: Arc<Shared>,
    addr: SocketAddr,
    accept_thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn spawn() -> std::io::Result<MockServer> {
        Self::spawn_with(MockOptions::default())
    }

    pub fn spawn_with(options: MockOptions) -> std::io::Result<MockServer> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            store: Mutex::new(HashMap::new()),
            options,
            started: Instant::now(),
            active: AtomicUsize::new(0),
            shutdown: AtomicBool::new(false),
        });
        let accept_shared = Arc::clone(&shared);
        let accept_thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shared.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                if let Some(limit) = accept_shared.options.max_connections {
                    if accept_shared.active.load(Ordering::SeqCst) >= limit {
                        drop(stream); // refused: close immediately
                        continue;
                    }
                }
                accept_shared.active.fetch_add(1, Ordering::SeqCst);
                let conn_shared = Arc::clone(&accept_shared);
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &conn_shared);
                    conn_shared.active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        Ok(MockServer {
            shared,
            addr,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn endpoint(&self) -> crate::resp::Endpoint {
        let mut e = crate::resp::Endpoint::new("127.0.0.1", self.port());
        e.auth = self.shared.options.password.clone();
        e
    }

    pub fn key_count(&self) -> usize {
        self.shared.store.lock().unwrap().len()
    }

    pub fn get(&self, key: &[u8]) -> Option<Vec<u8>> {
        self.shared.store.lock().unwrap().get(key).cloned()
    }

    /// Bytes of keys plus values currently stored, as reported by INFO.
    pub fn used_memory(&self) -> u64 {
        let store = self.shared.store.lock().unwrap();
        store
            .iter()
            .map(|(k, v)| (k.len() + v.len()) as u64)
            .sum()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

fn info_body(shared: &Shared) -> Vec<u8> {
    let used = {
        let store = shared.store.lock().unwrap();
        store
            .iter()
            .map(|(k, v)| (k.len() + v.len()) as u64)
            .sum::<u64>()
    };
    let elapsed = shared.started.elapsed().as_secs_f64();
    // CPU counters are synthesized but monotone, like a real server's.
    format!(
        "# Server\r\nmock_version:1\r\nuptime_in_seconds:{}\r\n\r\n# Memory\r\nused_memory:{}\r\nused_memory_human:unused\r\n\r\n# CPU\r\nused_cpu_sys:{:.6}\r\nused_cpu_user:{:.6}\r\n",
        elapsed as u64,
        used,
        elapsed * 0.3,
        elapsed * 0.5,
    )
    .into_bytes()
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut authenticated = shared.options.password.is_none();
    let mut replies_sent = 0u64;

    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            return Ok(());
        }
        let args = match read_request(&mut reader) {
            Ok(Some(args)) => args,
            Ok(None) => return Ok(()), // client closed
            Err(_) => return Ok(()),   // unparseable request; drop connection
        };
        if let Some(after) = shared.options.corrupt_after {
            if replies_sent >= after {
                writer.write_all(b"!!corrupt-frame!!\r\n")?;
                writer.flush()?;
                return Ok(());
            }
        }
        let reply = match Command::from_args(&args) {
            Err(msg) => ReplyKind::Error(format!("ERR {msg}")),
            Ok(Command::Auth(password)) => match &shared.options.password {
                Some(expected) if *expected == password => {
                    authenticated = true;
                    ReplyKind::Simple("OK".to_string())
                }
                Some(_) => ReplyKind::Error(
                    "WRONGPASS invalid username-password pair or user is disabled.".to_string(),
                ),
                None => ReplyKind::Error(
                    "ERR Client sent AUTH, but no password is set.".to_string(),
                ),
            },
            Ok(_) if !authenticated => {
                ReplyKind::Error("NOAUTH Authentication required.".to_string())
            }
            Ok(Command::Ping) => ReplyKind::Simple("PONG".to_string()),
            Ok(Command::Get(key)) => match shared.store.lock().unwrap().get(&key) {
                Some(value) => ReplyKind::Bulk(value.clone()),
                None => ReplyKind::Nil,
            },
            Ok(Command::Set(key, value)) => {
                if shared.options.read_only {
                    ReplyKind::Error(
                        "READONLY You can't write against a read only replica.".to_string(),
                    )
                } else {
                    shared.store.lock().unwrap().insert(key, value);
                    ReplyKind::Simple("OK".to_string())
                }
            }
            Ok(Command::Info(_section)) => {
                if shared.options.info_errors {
                    ReplyKind::Error("ERR unsupported command 'INFO'".to_string())
                } else {
                    ReplyKind::Bulk(info_body(shared))
                }
            }
        };
        write_reply(&mut writer, &reply)?;
        writer.flush()?;
        replies_sent += 1;
    }
}
