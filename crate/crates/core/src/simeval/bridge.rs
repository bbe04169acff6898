//! Line-JSON bridge so an out-of-process model can stand in for the cloud.
//!
//! Each request is one line `{"user":u,"history":[..],"k":n}`; each reply is
//! one line, either a slate `{"user":u,"items":[..],"scores":[..]}` or
//! `{"error":"..."}`. A malformed request gets an error reply and the
//! connection stays open.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{CandidateSlate, SlateMessage, SlateProvider};
use crate::types::{ItemId, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlateRequest {
    pub user: UserId,
    pub history: Vec<ItemId>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReply {
    pub error: String,
}

/// Reply line for one request line (`line_no` is 1-based).
pub fn handle_line(provider: &dyn SlateProvider, line: &str, line_no: usize) -> String {
    let reply = serde_json::from_str::<SlateRequest>(line)
        .map_err(|e| Error::Protocol {
            line: line_no,
            reason: e.to_string(),
        })
        .and_then(|req| {
            provider
                .provide(req.user, &req.history, req.k)
                .map(|slate| slate.to_message(req.user))
        });
    match reply {
        Ok(msg) => msg.to_line(),
        Err(e) => serde_json::to_string(&ErrorReply {
            error: e.to_string(),
        })
        .expect("error replies serialize"),
    }
}

/// Serves one connection until the peer closes it. Returns the number of
/// request lines handled.
pub fn serve_stream<R: BufRead, W: Write>(provider: &dyn SlateProvider, reader: R, mut writer: W) -> Result<usize> {
    let mut handled = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = handle_line(provider, &line, i + 1);
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        handled += 1;
    }
    Ok(handled)
}

/// Accepts connections on `listener` and serves each on its own thread.
/// Stops after `max_connections` connections when given.
pub fn bridge_serve(
    provider: &dyn SlateProvider,
    listener: &TcpListener,
    max_connections: Option<usize>,
) -> Result<()> {
    std::thread::scope(|scope| {
        for (n, conn) in listener.incoming().enumerate() {
            let stream = conn?;
            // One small reply per request; don't let Nagle hold it back.
            stream.set_nodelay(true)?;
            scope.spawn(move || {
                let peer = stream.peer_addr().ok();
                let result = stream
                    .try_clone()
                    .map_err(Error::from)
                    .and_then(|w| serve_stream(provider, BufReader::new(stream), w));
                if let Err(e) = result {
                    log::warn!("bridge connection {peer:?} ended: {e}");
                }
            });
            if max_connections.is_some_and(|m| n + 1 >= m) {
                break;
            }
        }
        Ok(())
    })
}

/// Remote slate provider over the bridge protocol. Requests are serialized
/// over a single connection.
pub struct BridgeClient {
    conn: Mutex<Conn>,
}

struct Conn {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    replies: usize,
}

impl BridgeClient {
    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self> {
        let writer = TcpStream::connect(addr)?;
        writer.set_read_timeout(Some(timeout))?;
        writer.set_nodelay(true)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(Self {
            conn: Mutex::new(Conn {
                reader,
                writer,
                replies: 0,
            }),
        })
    }

    pub fn request(&self, user: UserId, history: &[ItemId], k: usize) -> Result<CandidateSlate> {
        let req = SlateRequest {
            user,
            history: history.to_vec(),
            k,
        };
        let mut line = serde_json::to_string(&req)?;
        line.push('\n');
        let mut conn = self.conn.lock().expect("bridge connection lock");
        conn.writer.write_all(line.as_bytes())?;
        conn.writer.flush()?;

        let mut reply = String::new();
        match conn.reader.read_line(&mut reply) {
            Ok(0) => return Err(Error::Remote("bridge closed the connection".into())),
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                return Err(Error::BridgeTimeout)
            }
            Err(e) => return Err(e.into()),
        }
        conn.replies += 1;
        let line_no = conn.replies;
        drop(conn);
        parse_reply(&reply, user, line_no)
    }
}

fn parse_reply(reply: &str, user: UserId, line_no: usize) -> Result<CandidateSlate> {
    let value: serde_json::Value = serde_json::from_str(reply).map_err(|e| Error::Protocol {
        line: line_no,
        reason: e.to_string(),
    })?;
    if let Some(msg) = value.get("error") {
        return Err(Error::Remote(
            msg.as_str().map(str::to_owned).unwrap_or_else(|| msg.to_string()),
        ));
    }
    let msg: SlateMessage = serde_json::from_value(value).map_err(|e| Error::Protocol {
        line: line_no,
        reason: e.to_string(),
    })?;
    if msg.user != user {
        return Err(Error::Protocol {
            line: line_no,
            reason: format!("reply for {} to a request for {user}", msg.user),
        });
    }
    msg.into_slate()
}

impl SlateProvider for BridgeClient {
    fn provide(&self, user: UserId, history: &[ItemId], k: usize) -> Result<CandidateSlate> {
        self.request(user, history, k)
    }
}
