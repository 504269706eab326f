//! The JSON wire protocol for external scoring and embedding backends.
//!
//! Requests and responses are single-line JSON. Two transports are
//! provided:
//!
//! * **subprocess** — messages over the child's stdin/stdout, one request
//!   line answered by one response line;
//! * **HTTP** — each request POSTed to a fixed URL, the response body is
//!   the reply.
//!
//! Message shapes:
//!
//! ```text
//! {"op":"embed","truncate_tokens":512,"items":[{"id":"d1","text":"…"}]}
//!   → {"dim":16,"vectors":[{"id":"d1","values":[…]}]}
//! {"op":"score","query":"…","doc":"…"}
//!   → {"prob":0.87}
//! {"op":"rank","query":"…","passages":["…","…"]}
//!   → {"permutation":[2,1]}   or   {"raw":"[2] > [1]"}
//! ```
//!
//! Anything that violates the protocol — truncated streams, non-JSON
//! replies, HTTP failures, timeouts — surfaces as [`Error::Protocol`] with
//! the endpoint named.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One item of an embed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedItem {
    pub id: String,
    pub text: String,
}

/// A request to a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum WireRequest {
    Embed {
        truncate_tokens: usize,
        items: Vec<EmbedItem>,
    },
    Score {
        query: String,
        doc: String,
    },
    Rank {
        query: String,
        passages: Vec<String>,
    },
}

/// Reply to an embed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<WireVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireVector {
    pub id: String,
    pub values: Vec<f64>,
}

/// Reply to a score request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub prob: f64,
}

/// Reply to a rank request: either a pre-parsed 1-based index list or the
/// model's raw output (parsed by the caller).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

/// A request/response byte channel. Implementations are shared across
/// worker threads, so calls take `&self`.
pub trait Transport: Send + Sync {
    /// Send one serialized request, receive one serialized response.
    fn call(&self, request: &str) -> Result<String>;

    /// Human-readable endpoint name for error messages.
    fn label(&self) -> String;
}

/// A provider child process speaking the protocol over stdin/stdout.
/// Requests are serialised through a mutex: one in flight at a time per
/// process (use [`TransportPool`] for parallel calls).
pub struct SubprocessTransport {
    command: String,
    io: Mutex<ChildIo>,
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessTransport {
    /// Spawn `command` (whitespace-split; no shell interpretation) with
    /// piped stdin/stdout. The child's stderr passes through for
    /// diagnostics.
    pub fn spawn(command: &str) -> Result<Self> {
        let parts: Vec<&str> = command.split_whitespace().collect();
        let Some((program, args)) = parts.split_first() else {
            return Err(Error::Protocol("empty provider command".to_string()));
        };
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Protocol(format!("failed to spawn {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout piped"));
        Ok(SubprocessTransport {
            command: command.to_string(),
            io: Mutex::new(ChildIo {
                child,
                stdin,
                stdout,
            }),
        })
    }
}

impl Transport for SubprocessTransport {
    fn call(&self, request: &str) -> Result<String> {
        let mut io = self.io.lock().expect("subprocess transport poisoned");
        io.stdin
            .write_all(request.as_bytes())
            .and_then(|_| io.stdin.write_all(b"\n"))
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::Protocol(format!("{}: write failed: {e}", self.command)))?;
        let mut line = String::new();
        let read = io
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Protocol(format!("{}: read failed: {e}", self.command)))?;
        if read == 0 {
            return Err(Error::Protocol(format!(
                "{}: provider closed the stream",
                self.command
            )));
        }
        Ok(line)
    }

    fn label(&self) -> String {
        format!("exec:{}", self.command)
    }
}

impl Drop for SubprocessTransport {
    fn drop(&mut self) {
        if let Ok(mut io) = self.io.lock() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// POST-per-request transport. Timeout applies to the whole exchange.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: &str, timeout: Duration) -> Self {
        HttpTransport {
            url: url.to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Transport for HttpTransport {
    fn call(&self, request: &str) -> Result<String> {
        let response = self
            .agent
            .post(&self.url)
            .set("content-type", "application/json")
            .send_string(request)
            .map_err(|e| Error::Protocol(format!("{}: {e}", self.url)))?;
        response
            .into_string()
            .map_err(|e| Error::Protocol(format!("{}: reading body: {e}", self.url)))
    }

    fn label(&self) -> String {
        format!("http:{}", self.url)
    }
}

/// Round-robin over several transports (e.g. a pool of provider
/// subprocesses) so concurrent queries are not serialised on one stream.
pub struct TransportPool {
    members: Vec<Box<dyn Transport>>,
    next: AtomicUsize,
}

impl TransportPool {
    pub fn new(members: Vec<Box<dyn Transport>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Protocol("transport pool is empty".to_string()));
        }
        Ok(TransportPool {
            members,
            next: AtomicUsize::new(0),
        })
    }
}

impl Transport for TransportPool {
    fn call(&self, request: &str) -> Result<String> {
        let i = self.next.fetch_add(1, Ordering::Relaxed) % self.members.len();
        self.members[i].call(request)
    }

    fn label(&self) -> String {
        self.members[0].label()
    }
}

/// Typed client over any transport.
pub struct WireClient {
    transport: Box<dyn Transport>,
}

impl WireClient {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        WireClient { transport }
    }

    pub fn label(&self) -> String {
        self.transport.label()
    }

    fn exchange<T: for<'de> Deserialize<'de>>(&self, request: &WireRequest) -> Result<T> {
        let body = serde_json::to_string(request)
            .map_err(|e| Error::Protocol(format!("{}: encoding request: {e}", self.label())))?;
        let reply = self.transport.call(&body)?;
        serde_json::from_str(reply.trim()).map_err(|e| {
            Error::Protocol(format!(
                "{}: bad response {:?}: {e}",
                self.label(),
                reply.trim().chars().take(200).collect::<String>()
            ))
        })
    }

    pub fn embed(&self, items: Vec<EmbedItem>, truncate_tokens: usize) -> Result<EmbedResponse> {
        self.exchange(&WireRequest::Embed {
            truncate_tokens,
            items,
        })
    }

    pub fn score(&self, query: &str, doc: &str) -> Result<f64> {
        let response: ScoreResponse = self.exchange(&WireRequest::Score {
            query: query.to_string(),
            doc: doc.to_string(),
        })?;
        Ok(response.prob)
    }

    pub fn rank(&self, query: &str, passages: Vec<String>) -> Result<RankResponse> {
        self.exchange(&WireRequest::Rank {
            query: query.to_string(),
            passages,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requests_serialise_to_the_documented_shapes() {
        let embed = WireRequest::Embed {
            truncate_tokens: 512,
            items: vec![EmbedItem {
                id: "d1".into(),
                text: "hello".into(),
            }],
        };
        assert_eq!(
            serde_json::to_string(&embed).unwrap(),
            r#"{"op":"embed","truncate_tokens":512,"items":[{"id":"d1","text":"hello"}]}"#
        );

        let score = WireRequest::Score {
            query: "q".into(),
            doc: "d".into(),
        };
        assert_eq!(
            serde_json::to_string(&score).unwrap(),
            r#"{"op":"score","query":"q","doc":"d"}"#
        );

        let rank = WireRequest::Rank {
            query: "q".into(),
            passages: vec!["a".into(), "b".into()],
        };
        assert_eq!(
            serde_json::to_string(&rank).unwrap(),
            r#"{"op":"rank","query":"q","passages":["a","b"]}"#
        );
    }

    #[test]
    fn responses_parse_from_documented_shapes() {
        let embed: EmbedResponse =
            serde_json::from_str(r#"{"dim":2,"vectors":[{"id":"d1","values":[0.5,-1.0]}]}"#)
                .unwrap();
        assert_eq!(embed.dim, 2);
        assert_eq!(embed.vectors[0].values, vec![0.5, -1.0]);

        let score: ScoreResponse = serde_json::from_str(r#"{"prob":0.87}"#).unwrap();
        assert!((score.prob - 0.87).abs() < 1e-12);

        let rank: RankResponse = serde_json::from_str(r#"{"permutation":[4,2,1,3,5]}"#).unwrap();
        assert_eq!(rank.permutation, Some(vec![4, 2, 1, 3, 5]));
        assert_eq!(rank.raw, None);

        let raw: RankResponse = serde_json::from_str(r#"{"raw":"[4] > [2]"}"#).unwrap();
        assert_eq!(raw.raw.as_deref(), Some("[4] > [2]"));
    }

    /// An in-memory echo transport for client tests.
    struct Canned(&'static str);
    impl Transport for Canned {
        fn call(&self, _request: &str) -> Result<String> {
            Ok(format!("{}\n", self.0))
        }
        fn label(&self) -> String {
            "canned".to_string()
        }
    }

    #[test]
    fn client_round_trips_typed_messages() {
        let client = WireClient::new(Box::new(Canned(r#"{"prob":0.25}"#)));
        assert_eq!(client.score("q", "d").unwrap(), 0.25);

        let client = WireClient::new(Box::new(Canned(r#"{"raw":"[2] > [1]"}"#)));
        let rank = client.rank("q", vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(rank.raw.as_deref(), Some("[2] > [1]"));
    }

    #[test]
    fn garbage_response_is_a_protocol_error() {
        let client = WireClient::new(Box::new(Canned("not json")));
        match client.score("q", "d") {
            Err(Error::Protocol(msg)) => assert!(msg.contains("bad response")),
            other => panic!("expected protocol error, got {other:?}"),
        }
    }

    #[test]
    fn http_transport_round_trips_against_a_local_server() {
        use std::io::{Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let mut data = Vec::new();
            // Read until the headers + body have arrived (single small request).
            loop {
                let n = stream.read(&mut buf).unwrap();
                data.extend_from_slice(&buf[..n]);
                if let Some(header_end) = find_subslice(&data, b"\r\n\r\n") {
                    let headers = String::from_utf8_lossy(&data[..header_end]).to_lowercase();
                    let content_length: usize = headers
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:"))
                        .map(|v| v.trim().parse().unwrap())
                        .unwrap_or(0);
                    if data.len() >= header_end + 4 + content_length {
                        let body = &data[header_end + 4..];
                        let request: WireRequest =
                            serde_json::from_slice(body).expect("request parses");
                        assert!(matches!(request, WireRequest::Score { .. }));
                        break;
                    }
                }
            }
            let reply = r#"{"prob":0.75}"#;
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                reply.len(),
                reply
            );
            stream.write_all(response.as_bytes()).unwrap();
        });

        let transport = HttpTransport::new(&format!("http://{addr}/"), Duration::from_secs(5));
        let client = WireClient::new(Box::new(transport));
        assert_eq!(client.score("q", "d").unwrap(), 0.75);
        server.join().unwrap();
    }

    fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
        haystack
            .windows(needle.len())
            .position(|w| w == needle)
    }

    #[test]
    fn pool_round_robins_across_members() {
        struct Tagged(u8);
        impl Transport for Tagged {
            fn call(&self, _request: &str) -> Result<String> {
                Ok(format!("{{\"prob\":0.{}}}", self.0))
            }
            fn label(&self) -> String {
                "tagged".to_string()
            }
        }
        let pool = TransportPool::new(vec![Box::new(Tagged(1)), Box::new(Tagged(2))]).unwrap();
        let a = pool.call("x").unwrap();
        let b = pool.call("x").unwrap();
        let c = pool.call("x").unwrap();
        assert_eq!(a, "{\"prob\":0.1}");
        assert_eq!(b, "{\"prob\":0.2}");
        assert_eq!(c, "{\"prob\":0.1}");
    }
}
