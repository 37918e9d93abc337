//! Line-delimited JSON bridge to externally hosted models.
//!
//! Request (one line):
//! `{"id":n,"target":v,"t":f,"events":[{"id":n,"src":n,"dst":n,"ts":f,"t_v":f,"hop":n,"x":[f...],"src_feat_zeroed":b,"anchor":n,"parents":[n...]}...]}`
//! with an optional `"partner"` key after `"target"` for pair predictions.
//! Response: `{"id":n,"logit":f}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ctdg::{ComputationalSubgraph, Event, NodeId, SubgraphEvent};
use crate::models::Model;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEvent {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub ts: f64,
    pub t_v: f64,
    pub hop: usize,
    pub x: Vec<f64>,
    pub src_feat_zeroed: bool,
    pub anchor: NodeId,
    pub parents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub target: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<NodeId>,
    pub t: f64,
    pub events: Vec<WireEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub logit: f64,
}

pub fn bridge_encode(sg: &ComputationalSubgraph, request_id: u64) -> String {
    let req = Request {
        id: request_id,
        target: sg.target,
        partner: sg.partner,
        t: sg.pred_time,
        events: sg
            .events
            .iter()
            .map(|se| WireEvent {
                id: se.event.id,
                src: se.event.src,
                dst: se.event.dst,
                ts: se.event.ts,
                t_v: se.t_v,
                hop: se.hop,
                x: se.event.features.clone(),
                src_feat_zeroed: se.src_feat_zeroed,
                anchor: se.anchor,
                parents: se.parents.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&req).expect("request serializes")
}

/// Parses a request line back into a subgraph (used by bridge servers).
/// Node features are not carried on the wire.
pub fn decode_request(line: &str) -> Result<(u64, ComputationalSubgraph)> {
    let req: Request = serde_json::from_str(line).map_err(|e| Error::Protocol(format!("malformed request: {e}")))?;
    let mut nodes: std::collections::BTreeSet<NodeId> = std::iter::once(req.target).chain(req.partner).collect();
    let n = req.events.len();
    let mut events = Vec::with_capacity(n);
    for w in req.events {
        if let Some(p) = w.parents.iter().find(|&&p| p >= n) {
            return Err(Error::Protocol(format!("event {} names missing parent {p}", w.id)));
        }
        nodes.insert(w.src);
        nodes.insert(w.dst);
        events.push(SubgraphEvent {
            event: Event { id: w.id, src: w.src, dst: w.dst, ts: w.ts, label: 0.0, features: w.x },
            hop: w.hop,
            t_v: w.t_v,
            anchor: w.anchor,
            parents: w.parents,
            src_feat_zeroed: w.src_feat_zeroed,
        });
    }
    let hops = events.iter().map(|e| e.hop).max().unwrap_or(1);
    Ok((
        req.id,
        ComputationalSubgraph {
            target: req.target,
            partner: req.partner,
            pred_time: req.t,
            hops,
            events,
            nodes,
            node_features: Default::default(),
        },
    ))
}

pub fn bridge_decode(line: &str, expected_id: u64) -> Result<f64> {
    let resp: Response = serde_json::from_str(line.trim())
        .map_err(|e| Error::Protocol(format!("malformed response {:?}: {e}", truncate(line))))?;
    if resp.id != expected_id {
        return Err(Error::Protocol(format!("response id {} does not match request id {expected_id}", resp.id)));
    }
    if !resp.logit.is_finite() {
        return Err(Error::Protocol(format!("non-finite logit {} for request {expected_id}", resp.logit)));
    }
    Ok(resp.logit)
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(120) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Encodes a response line. Non-finite logits are written as `null`, which
/// clients reject.
pub fn encode_response(id: u64, logit: f64) -> String {
    if logit.is_finite() {
        serde_json::to_string(&Response { id, logit }).expect("response serializes")
    } else {
        format!("{{\"id\":{id},\"logit\":null}}")
    }
}

/// Answers requests from `input` with `model` until end of input.
pub fn serve<M: Model, R: BufRead, W: Write>(model: &M, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line.map_err(|e| Error::Protocol(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, sg) = decode_request(&line)?;
        let logit = model.predict(&sg)?;
        writeln!(output, "{}", encode_response(id, logit))
            .and_then(|_| output.flush())
            .map_err(|e| Error::Protocol(format!("write failed: {e}")))?;
    }
    Ok(())
}

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// A pool of bridge subprocesses, one request in flight per process.
pub struct ExternalModel {
    conns: Vec<Mutex<Connection>>,
    next_id: AtomicU64,
    next_conn: AtomicUsize,
    timeout: Duration,
}

impl ExternalModel {
    /// Spawns `processes` copies of `command` (program followed by arguments).
    pub fn spawn(command: &[String], processes: usize, timeout: Duration) -> Result<Self> {
        let (program, args) =
            command.split_first().ok_or_else(|| Error::InvalidArgument("empty bridge command".into()))?;
        let mut conns = Vec::new();
        for _ in 0..processes.max(1) {
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::Protocol(format!("failed to start {program}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            conns.push(Mutex::new(Connection { child, stdin, lines: rx }));
        }
        Ok(ExternalModel { conns, next_id: AtomicU64::new(0), next_conn: AtomicUsize::new(0), timeout })
    }

    fn call(conn: &mut Connection, id: u64, request: &str, timeout: Duration) -> Result<f64> {
        writeln!(conn.stdin, "{request}")
            .and_then(|_| conn.stdin.flush())
            .map_err(|e| Error::Protocol(format!("bridge write failed: {e}")))?;
        match conn.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => bridge_decode(&line, id),
            Ok(Err(e)) => Err(Error::Protocol(format!("bridge read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Protocol("bridge closed its output".into())),
        }
    }
}

impl Model for ExternalModel {
    fn predict(&self, sg: &ComputationalSubgraph) -> Result<f64> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request = bridge_encode(sg, id);
        let start = self.next_conn.fetch_add(1, Ordering::Relaxed);
        let n = self.conns.len();
        for k in 0..n {
            if let Ok(mut conn) = self.conns[(start + k) % n].try_lock() {
                return Self::call(&mut conn, id, &request, self.timeout);
            }
        }
        let mut conn = self.conns[start % n].lock().map_err(|_| Error::Protocol("bridge connection poisoned".into()))?;
        Self::call(&mut conn, id, &request, self.timeout)
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        for c in &self.conns {
            if let Ok(mut c) = c.lock() {
                let _ = c.child.kill();
                let _ = c.child.wait();
            }
        }
    }
}
