//! Fusion center ↔ agent protocol and its carriers.
//!
//! Two carriers move the same [`Message`] frames: [`CarrierKind::InProcess`]
//! calls the agent directly, [`CarrierKind::LocalSocket`] runs every agent on
//! its own thread behind a loopback TCP listener and exchanges
//! newline-delimited frames. Training outcomes are identical across carriers
//! because the codec round-trips every value exactly.
//!
//! Only predictions and tree summaries travel from agents to the fusion
//! center; feature columns never do.

mod agent;
mod ledger;
mod message;

use std::io::{BufRead, BufReader, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::AgentNode;
pub use ledger::{audit_memory, AuditLine, AuditReport, MemoryLedger, Party, OVERHEAD_SLOTS};
pub use message::{decode_message, encode_message, Message};

use crate::weak_learner::RegressionTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("framing error: {0}")]
    Framing(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("agent {agent} reported: {message}")]
    Agent { agent: usize, message: String },
    #[error("connection to agent {agent} failed: {detail}")]
    Connection { agent: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CarrierKind {
    #[default]
    InProcess,
    /// One loopback listener per agent at `port_base + j`; `port_base == 0`
    /// lets the OS pick ephemeral ports.
    LocalSocket { port_base: u16 },
}

impl CarrierKind {
    pub fn parse(s: &str, port_base: u16) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "inprocess" | "inproc" => Some(CarrierKind::InProcess),
            "localsocket" | "socket" | "tcp" => Some(CarrierKind::LocalSocket { port_base }),
            _ => None,
        }
    }
}

/// A request/response channel to one agent.
pub trait AgentLink: Send {
    fn exchange(&mut self, request: Message) -> Result<Message, TransportError>;
    /// Sends [`Message::Shutdown`] and waits for the agent loop to end.
    fn close(&mut self) -> Result<(), TransportError>;
}

pub struct InProcessLink {
    node: Option<AgentNode>,
}

impl InProcessLink {
    pub fn new(node: AgentNode) -> Self {
        InProcessLink { node: Some(node) }
    }
}

impl AgentLink for InProcessLink {
    fn exchange(&mut self, request: Message) -> Result<Message, TransportError> {
        let node = self.node.as_mut().ok_or_else(|| TransportError::Connection {
            agent: usize::MAX,
            detail: "agent already shut down".into(),
        })?;
        let agent = node.id();
        node.handle(request).ok_or(TransportError::Connection { agent, detail: "agent closed".into() })
    }

    fn close(&mut self) -> Result<(), TransportError> {
        if let Some(mut node) = self.node.take() {
            node.handle(Message::Shutdown);
        }
        Ok(())
    }
}

pub struct SocketLink {
    agent: usize,
    n: usize,
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    server: Option<JoinHandle<Result<(), TransportError>>>,
}

impl SocketLink {
    /// Binds a loopback listener, starts `node` serving on it and connects.
    pub fn spawn(node: AgentNode, port: u16) -> Result<Self, TransportError> {
        let agent = node.id();
        let n = node.n_rows();
        let conn_err = |e: std::io::Error| TransportError::Connection { agent, detail: e.to_string() };
        let listener = TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, port))).map_err(conn_err)?;
        let addr = listener.local_addr().map_err(conn_err)?;
        let server = std::thread::Builder::new()
            .name(format!("agent-{agent}"))
            .spawn(move || serve(node, listener))
            .map_err(conn_err)?;
        let writer = TcpStream::connect(addr).map_err(conn_err)?;
        writer.set_nodelay(true).map_err(conn_err)?;
        let reader = BufReader::new(writer.try_clone().map_err(conn_err)?);
        Ok(SocketLink { agent, n, writer, reader, server: Some(server) })
    }

    fn send(&mut self, m: &Message) -> Result<(), TransportError> {
        let frame = encode_message(m)?;
        self.writer
            .write_all(&frame)
            .map_err(|e| TransportError::Connection { agent: self.agent, detail: e.to_string() })
    }
}

/// Accepts one connection and answers frames until shutdown or EOF.
fn serve(mut node: AgentNode, listener: TcpListener) -> Result<(), TransportError> {
    let agent = node.id();
    let n = node.n_rows();
    let conn_err = |e: std::io::Error| TransportError::Connection { agent, detail: e.to_string() };
    let (stream, _) = listener.accept().map_err(conn_err)?;
    stream.set_nodelay(true).map_err(conn_err)?;
    let mut writer = stream.try_clone().map_err(conn_err)?;
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    loop {
        line.clear();
        if reader.read_until(b'\n', &mut line).map_err(conn_err)? == 0 {
            return Ok(());
        }
        let reply = match decode_message(&line, Some(n)) {
            Ok(msg) => match node.handle(msg) {
                Some(reply) => reply,
                None => return Ok(()),
            },
            Err(e) => Message::Error { run_id: 0, message: e.to_string() },
        };
        writer.write_all(&encode_message(&reply)?).map_err(conn_err)?;
    }
}

impl AgentLink for SocketLink {
    fn exchange(&mut self, request: Message) -> Result<Message, TransportError> {
        self.send(&request)?;
        let mut line = Vec::new();
        let read = self
            .reader
            .read_until(b'\n', &mut line)
            .map_err(|e| TransportError::Connection { agent: self.agent, detail: e.to_string() })?;
        if read == 0 {
            return Err(TransportError::Connection { agent: self.agent, detail: "connection closed".into() });
        }
        decode_message(&line, Some(self.n))
    }

    fn close(&mut self) -> Result<(), TransportError> {
        let Some(server) = self.server.take() else {
            return Ok(());
        };
        self.send(&Message::Shutdown)?;
        server.join().map_err(|_| TransportError::Connection {
            agent: self.agent,
            detail: "agent thread panicked".into(),
        })?
    }
}

impl Drop for SocketLink {
    fn drop(&mut self) {
        let _ = self.close();
    }
}

/// Builds a link of the requested kind for agent `j`.
pub fn connect(kind: CarrierKind, node: AgentNode) -> Result<Box<dyn AgentLink>, TransportError> {
    match kind {
        CarrierKind::InProcess => Ok(Box::new(InProcessLink::new(node))),
        CarrierKind::LocalSocket { port_base } => {
            let port = if port_base == 0 {
                0
            } else {
                port_base.checked_add(node.id() as u16).ok_or_else(|| TransportError::Connection {
                    agent: node.id(),
                    detail: "port range overflow".into(),
                })?
            };
            Ok(Box::new(SocketLink::spawn(node, port)?))
        }
    }
}

/// Message and scalar counts accumulated by a [`Transport`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub messages: usize,
    pub scalars: usize,
}

/// A fitted candidate as seen by the fusion center.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReply {
    pub delta: Vec<f64>,
    pub summary: RegressionTree,
    pub leaves: usize,
}

/// Fusion-side endpoint holding one link per agent.
pub struct Transport {
    links: Vec<Box<dyn AgentLink>>,
    next_run_id: u64,
    traffic: Traffic,
    closed: bool,
}

impl Transport {
    pub fn new(links: Vec<Box<dyn AgentLink>>) -> Self {
        Transport { links, next_run_id: 1, traffic: Traffic::default(), closed: false }
    }

    /// Starts every agent behind the chosen carrier.
    pub fn start(kind: CarrierKind, nodes: Vec<AgentNode>) -> Result<Self, TransportError> {
        let links = nodes.into_iter().map(|node| connect(kind, node)).collect::<Result<Vec<_>, _>>()?;
        Ok(Transport::new(links))
    }

    pub fn n_agents(&self) -> usize {
        self.links.len()
    }

    pub fn traffic(&self) -> Traffic {
        self.traffic
    }

    fn call(&mut self, agent: usize, build: impl FnOnce(u64) -> Message) -> Result<Message, TransportError> {
        let run_id = self.next_run_id;
        self.next_run_id += 1;
        let request = build(run_id);
        self.traffic.messages += 1;
        self.traffic.scalars += request.scalar_count();
        let link = self.links.get_mut(agent).ok_or_else(|| TransportError::Protocol(format!("no agent {agent}")))?;
        let reply = link.exchange(request)?;
        self.traffic.messages += 1;
        self.traffic.scalars += reply.scalar_count();
        if let Message::Error { message, .. } = reply {
            return Err(TransportError::Agent { agent, message });
        }
        if reply.run_id() != Some(run_id) {
            return Err(TransportError::Protocol(format!(
                "agent {agent} answered run {:?} to request {run_id}",
                reply.run_id()
            )));
        }
        Ok(reply)
    }

    pub fn fit(&mut self, agent: usize, residual: &[f64], commit: bool) -> Result<FitReply, TransportError> {
        let residual = residual.to_vec();
        match self.call(agent, |run_id| Message::FitRequest { run_id, residual, commit })? {
            Message::FitResponse { delta_predictions, model_summary, leaves, .. } => {
                Ok(FitReply { delta: delta_predictions, summary: model_summary, leaves })
            }
            other => Err(TransportError::Protocol(format!("expected fit_response, got {}", other.kind()))),
        }
    }

    pub fn commit(&mut self, agent: usize) -> Result<Vec<f64>, TransportError> {
        match self.call(agent, |run_id| Message::Commit { run_id })? {
            Message::CommitAck { delta_predictions, .. } => Ok(delta_predictions),
            other => Err(TransportError::Protocol(format!("expected commit_ack, got {}", other.kind()))),
        }
    }

    /// `rows` holds the agent's own feature values, one inner vector per row.
    pub fn predict(&mut self, agent: usize, rows: Vec<Vec<f64>>) -> Result<Vec<f64>, TransportError> {
        let expected = rows.len();
        match self.call(agent, |run_id| Message::PredictRequest { run_id, rows })? {
            Message::PredictResponse { values, .. } if values.len() == expected => Ok(values),
            Message::PredictResponse { values, .. } => Err(TransportError::Protocol(format!(
                "predict_response has {} values for {expected} rows",
                values.len()
            ))),
            other => Err(TransportError::Protocol(format!("expected predict_response, got {}", other.kind()))),
        }
    }

    pub fn shutdown(&mut self) -> Result<(), TransportError> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let mut first_err = None;
        for link in &mut self.links {
            self.traffic.messages += 1;
            if let Err(e) = link.close() {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }
}

impl Drop for Transport {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
