//! Client and server state machines.
//!
//! Every node is a single-owner reactor: the simulator hands it one event at
//! a time and collects the messages (and, for clients, phase transitions and
//! responses) it emits. Reactors never touch the network or each other.

pub mod abd;
pub mod cas;
pub mod casgc;
pub mod ccoas;
pub mod ldr;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codec::Codec;
use crate::quorum::QuorumSystem;
use crate::types::{
    ClientId, Message, MsgKind, NodeId, OpKind, OperationId, Payload, ServerId, Tag, Value,
};
use crate::units::Cost;

/// Protocol selection with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Protocol {
    Cas { k: usize },
    Casgc { k: usize, delta: usize },
    Ccoas,
    Abd,
    Ldr { directories: usize, replicas: usize },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Cas { .. } => "cas",
            Protocol::Casgc { .. } => "casgc",
            Protocol::Ccoas => "ccoas",
            Protocol::Abd => "abd",
            Protocol::Ldr { .. } => "ldr",
        }
    }

    /// Code dimension: the `k` of the `(n, k)` code, or 1 for replication.
    pub fn code_k(&self, n: usize, f: usize) -> usize {
        match *self {
            Protocol::Cas { k } | Protocol::Casgc { k, .. } => k,
            Protocol::Ccoas => n - f,
            Protocol::Abd | Protocol::Ldr { .. } => 1,
        }
    }

    pub fn delta(&self) -> Option<usize> {
        match *self {
            Protocol::Casgc { delta, .. } => Some(delta),
            _ => None,
        }
    }

    /// Whether servers keep `(tag, element, label)` triples with `fin` labels.
    pub fn is_coded(&self) -> bool {
        matches!(
            self,
            Protocol::Cas { .. } | Protocol::Casgc { .. } | Protocol::Ccoas
        )
    }

    /// Quorum system the clients wait on. For LDR this is the directory majority.
    pub fn quorum(&self, n: usize, f: usize) -> QuorumSystem {
        match *self {
            Protocol::Cas { k } | Protocol::Casgc { k, .. } => QuorumSystem::cas(n, f, k),
            Protocol::Ccoas => QuorumSystem::ccoas(n, f),
            Protocol::Abd => QuorumSystem::majority(n, f),
            Protocol::Ldr { directories, .. } => QuorumSystem::majority(directories, f),
        }
    }

    pub fn build_servers(&self, n: usize, f: usize, initial: &Value) -> Vec<Box<dyn ServerLogic>> {
        match *self {
            Protocol::Cas { k } => {
                let elements = Codec::from_nk(n, k).expect("validated").encode(initial.as_bytes());
                elements
                    .into_iter()
                    .enumerate()
                    .map(|(s, e)| Box::new(cas::CasServer::new(s, n, e)) as Box<dyn ServerLogic>)
                    .collect()
            }
            Protocol::Casgc { k, delta } => {
                let elements = Codec::from_nk(n, k).expect("validated").encode(initial.as_bytes());
                elements
                    .into_iter()
                    .enumerate()
                    .map(|(s, e)| {
                        Box::new(casgc::CasgcServer::new(s, n, delta, e)) as Box<dyn ServerLogic>
                    })
                    .collect()
            }
            Protocol::Ccoas => {
                let elements = Codec::from_nk(n, n - f)
                    .expect("validated")
                    .encode(initial.as_bytes());
                elements
                    .into_iter()
                    .map(|e| Box::new(ccoas::CcoasServer::new(e)) as Box<dyn ServerLogic>)
                    .collect()
            }
            Protocol::Abd => (0..n)
                .map(|_| Box::new(abd::AbdServer::new(initial.clone())) as Box<dyn ServerLogic>)
                .collect(),
            Protocol::Ldr {
                directories,
                replicas,
            } => ldr::build_servers(directories, replicas, f, initial),
        }
    }

    pub fn build_client(
        &self,
        id: ClientId,
        n: usize,
        f: usize,
        value_len: usize,
    ) -> Box<dyn ClientLogic> {
        match *self {
            Protocol::Cas { k } | Protocol::Casgc { k, .. } => Box::new(cas::CodedClient::new(
                id,
                n,
                QuorumSystem::cas(n, f, k).threshold,
                Arc::new(Codec::from_nk(n, k).expect("validated")),
                value_len,
                cas::ReadRule::QuorumWithK,
            )),
            Protocol::Ccoas => Box::new(cas::CodedClient::new(
                id,
                n,
                n - f,
                Arc::new(Codec::from_nk(n, n - f).expect("validated")),
                value_len,
                cas::ReadRule::CodedQuorum,
            )),
            Protocol::Abd => Box::new(abd::AbdClient::new(id, n)),
            Protocol::Ldr {
                directories,
                replicas,
            } => Box::new(ldr::LdrClient::new(id, directories, replicas, f)),
        }
    }
}

/// Client-side phase names as they appear in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Query,
    PreWrite,
    Finalize,
    Get,
    Put,
    GetMeta,
    PutMeta,
}

/// A message a reactor wants sent; the simulator stamps the sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: NodeId,
    pub op: OperationId,
    pub op_kind: OpKind,
    pub kind: MsgKind,
    pub tag: Option<Tag>,
    pub payload: Payload,
}

impl Outgoing {
    pub fn into_message(self, from: NodeId) -> Message {
        Message {
            from,
            to: self.to,
            op: self.op,
            op_kind: self.op_kind,
            kind: self.kind,
            tag: self.tag,
            payload: self.payload,
        }
    }

    /// Reply to `msg` on behalf of the same operation.
    pub fn reply(msg: &Message, kind: MsgKind, tag: Option<Tag>, payload: Payload) -> Self {
        Self {
            to: msg.from.clone(),
            op: msg.op.clone(),
            op_kind: msg.op_kind,
            kind,
            tag,
            payload,
        }
    }
}

/// What a client operation returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub value: Option<Value>,
    pub tag: Tag,
}

#[derive(Debug, Default)]
pub struct ClientEffects {
    pub sends: Vec<Outgoing>,
    pub phases: Vec<(Phase, Option<Tag>)>,
    pub response: Option<Response>,
}

impl ClientEffects {
    pub fn enter(&mut self, phase: Phase, tag: Option<Tag>) {
        self.phases.push((phase, tag));
    }
}

/// What the ledger and analysis see of one stored entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryView {
    pub label: Option<crate::types::Label>,
    pub stored: Cost,
}

pub trait ServerLogic: Send {
    fn handle(&mut self, msg: &Message, out: &mut Vec<Outgoing>);

    /// Current stored entries keyed by tag.
    fn view(&self) -> BTreeMap<Tag, EntryView>;
}

pub trait ClientLogic: Send {
    fn invoke(&mut self, op: OperationId, kind: OpKind, value: Option<Value>, out: &mut ClientEffects);
    fn handle(&mut self, msg: &Message, out: &mut ClientEffects);
}

/// Sends `kind` to each server in `targets` on behalf of `op`.
pub(crate) fn broadcast(
    targets: impl IntoIterator<Item = ServerId>,
    op: &OperationId,
    op_kind: OpKind,
    kind: MsgKind,
    tag: Option<Tag>,
    payload: impl Fn(ServerId) -> Payload,
) -> Vec<Outgoing> {
    targets
        .into_iter()
        .map(|s| Outgoing {
            to: NodeId::Server(s),
            op: op.clone(),
            op_kind,
            kind,
            tag: tag.clone(),
            payload: payload(s),
        })
        .collect()
}
