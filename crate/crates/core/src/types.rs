//! Tags, labels, triples, messages and operation identifiers shared by every
//! protocol.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::CodedElement;
use crate::units::{self, Cost};

pub type ServerId = usize;

/// Client identifier. Ordered lexicographically; the empty string is
/// reserved for the initial tag and is never a valid client name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(String);

impl ClientId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    fn sentinel() -> Self {
        Self(String::new())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_sentinel(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClientId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Version identifier `(z, client)`, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(u64, ClientId)", into = "(u64, ClientId)")]
pub struct Tag {
    pub z: u64,
    pub client: ClientId,
}

impl Tag {
    pub fn new(z: u64, client: impl Into<ClientId>) -> Self {
        Self {
            z,
            client: client.into(),
        }
    }

    /// The minimum tag `t0`.
    pub fn initial() -> Self {
        Self {
            z: 0,
            client: ClientId::sentinel(),
        }
    }

    pub fn is_initial(&self) -> bool {
        self.z == 0 && self.client.is_sentinel()
    }

    /// The tag a writer forms after seeing `self` as the largest tag.
    pub fn next(&self, client: &ClientId) -> Tag {
        Tag {
            z: self.z + 1,
            client: client.clone(),
        }
    }
}

impl From<(u64, ClientId)> for Tag {
    fn from((z, client): (u64, ClientId)) -> Self {
        Self { z, client }
    }
}

impl From<Tag> for (u64, ClientId) {
    fn from(t: Tag) -> Self {
        (t.z, t.client)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_initial() {
            write!(f, "t0")
        } else {
            write!(f, "({},{})", self.z, self.client)
        }
    }
}

/// Server-side label of a stored triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Pre,
    Fin,
    PreGc,
    FinGc,
}

impl Label {
    /// `fin` or `(fin, gc)`.
    pub fn is_finalized(self) -> bool {
        matches!(self, Label::Fin | Label::FinGc)
    }

    pub fn is_gc(self) -> bool {
        matches!(self, Label::PreGc | Label::FinGc)
    }

    pub fn collected(self) -> Label {
        match self {
            Label::Pre | Label::PreGc => Label::PreGc,
            Label::Fin | Label::FinGc => Label::FinGc,
        }
    }

    pub fn finalized(self) -> Label {
        match self {
            Label::Pre | Label::Fin => Label::Fin,
            Label::PreGc | Label::FinGc => Label::FinGc,
        }
    }
}

/// Opaque object value of scenario-configured length.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Value(#[serde(with = "hex")] pub Vec<u8>);

impl Value {
    pub fn zeroed(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// `(tag, coded element or null, label)` plus the readers waiting on the
/// element (only used by the registration protocol).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub tag: Tag,
    pub element: Option<CodedElement>,
    pub label: Label,
    pub registered: BTreeSet<ClientId>,
}

impl Triple {
    pub fn new(tag: Tag, element: Option<CodedElement>, label: Label) -> Self {
        Self {
            tag,
            element,
            label,
            registered: BTreeSet::new(),
        }
    }

    /// gc-marked triples carry no element.
    pub fn is_well_formed(&self) -> bool {
        !(self.label.is_gc() && self.element.is_some())
    }

    pub fn stored_cost(&self) -> Cost {
        self.element.as_ref().map_or_else(units::zero, CodedElement::cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Read,
    Write,
}

/// `(client, sequence number)`; a client runs its operations one at a time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperationId {
    pub client: ClientId,
    pub seq: u32,
}

impl fmt::Display for OperationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.client, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeId {
    Server(ServerId),
    Client(ClientId),
}

impl NodeId {
    pub fn server(&self) -> Option<ServerId> {
        match self {
            NodeId::Server(s) => Some(*s),
            NodeId::Client(_) => None,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Server(s) => write!(f, "s{s}"),
            NodeId::Client(c) => write!(f, "c:{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    Query,
    QueryResp,
    PreWrite,
    PreWriteAck,
    FinalizeWrite,
    FinalizeWriteAck,
    FinalizeRead,
    FinalizeReadResp,
    Gossip,
    Get,
    GetResp,
    Put,
    PutAck,
    GetMeta,
    GetMetaResp,
    PutMeta,
    PutMetaAck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    None,
    Value(Value),
    Coded(CodedElement),
    Locations(BTreeSet<ServerId>),
}

impl Payload {
    /// 1 for a full value, `1/k` for a coded element, 0 for metadata.
    pub fn cost(&self) -> Cost {
        match self {
            Payload::Value(_) => units::units(1),
            Payload::Coded(e) => e.cost(),
            Payload::None | Payload::Locations(_) => units::zero(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Payload::None => "none",
            Payload::Value(_) => "value",
            Payload::Coded(_) => "coded",
            Payload::Locations(_) => "locations",
        }
    }
}

/// A protocol message. Every message is sent on behalf of one operation;
/// gossip carries the operation whose message triggered it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub from: NodeId,
    pub to: NodeId,
    pub op: OperationId,
    pub op_kind: OpKind,
    pub kind: MsgKind,
    pub tag: Option<Tag>,
    pub payload: Payload,
}

impl Message {
    pub fn cost(&self) -> Cost {
        self.payload.cost()
    }
}
